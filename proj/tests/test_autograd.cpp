// SPDX-License-Identifier: Apache-2.0
// Finite-difference checks of every graph op in double precision.
#include <functional>
#include <random>

#include "ddnet/autograd.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ddnet;
using G = Graph<double>;
using Var = G::Var;
using Map = Planes<double>;

namespace {

struct Case {
  ParameterStore<double> params;
  Map input;
  std::function<Var(G&, const Var&)> op;
};

/// Scalar objective <op(x), r> for a fixed random projection r.
double objective(const Case& c, const Map& x, const Map& r) {
  G g(c.params, false);
  const auto y = c.op(g, g.constant(x));
  return (y->value.matrix().array() * r.matrix().array()).sum();
}

/// Relative error ||analytic - numeric|| / max(||numeric||, tiny) over the
/// input and every parameter.
void check_gradients(Case c, double tol = 1e-6, double h = 1e-6) {
  Map r;
  {
    G g(c.params, false);
    const auto y = c.op(g, g.constant(c.input));
    r = testing::random_planes_d(y->value.channels(), y->value.height(), y->value.width(), 77, -1, 1);
  }
  G g(c.params, true);
  const auto x = g.input(c.input);
  const auto y = c.op(g, x);
  g.backward({{y, &r}});
  const auto pgrads = g.take_param_grads();

  Eigen::VectorXd analytic(c.input.size()), numeric(c.input.size());
  for (Eigen::Index i = 0; i < c.input.size(); ++i) {
    Map xp = c.input, xm = c.input;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    numeric(i) = (objective(c, xp, r) - objective(c, xm, r)) / (2 * h);
    analytic(i) = x->has_grad() ? x->grad.data()[i] : 0.0;
  }
  CHECK((analytic - numeric).norm() <= tol * std::max(numeric.norm(), 1e-12));

  for (int p = 0; p < c.params.size(); ++p) {
    auto& value = c.params[p].value;
    Eigen::VectorXd a(value.size()), n(value.size());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double fp = objective(c, c.input, r);
      value.data()[i] = saved - h;
      const double fm = objective(c, c.input, r);
      value.data()[i] = saved;
      n(i) = (fp - fm) / (2 * h);
      a(i) = pgrads[p].data()[i];
    }
    INFO("parameter " << c.params[p].name);
    CHECK((a - n).norm() <= tol * std::max(n.norm(), 1e-12));
  }
}

int add_random(ParameterStore<double>& ps, const std::string& name, Eigen::Index rows, Eigen::Index cols,
               std::uint64_t seed, double lo = -0.5, double hi = 0.5) {
  const int idx = ps.add(name, {int(rows), int(cols)}, rows, cols, Init::kaiming);
  ps[idx].value = testing::random_planes_d(1, int(rows), int(cols), seed, lo, hi).plane(0);
  return idx;
}

ConvSpec random_conv(ParameterStore<double>& ps, int cin, int cout, int k, int stride, std::uint64_t seed) {
  ConvSpec s;
  s.cin = cin;
  s.cout = cout;
  s.k = k;
  s.stride = stride;
  s.weight = add_random(ps, "w", cout, Eigen::Index(cin) * k * k, seed);
  s.bias = add_random(ps, "b", cout, 1, seed + 1);
  return s;
}

}  // namespace

TEST_CASE("conv2d forward matches a direct zero-padded correlation") {
  ParameterStore<double> ps;
  const auto spec = random_conv(ps, 2, 3, 3, 2, 5);
  const Map x = testing::random_planes_d(2, 7, 6, 1);
  const Map y = kernels::conv_forward(x, ps[spec.weight].value, ps[spec.bias].value, spec);
  CHECK(y.height() == 4);
  CHECK(y.width() == 3);
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 4; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double acc = ps[spec.bias].value(o, 0);
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              const int iy = oy * 2 + i - 1, ix = ox * 2 + j - 1;
              if (iy < 0 || iy >= 7 || ix < 0 || ix >= 6) continue;
              acc += ps[spec.weight].value(o, c * 9 + i * 3 + j) * x(c, iy, ix);
            }
        CHECK(y(o, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv2d forward is independent of the im2col chunking") {
  ParameterStore<double> ps;
  const auto spec = random_conv(ps, 3, 4, 3, 1, 6);
  const Map x = testing::random_planes_d(3, 9, 13, 2);
  const Map y = kernels::conv_forward(x, ps[spec.weight].value, ps[spec.bias].value, spec);
  RowMatrix<double> col;
  Map manual(4, 9, 13);
  for (Eigen::Index o0 = 0; o0 < 117; o0 += 10) {
    const Eigen::Index n = std::min<Eigen::Index>(10, 117 - o0);
    kernels::im2col(x, 3, 1, 13, o0, n, col);
    manual.matrix().middleCols(o0, n) = ps[spec.weight].value * col;
  }
  manual.matrix().colwise() += ps[spec.bias].value.col(0);
  CHECK((manual.matrix() - y.matrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("conv2d gradients") {
  for (auto [k, stride] : {std::pair{1, 1}, {3, 1}, {3, 2}, {7, 1}}) {
    Case c;
    const auto spec = random_conv(c.params, 2, 3, k, stride, 10 + k);
    c.input = testing::random_planes_d(2, 6, 5, 3);
    c.op = [spec](G& g, const Var& x) { return ops::conv2d(g, x, spec); };
    INFO("k=" << k << " stride=" << stride);
    check_gradients(std::move(c));
  }
}

TEST_CASE("layer norm gradients and statistics") {
  Case c;
  const int gamma = add_random(c.params, "gamma", 3, 1, 4, 0.5, 1.5);
  const int beta = add_random(c.params, "beta", 3, 1, 5);
  c.input = testing::random_planes_d(3, 4, 5, 6, -2, 2);
  c.op = [gamma, beta](G& g, const Var& x) { return ops::layer_norm(g, x, gamma, beta); };
  check_gradients(c);

  ParameterStore<double> unit;
  const int g1 = unit.add("g", {3}, 3, 1, Init::ones);
  const int b0 = unit.add("b", {3}, 3, 1, Init::zeros);
  unit[g1].value.setOnes();
  G g(unit, false);
  const auto y = ops::layer_norm(g, g.constant(c.input), g1, b0);
  const double mean = y->value.matrix().mean();
  const double var = (y->value.matrix().array() - mean).square().mean();
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("prelu values and gradients") {
  Case c;
  const int slope = c.params.add("a", {2}, 2, 1, Init::constant);
  c.params[slope].value << 0.25, -0.1;
  Map x(2, 1, 2);
  x(0, 0, 0) = -1;
  x(0, 0, 1) = 2;
  x(1, 0, 0) = -3;
  x(1, 0, 1) = 0.5;
  {
    G g(c.params, false);
    const auto y = ops::prelu(g, g.constant(x), slope);
    CHECK(y->value(0, 0, 0) == -0.25);
    CHECK(y->value(0, 0, 1) == 2.0);
    CHECK(y->value(1, 0, 0) == doctest::Approx(0.3));
  }
  c.input = testing::random_planes_d(2, 3, 4, 8, -1, 1);
  c.op = [slope](G& g, const Var& v) { return ops::prelu(g, v, slope); };
  check_gradients(c);
}

TEST_CASE("sigmoid, gate and channel pool gradients") {
  Case s;
  s.input = testing::random_planes_d(2, 3, 3, 9, -3, 3);
  s.op = [](G& g, const Var& x) { return ops::sigmoid(g, x); };
  check_gradients(s);

  Case p;
  p.input = testing::random_planes_d(4, 3, 5, 10);
  p.op = [](G& g, const Var& x) { return ops::channel_pool(g, x); };
  check_gradients(p);

  Case gate_case;
  const auto squeeze = random_conv(gate_case.params, 2, 1, 1, 1, 12);
  gate_case.input = testing::random_planes_d(3, 4, 4, 11, -1, 1);
  gate_case.op = [squeeze](G& g, const Var& x) {
    auto att = ops::sigmoid(g, ops::conv2d(g, ops::channel_pool(g, x), squeeze));
    return ops::gate(g, att, x);
  };
  check_gradients(gate_case);
}

TEST_CASE("channel pool of a constant-per-channel map") {
  ParameterStore<double> none;
  Map x(3, 2, 2);
  x.matrix().row(0).setConstant(0.2);
  x.matrix().row(1).setConstant(0.9);
  x.matrix().row(2).setConstant(0.4);
  G g(none, false);
  const auto y = ops::channel_pool(g, g.constant(x));
  CHECK(y->value.channels() == 2);
  CHECK(y->value.matrix().row(0).isConstant(0.5, 1e-12));
  CHECK(y->value.matrix().row(1).isConstant(0.9, 1e-12));
}

TEST_CASE("upsample2x: constant preservation and gradients") {
  ParameterStore<double> none;
  {
    G g(none, false);
    const auto y = ops::upsample2x(g, g.constant(Map::constant(2, 3, 4, 0.7)));
    CHECK(y->value.height() == 6);
    CHECK(y->value.width() == 8);
    CHECK((y->value.matrix().array() - 0.7).abs().maxCoeff() < 1e-15);
  }
  {
    // Half-pixel centres: output 1 sits a quarter pixel right of input 0.
    Map ramp(1, 1, 3);
    ramp(0, 0, 0) = 0;
    ramp(0, 0, 1) = 1;
    ramp(0, 0, 2) = 2;
    G g(none, false);
    const auto y = ops::upsample2x(g, g.constant(ramp));
    CHECK(y->value(0, 0, 0) == 0.0);
    CHECK(y->value(0, 0, 1) == doctest::Approx(0.25));
    CHECK(y->value(0, 0, 2) == doctest::Approx(0.75));
    CHECK(y->value(0, 0, 5) == 2.0);
  }
  Case c;
  c.input = testing::random_planes_d(2, 3, 4, 13);
  c.op = [](G& g, const Var& x) { return ops::upsample2x(g, x); };
  check_gradients(c);
}

TEST_CASE("add, concat and clamp01 gradients") {
  Case c;
  const auto conv = random_conv(c.params, 2, 2, 3, 1, 14);
  c.input = testing::random_planes_d(2, 4, 4, 15, 0.2, 0.8);
  c.op = [conv](G& g, const Var& x) {
    auto y = ops::add(g, ops::conv2d(g, x, conv), x);
    return ops::concat<double>(g, {y, x, y});
  };
  check_gradients(c);

  Case k;
  k.input = testing::random_planes_d(1, 4, 4, 16, -0.5, 1.5);
  // Keep samples away from the kinks at 0 and 1.
  for (Eigen::Index i = 0; i < k.input.size(); ++i)
    if (std::abs(k.input.data()[i]) < 0.05 || std::abs(k.input.data()[i] - 1) < 0.05) k.input.data()[i] = 0.5;
  k.op = [](G& g, const Var& x) { return ops::clamp01(g, x); };
  check_gradients(k);
}

TEST_CASE("output clamp passes gradients that lead back into range") {
  ParameterStore<double> none;
  G g(none, true);
  Map in(1, 1, 4);
  in(0, 0, 0) = 1.5;   // above, loss wants it smaller: passes
  in(0, 0, 1) = 1.5;   // above, loss wants it larger: blocked
  in(0, 0, 2) = -0.5;  // below, loss wants it larger: passes
  in(0, 0, 3) = 0.4;   // inside: passes
  const auto x = g.input(in);
  const auto y = ops::clamp01_output(g, x);
  CHECK(y->value(0, 0, 0) == 1.0);
  CHECK(y->value(0, 0, 2) == 0.0);
  Map seed(1, 1, 4);
  seed(0, 0, 0) = 2;
  seed(0, 0, 1) = -2;
  seed(0, 0, 2) = -3;
  seed(0, 0, 3) = 5;
  g.backward({{y, &seed}});
  CHECK(x->grad(0, 0, 0) == 2);
  CHECK(x->grad(0, 0, 1) == 0);
  CHECK(x->grad(0, 0, 2) == -3);
  CHECK(x->grad(0, 0, 3) == 5);
}

TEST_CASE("inference mode records nothing and rejects backward") {
  ParameterStore<double> none;
  G g(none, false);
  const auto x = g.input(Map::constant(1, 2, 2, 0.5));
  CHECK_FALSE(x->tracked);
  const auto y = ops::sigmoid(g, x);
  Map seed = Map::constant(1, 2, 2, 1.0);
  CHECK_THROWS_AS(g.backward({{y, &seed}}), Error);
}
