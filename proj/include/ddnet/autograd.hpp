// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <tuple>
#include <utility>
#include <vector>

#include "ddnet/parameters.hpp"

namespace ddnet {

/// Per-call layer-norm statistics of one forward pass: (mean, 1/std).
using NormStatistics = std::vector<std::pair<double, double>>;

/// Reverse-mode recorder over feature maps. In inference mode nothing is
/// recorded and intermediate maps are released as soon as they go out of
/// scope; in training mode each op pushes a closure that propagates the
/// output gradient to its inputs and to the parameter gradient buffers.
template <typename Scalar>
class Graph {
 public:
  using Map = Planes<Scalar>;
  using Matrix = RowMatrix<Scalar>;

  struct Node {
    Map value;
    Map grad;
    bool tracked = false;

    bool has_grad() const { return !grad.empty(); }
    void add_grad(const Matrix& g) {
      if (!has_grad())
        grad = Map(value.height(), value.width(), g);
      else
        grad.matrix() += g;
    }
  };
  using Var = std::shared_ptr<Node>;

  Graph(const ParameterStore<Scalar>& params, bool record) : params_(params), record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  /// Layer-norm statistics (mean, 1/std) in call order. Each layer norm
  /// appends its input's own statistics to `capture`; with `replay` set it
  /// normalizes with the next recorded pair instead.
  void capture_norm_stats(NormStatistics* capture) { capture_ = capture; }
  void replay_norm_stats(const NormStatistics* replay) {
    require(!record_ || !replay, "normalization replay is inference-only");
    replay_ = replay;
    replay_pos_ = 0;
  }
  const NormStatistics* norm_replay() const { return replay_; }
  const NormStatistics* norm_capture() const { return capture_; }
  std::pair<double, double> next_norm_stats() {
    require(replay_pos_ < replay_->size(), "normalization replay ran out of statistics");
    return (*replay_)[replay_pos_++];
  }
  void note_norm_stats(double mean, double inv_std) {
    if (capture_) capture_->emplace_back(mean, inv_std);
  }
  const ParameterStore<Scalar>& params() const { return params_; }
  const Matrix& param(int index) const { return params_[index].value; }

  /// Leaf that never receives a gradient.
  Var constant(Map value) { return make(std::move(value), false); }
  /// Leaf whose gradient is kept (input sensitivity checks).
  Var input(Map value) { return make(std::move(value), record_); }

  Var make(Map value, bool tracked) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->tracked = tracked;
    return node;
  }
  Var result(Map value) { return make(std::move(value), record_); }

  void on_backward(std::function<void()> fn) {
    if (record_) tape_.push_back(std::move(fn));
  }

  Matrix& param_grad(int index) {
    if (param_grads_.empty()) param_grads_ = params_.zeros_like();
    return param_grads_[index];
  }

  /// Seeds output gradients and runs the tape in reverse.
  void backward(std::initializer_list<std::pair<Var, const Map*>> seeds) {
    require(record_, "backward on a graph built in inference mode");
    for (const auto& [var, seed] : seeds)
      if (var && seed) var->add_grad(seed->matrix());
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    tape_.clear();
  }

  /// Parameter gradients accumulated by backward(); zero for untouched ones.
  std::vector<Matrix> take_param_grads() {
    if (param_grads_.empty()) param_grads_ = params_.zeros_like();
    return std::move(param_grads_);
  }

 private:
  const ParameterStore<Scalar>& params_;
  bool record_;
  std::vector<std::function<void()>> tape_;
  std::vector<Matrix> param_grads_;
  NormStatistics* capture_ = nullptr;
  const NormStatistics* replay_ = nullptr;
  std::size_t replay_pos_ = 0;
};

/// Convolution layer handle: parameter indices plus geometry. Zero padding of
/// k/2 on every side.
struct ConvSpec {
  int weight = -1;
  int bias = -1;
  int cin = 0;
  int cout = 0;
  int k = 1;
  int stride = 1;

  int out_extent(int n) const { return (n + 2 * (k / 2) - k) / stride + 1; }
};

namespace kernels {

/// Calls fn(j, ox0, count, iy, ix0) for each run of `count` consecutive output
/// columns j.. of one output row whose inputs lie on input row iy starting at
/// ix0 (stepping by stride). Runs outside the image are reported with iy < 0.
template <typename Fn>
void for_each_run(int h, int w, int k_off_y, int k_off_x, int stride, int wout, Eigen::Index o0, Eigen::Index n,
                  Fn&& fn) {
  Eigen::Index j = 0;
  while (j < n) {
    const Eigen::Index o = o0 + j;
    const int oy = static_cast<int>(o / wout), ox = static_cast<int>(o % wout);
    const int len = static_cast<int>(std::min<Eigen::Index>(wout - ox, n - j));
    const int iy = oy * stride + k_off_y;
    if (iy < 0 || iy >= h) {
      fn(j, len, -1, 0, 0);
    } else {
      // valid ox satisfy 0 <= ox*stride + k_off_x < w
      int lo = k_off_x >= 0 ? 0 : (-k_off_x + stride - 1) / stride;
      int hi = (w - 1 - k_off_x) >= 0 ? (w - 1 - k_off_x) / stride + 1 : 0;
      lo = std::clamp(lo, ox, ox + len);
      hi = std::clamp(hi, lo, ox + len);
      if (lo > ox) fn(j, lo - ox, -1, 0, 0);
      if (hi > lo) fn(j + (lo - ox), hi - lo, iy, lo * stride + k_off_x, 1);
      if (ox + len > hi) fn(j + (hi - ox), ox + len - hi, -1, 0, 0);
    }
    j += len;
  }
}

template <typename Scalar>
void im2col(const Planes<Scalar>& x, int k, int stride, int wout, Eigen::Index o0, Eigen::Index n,
            RowMatrix<Scalar>& col) {
  const int h = x.height(), w = x.width(), pad = k / 2;
  col.resize(Eigen::Index(x.channels()) * k * k, n);
  Eigen::Index r = 0;
  for (int c = 0; c < x.channels(); ++c) {
    const Scalar* src = x.data() + c * x.pixels();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++r) {
        Scalar* dst = col.data() + r * n;
        for_each_run(h, w, ky - pad, kx - pad, stride, wout, o0, n,
                     [&](Eigen::Index j, int len, int iy, int ix0, int valid) {
                       Scalar* d = dst + j;
                       if (!valid) {
                         std::fill(d, d + len, Scalar(0));
                       } else {
                         const Scalar* s = src + Eigen::Index(iy) * w + ix0;
                         if (stride == 1)
                           std::copy(s, s + len, d);
                         else
                           for (int t = 0; t < len; ++t) d[t] = s[t * stride];
                       }
                     });
      }
  }
}

template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& col, int k, int stride, int wout, Eigen::Index o0, Planes<Scalar>& dx) {
  const int h = dx.height(), w = dx.width(), pad = k / 2;
  const Eigen::Index n = col.cols();
  Eigen::Index r = 0;
  for (int c = 0; c < dx.channels(); ++c) {
    Scalar* dst = dx.data() + c * dx.pixels();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++r) {
        const Scalar* src = col.data() + r * n;
        for_each_run(h, w, ky - pad, kx - pad, stride, wout, o0, n,
                     [&](Eigen::Index j, int len, int iy, int ix0, int valid) {
                       if (!valid) return;
                       Scalar* d = dst + Eigen::Index(iy) * w + ix0;
                       const Scalar* s = src + j;
                       for (int t = 0; t < len; ++t) d[t * stride] += s[t];
                     });
      }
  }
}

/// Output columns per im2col chunk; keeps the scratch buffer cache-sized.
inline Eigen::Index chunk_columns(Eigen::Index rows, Eigen::Index total) {
  const Eigen::Index budget = Eigen::Index(1) << 17;
  return std::clamp<Eigen::Index>(budget / std::max<Eigen::Index>(rows, 1), 1, total);
}

template <typename Scalar>
Planes<Scalar> conv_forward(const Planes<Scalar>& x, const RowMatrix<Scalar>& weight, const RowMatrix<Scalar>& bias,
                            const ConvSpec& spec) {
  const int hout = spec.out_extent(x.height()), wout = spec.out_extent(x.width());
  Planes<Scalar> y(hout, wout, RowMatrix<Scalar>(spec.cout, Eigen::Index(hout) * wout));
  if (spec.k == 1 && spec.stride == 1) {
    y.matrix().noalias() = weight * x.matrix();
    y.matrix().colwise() += bias.col(0);
  } else {
    const Eigen::Index total = y.pixels();
    const Eigen::Index chunk = chunk_columns(weight.cols(), total);
    RowMatrix<Scalar> col;
    for (Eigen::Index o0 = 0; o0 < total; o0 += chunk) {
      const Eigen::Index n = std::min(chunk, total - o0);
      im2col(x, spec.k, spec.stride, wout, o0, n, col);
      auto block = y.matrix().middleCols(o0, n);
      block.noalias() = weight * col;
      block.colwise() += bias.col(0);
    }
  }
  return y;
}

}  // namespace kernels

namespace ops {

template <typename Scalar>
using Var = typename Graph<Scalar>::Var;

template <typename Scalar>
Var<Scalar> conv2d(Graph<Scalar>& g, const Var<Scalar>& x, const ConvSpec& spec) {
  require(x->value.channels() == spec.cin, "conv2d: expected " + std::to_string(spec.cin) + " input channels, got " +
                                               std::to_string(x->value.channels()));
  auto y = g.result(kernels::conv_forward(x->value, g.param(spec.weight), g.param(spec.bias), spec));
  g.on_backward([&g, x, y, spec] {
    if (!y->has_grad()) return;
    const auto& w = g.param(spec.weight);
    const auto& dy = y->grad.matrix();
    g.param_grad(spec.bias).col(0) += dy.rowwise().sum();
    auto& dw = g.param_grad(spec.weight);
    Planes<Scalar> dx;
    if (x->tracked) dx = Planes<Scalar>(spec.cin, x->value.height(), x->value.width());
    if (spec.k == 1 && spec.stride == 1) {
      dw.noalias() += dy * x->value.matrix().transpose();
      if (x->tracked) dx.matrix().noalias() = w.transpose() * dy;
    } else {
      const int wout = y->value.width();
      const Eigen::Index total = dy.cols();
      const Eigen::Index chunk = kernels::chunk_columns(w.cols(), total);
      RowMatrix<Scalar> col, dcol;
      for (Eigen::Index o0 = 0; o0 < total; o0 += chunk) {
        const Eigen::Index n = std::min(chunk, total - o0);
        kernels::im2col(x->value, spec.k, spec.stride, wout, o0, n, col);
        dw.noalias() += dy.middleCols(o0, n) * col.transpose();
        if (x->tracked) {
          dcol.noalias() = w.transpose() * dy.middleCols(o0, n);
          kernels::col2im_add(dcol, spec.k, spec.stride, wout, o0, dx);
        }
      }
    }
    if (x->tracked) x->add_grad(dx.matrix());
  });
  return y;
}

template <typename Scalar>
Var<Scalar> add(Graph<Scalar>& g, const Var<Scalar>& a, const Var<Scalar>& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch");
  Planes<Scalar> v = a->value;
  v.matrix() += b->value.matrix();
  auto y = g.result(std::move(v));
  g.on_backward([a, b, y] {
    if (!y->has_grad()) return;
    if (a->tracked) a->add_grad(y->grad.matrix());
    if (b->tracked) b->add_grad(y->grad.matrix());
  });
  return y;
}

template <typename Scalar>
Var<Scalar> concat(Graph<Scalar>& g, const std::vector<Var<Scalar>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  int channels = 0;
  for (const auto& p : parts) {
    require(p->value.same_extent(parts.front()->value), "concat: spatial mismatch");
    channels += p->value.channels();
  }
  Planes<Scalar> v(channels, parts.front()->value.height(), parts.front()->value.width());
  int offset = 0;
  for (const auto& p : parts) {
    v.matrix().middleRows(offset, p->value.channels()) = p->value.matrix();
    offset += p->value.channels();
  }
  auto y = g.result(std::move(v));
  g.on_backward([parts, y] {
    if (!y->has_grad()) return;
    int off = 0;
    for (const auto& p : parts) {
      const int c = p->value.channels();
      if (p->tracked) p->add_grad(y->grad.matrix().middleRows(off, c));
      off += c;
    }
  });
  return y;
}

/// Layer normalization over all of (C, H, W) of one sample with a
/// per-channel affine transform.
template <typename Scalar>
Var<Scalar> layer_norm(Graph<Scalar>& g, const Var<Scalar>& x, int gamma, int beta, double eps = 1e-5) {
  const auto& m = x->value.matrix();
  double mean = 0, inv_std_d = 0;
  if (g.norm_capture() || !g.norm_replay()) {
    const double n = static_cast<double>(m.size());
    double sum = 0, sq = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) sum += m.data()[i];
    mean = sum / n;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double d = m.data()[i] - mean;
      sq += d * d;
    }
    inv_std_d = 1.0 / std::sqrt(sq / n + eps);
    g.note_norm_stats(mean, inv_std_d);
  }
  if (g.norm_replay()) std::tie(mean, inv_std_d) = g.next_norm_stats();
  const Scalar inv_std = static_cast<Scalar>(inv_std_d);
  Planes<Scalar> v = x->value;
  v.matrix().array() = (v.matrix().array() - static_cast<Scalar>(mean)) * inv_std;
  Planes<Scalar> xhat;
  if (g.recording()) xhat = v;
  const auto& gm = g.param(gamma);
  const auto& bt = g.param(beta);
  for (int c = 0; c < v.channels(); ++c) v.channel(c).array() = v.channel(c).array() * gm(c, 0) + bt(c, 0);
  auto y = g.result(std::move(v));
  if (g.recording()) {
    g.on_backward([&g, x, y, xhat = std::move(xhat), gamma, beta, inv_std] {
      if (!y->has_grad()) return;
      const auto& dy = y->grad.matrix();
      const auto& gm = g.param(gamma);
      auto& dgamma = g.param_grad(gamma);
      auto& dbeta = g.param_grad(beta);
      RowMatrix<Scalar> dxhat(dy.rows(), dy.cols());
      for (Eigen::Index c = 0; c < dy.rows(); ++c) {
        dgamma(c, 0) += (dy.row(c).array() * xhat.matrix().row(c).array()).sum();
        dbeta(c, 0) += dy.row(c).sum();
        dxhat.row(c) = dy.row(c) * gm(c, 0);
      }
      if (!x->tracked) return;
      const double count = static_cast<double>(dy.size());
      double s1 = 0, s2 = 0;
      for (Eigen::Index i = 0; i < dxhat.size(); ++i) {
        s1 += dxhat.data()[i];
        s2 += double(dxhat.data()[i]) * xhat.data()[i];
      }
      const Scalar a = static_cast<Scalar>(s1 / count), b = static_cast<Scalar>(s2 / count);
      RowMatrix<Scalar> dx = ((dxhat.array() - a - xhat.matrix().array() * b) * inv_std).matrix();
      x->add_grad(dx);
    });
  }
  return y;
}

template <typename Scalar>
Var<Scalar> prelu(Graph<Scalar>& g, const Var<Scalar>& x, int slope) {
  const auto& a = g.param(slope);
  Planes<Scalar> v = x->value;
  for (int c = 0; c < v.channels(); ++c) {
    const Scalar s = a(c, 0);
    v.channel(c) = v.channel(c).unaryExpr([s](Scalar t) { return t >= Scalar(0) ? t : s * t; });
  }
  auto y = g.result(std::move(v));
  g.on_backward([&g, x, y, slope] {
    if (!y->has_grad()) return;
    const auto& a = g.param(slope);
    auto& da = g.param_grad(slope);
    const auto& xv = x->value.matrix();
    const auto& dy = y->grad.matrix();
    RowMatrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index c = 0; c < dy.rows(); ++c) {
      const auto neg = (xv.row(c).array() < Scalar(0)).template cast<Scalar>();
      da(c, 0) += (dy.row(c).array() * xv.row(c).array() * neg).sum();
      dx.row(c).array() = dy.row(c).array() * (Scalar(1) - neg + neg * a(c, 0));
    }
    if (x->tracked) x->add_grad(dx);
  });
  return y;
}

template <typename Scalar>
Var<Scalar> sigmoid(Graph<Scalar>& g, const Var<Scalar>& x) {
  Planes<Scalar> v = x->value;
  v.matrix() = v.matrix().unaryExpr([](Scalar t) { return Scalar(1) / (Scalar(1) + std::exp(-t)); });
  auto y = g.result(std::move(v));
  g.on_backward([x, y] {
    if (!y->has_grad() || !x->tracked) return;
    const auto s = y->value.matrix().array();
    x->add_grad((y->grad.matrix().array() * s * (Scalar(1) - s)).matrix());
  });
  return y;
}

/// Channel-wise average and max, stacked as a 2-channel map.
template <typename Scalar>
Var<Scalar> channel_pool(Graph<Scalar>& g, const Var<Scalar>& x) {
  const auto& m = x->value.matrix();
  const Eigen::Index n = m.cols();
  Planes<Scalar> v(2, x->value.height(), x->value.width());
  std::vector<int> argmax(static_cast<std::size_t>(n), 0);
  v.channel(0) = m.colwise().mean();
  for (Eigen::Index p = 0; p < n; ++p) {
    int best = 0;
    for (int c = 1; c < m.rows(); ++c)
      if (m(c, p) > m(best, p)) best = c;
    argmax[p] = best;
    v.matrix()(1, p) = m(best, p);
  }
  auto y = g.result(std::move(v));
  if (g.recording()) {
    g.on_backward([x, y, argmax = std::move(argmax)] {
      if (!y->has_grad() || !x->tracked) return;
      const auto& dy = y->grad.matrix();
      const Eigen::Index c = x->value.channels();
      RowMatrix<Scalar> dx(c, dy.cols());
      dx.rowwise() = dy.row(0) / static_cast<Scalar>(c);
      for (Eigen::Index p = 0; p < dy.cols(); ++p) dx(argmax[p], p) += dy(1, p);
      x->add_grad(dx);
    });
  }
  return y;
}

/// x * gate with a single-channel gate broadcast over channels.
template <typename Scalar>
Var<Scalar> gate(Graph<Scalar>& g, const Var<Scalar>& attention, const Var<Scalar>& x) {
  require(attention->value.channels() == 1 && attention->value.same_extent(x->value), "gate: shape mismatch");
  Planes<Scalar> v = x->value;
  v.matrix().array().rowwise() *= attention->value.matrix().row(0).array();
  auto y = g.result(std::move(v));
  g.on_backward([attention, x, y] {
    if (!y->has_grad()) return;
    const auto& dy = y->grad.matrix();
    if (attention->tracked)
      attention->add_grad((dy.array() * x->value.matrix().array()).colwise().sum().matrix());
    if (x->tracked) {
      RowMatrix<Scalar> dx = dy;
      dx.array().rowwise() *= attention->value.matrix().row(0).array();
      x->add_grad(dx);
    }
  });
  return y;
}

namespace detail {

struct LinearTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

/// Half-pixel-centred source coordinates for a factor-2 upsample.
inline LinearTaps upsample_taps(int n_in) {
  LinearTaps t;
  const int n_out = 2 * n_in;
  t.lo.resize(n_out);
  t.hi.resize(n_out);
  t.frac.resize(n_out);
  for (int o = 0; o < n_out; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0) src = 0;
    const int lo = std::min(static_cast<int>(src), n_in - 1);
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, n_in - 1);
    t.frac[o] = src - lo;
  }
  return t;
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> upsample2x(Graph<Scalar>& g, const Var<Scalar>& x) {
  const int h = x->value.height(), w = x->value.width();
  const auto ty = detail::upsample_taps(h), tx = detail::upsample_taps(w);
  Planes<Scalar> v(x->value.channels(), 2 * h, 2 * w);
  for (int c = 0; c < v.channels(); ++c) {
    const auto src = x->value.plane(c);
    auto dst = v.plane(c);
    for (int oy = 0; oy < 2 * h; ++oy) {
      const Scalar fy = static_cast<Scalar>(ty.frac[oy]);
      for (int ox = 0; ox < 2 * w; ++ox) {
        const Scalar fx = static_cast<Scalar>(tx.frac[ox]);
        const Scalar top = (1 - fx) * src(ty.lo[oy], tx.lo[ox]) + fx * src(ty.lo[oy], tx.hi[ox]);
        const Scalar bot = (1 - fx) * src(ty.hi[oy], tx.lo[ox]) + fx * src(ty.hi[oy], tx.hi[ox]);
        dst(oy, ox) = (1 - fy) * top + fy * bot;
      }
    }
  }
  auto y = g.result(std::move(v));
  g.on_backward([x, y, ty, tx, h, w] {
    if (!y->has_grad() || !x->tracked) return;
    Planes<Scalar> dx(x->value.channels(), h, w);
    for (int c = 0; c < dx.channels(); ++c) {
      const auto dy = y->grad.plane(c);
      auto d = dx.plane(c);
      for (int oy = 0; oy < 2 * h; ++oy) {
        const Scalar fy = static_cast<Scalar>(ty.frac[oy]);
        for (int ox = 0; ox < 2 * w; ++ox) {
          const Scalar fx = static_cast<Scalar>(tx.frac[ox]);
          const Scalar gv = dy(oy, ox);
          d(ty.lo[oy], tx.lo[ox]) += (1 - fy) * (1 - fx) * gv;
          d(ty.lo[oy], tx.hi[ox]) += (1 - fy) * fx * gv;
          d(ty.hi[oy], tx.lo[ox]) += fy * (1 - fx) * gv;
          d(ty.hi[oy], tx.hi[ox]) += fy * fx * gv;
        }
      }
    }
    x->add_grad(dx.matrix());
  });
  return y;
}

/// Clamp to [0, 1]; the gradient passes where the input is inside the
/// closed interval.
template <typename Scalar>
Var<Scalar> clamp01(Graph<Scalar>& g, const Var<Scalar>& x) {
  Planes<Scalar> v = x->value;
  v.matrix() = v.matrix().cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  auto y = g.result(std::move(v));
  g.on_backward([x, y] {
    if (!y->has_grad() || !x->tracked) return;
    const auto xv = x->value.matrix().array();
    const auto inside = ((xv >= Scalar(0)) && (xv <= Scalar(1))).template cast<Scalar>();
    x->add_grad((y->grad.matrix().array() * inside).matrix());
  });
  return y;
}

/// clamp01 for output heads. Outside [0, 1] the gradient still flows when a
/// descent step would move the value back toward the range, so a head that
/// starts saturated is not stuck with a zero gradient.
template <typename Scalar>
Var<Scalar> clamp01_output(Graph<Scalar>& g, const Var<Scalar>& x) {
  Planes<Scalar> v = x->value;
  v.matrix() = v.matrix().cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  auto y = g.result(std::move(v));
  g.on_backward([x, y] {
    if (!y->has_grad() || !x->tracked) return;
    const auto xv = x->value.matrix().array();
    const auto gy = y->grad.matrix().array();
    const auto pass = (xv >= Scalar(0) && xv <= Scalar(1)) || (xv > Scalar(1) && gy > Scalar(0)) ||
                      (xv < Scalar(0) && gy < Scalar(0));
    x->add_grad((gy * pass.template cast<Scalar>()).matrix());
  });
  return y;
}

}  // namespace ops
}  // namespace ddnet
