// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sys/wait.h>
#include <unistd.h>

namespace testing {
namespace fs = std::filesystem;

FeatureMap random_planes(int channels, int height, int width, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  FeatureMap p(channels, height, width);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

Image random_image(int channels, int height, int width, std::uint64_t seed, float lo, float hi) {
  return Image(random_planes(channels, height, width, seed, lo, hi));
}

ddnet::Planes<double> random_planes_d(int channels, int height, int width, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  ddnet::Planes<double> p(channels, height, width);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("ddnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_pair_dataset(const fs::path& root, int count, int height, int width, std::uint64_t seed) {
  fs::create_directories(root / "low");
  fs::create_directories(root / "high");
  for (int i = 0; i < count; ++i) {
    const auto high = random_image(3, height, width, seed + 2 * i, 0.2f, 1.0f);
    FeatureMap low = high.planes();
    low.matrix() *= 0.3f;
    ddnet::save_image(Image(low), root / "low" / (std::to_string(i) + ".png"));
    ddnet::save_image(high, root / "high" / (std::to_string(i) + ".png"));
  }
}

namespace oracle {

double ssim_direct(const RowMatrix<double>& a, const RowMatrix<double>& b) {
  const int k = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double weights[k][k];
  double total = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - 5, dj = j - 5;
      weights[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += weights[i][j];
    }
  double acc = 0;
  long count = 0;
  for (Eigen::Index y = 0; y + k <= a.rows(); ++y)
    for (Eigen::Index x = 0; x + k <= a.cols(); ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double w = weights[i][j] / total;
          ma += w * a(y + i, x + j);
          mb += w * b(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double w = weights[i][j] / total;
          const double da = a(y + i, x + j) - ma, db = b(y + i, x + j) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

RowMatrix<double> correlate_replicate(const RowMatrix<double>& x, const RowMatrix<double>& taps) {
  const int h = static_cast<int>(x.rows()), w = static_cast<int>(x.cols());
  const int r = static_cast<int>(taps.rows()) / 2;
  RowMatrix<double> out = RowMatrix<double>::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c)
      for (int i = 0; i < taps.rows(); ++i)
        for (int j = 0; j < taps.cols(); ++j) {
          int sy = y + i - r, sx = c + j - r;
          sy = sy < 0 ? 0 : (sy >= h ? h - 1 : sy);
          sx = sx < 0 ? 0 : (sx >= w ? w - 1 : sx);
          out(y, c) += taps(i, j) * x(sy, sx);
        }
  return out;
}

long long param_count(const ddnet::ModelConfig& cfg) {
  auto conv = [](long long cin, long long cout, long long k) { return cout * cin * k * k + cout; };
  auto scm = [&](long long c) { return conv(c, c, 3) + (cfg.use_scm ? 2 * c : 0) + c; };
  auto sccam = [&](long long c) {
    const long long h = c / 2 > 0 ? c / 2 : 1;
    long long n = conv(c, h, 1) + conv(h, h, 3) + scm(h);  // upper
    if (cfg.use_sam) n += conv(2, 1, 7);
    n += conv(c, h, 1) + 2 * scm(h);  // lower
    n += conv(2 * h, c, 1);           // fusion
    return n;
  };
  const int S = cfg.num_scales;
  auto ch = [&](int s) { return static_cast<long long>(cfg.base_channels) << s; };
  auto encoder = [&] {
    long long n = 0;
    for (int s = 0; s < S; ++s) n += sccam(ch(s)) + (s > 0 ? conv(ch(s - 1), ch(s), 3) : 0);
    return n;
  };
  auto branch = [&](long long head) {
    long long n = encoder();
    for (int s = 0; s < S; ++s) {
      n += sccam(ch(s));
      if (s < S - 1) n += conv(ch(s + 1), ch(s), 3) + conv(2 * ch(s), ch(s), 1);
    }
    return n + conv(ch(0), head, 3);
  };
  long long total = conv(4, ch(0), 3) + encoder();
  if (cfg.use_gem) total += branch(1);
  if (cfg.use_cem) total += branch(3);
  const long long sources = 1 + (cfg.use_gem ? 1 : 0) + (cfg.use_cem ? 1 : 0);
  for (int s = 0; s < S; ++s) {
    const bool running = s < S - 1;
    total += sccam(ch(s)) + conv((sources + (running ? 1 : 0)) * ch(s), ch(s), 1);
    if (running) total += conv(ch(s + 1), ch(s), 3);
  }
  return total + conv(ch(0), 3, 3);
}

}  // namespace oracle

ddnet::ModelConfig tiny_config(int base, int scales) {
  ddnet::ModelConfig c;
  c.base_channels = base;
  c.num_scales = scales;
  return c;
}

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
}

}  // namespace testing
