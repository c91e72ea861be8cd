// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "ddnet/model.hpp"
#include "ddnet/sample.hpp"

namespace ddnet {

struct LossWeights {
  double lap = 0.2;
  double coarse = 0.2;
  double final = 0.6;

  void validate() const {
    require(lap >= 0 && coarse >= 0 && final >= 0, "loss weights must be nonnegative");
  }
};

/// The SSIM term can be taken as 1 - mean over channels (zero at the target)
/// or literally as 1 - sum over channels (minimum -2).
enum class FinalLossForm { mean, literal_sum };

struct LossBreakdown {
  double lap = 0;
  double coarse = 0;
  double final = 0;
  double total = 0;
};

namespace ssim_params {
inline constexpr int window = 11;
inline constexpr double sigma = 1.5;
inline constexpr double c1 = 0.01 * 0.01;
inline constexpr double c2 = 0.03 * 0.03;
}  // namespace ssim_params

namespace detail {

using MatrixD = RowMatrix<double>;

inline const Eigen::VectorXd& ssim_window() {
  static const Eigen::VectorXd w = [] {
    Eigen::VectorXd v(ssim_params::window);
    const int r = ssim_params::window / 2;
    for (int i = 0; i < ssim_params::window; ++i)
      v(i) = std::exp(-double((i - r) * (i - r)) / (2 * ssim_params::sigma * ssim_params::sigma));
    return Eigen::VectorXd(v / v.sum());
  }();
  return w;
}

/// Separable Gaussian filter over every fully contained window.
inline MatrixD valid_filter(const MatrixD& x) {
  const auto& w = ssim_window();
  const int k = static_cast<int>(w.size());
  const Eigen::Index oh = x.rows() - k + 1, ow = x.cols() - k + 1;
  MatrixD rows = MatrixD::Zero(x.rows(), ow);
  for (int j = 0; j < k; ++j) rows += w(j) * x.middleCols(j, ow);
  MatrixD out = MatrixD::Zero(oh, ow);
  for (int i = 0; i < k; ++i) out += w(i) * rows.middleRows(i, oh);
  return out;
}

/// Adjoint of valid_filter: scatters an (oh x ow) map back to (h x w).
inline MatrixD valid_filter_adjoint(const MatrixD& d, Eigen::Index h, Eigen::Index w_) {
  const auto& w = ssim_window();
  const int k = static_cast<int>(w.size());
  MatrixD rows = MatrixD::Zero(h, d.cols());
  for (int i = 0; i < k; ++i) rows.middleRows(i, d.rows()) += w(i) * d;
  MatrixD out = MatrixD::Zero(h, w_);
  for (int j = 0; j < k; ++j) out.middleCols(j, d.cols()) += w(j) * rows;
  return out;
}

template <typename Scalar>
double squared_error_mean(const Planes<Scalar>& pred, const Planes<Scalar>& gt, Planes<Scalar>* grad) {
  require(pred.same_shape(gt), "loss: shape mismatch (" + pred.shape_string() + " vs " + gt.shape_string() + ")");
  const double n = static_cast<double>(pred.pixels());
  const RowMatrix<double> diff = pred.matrix().template cast<double>() - gt.matrix().template cast<double>();
  if (grad) *grad = Planes<Scalar>(pred.height(), pred.width(), (2.0 / n * diff).template cast<Scalar>());
  return diff.squaredNorm() / n;
}

}  // namespace detail

/// Mean structural similarity of two single-channel maps (dynamic range 1).
/// Local statistics use an 11x11 Gaussian window (sigma 1.5) over every
/// position where the window fits inside the image. When `grad_a` is given
/// it receives d(ssim)/d(a).
template <typename DerivedA, typename DerivedB>
double ssim_channel(const Eigen::MatrixBase<DerivedA>& a_in, const Eigen::MatrixBase<DerivedB>& b_in,
                    RowMatrix<double>* grad_a = nullptr) {
  using detail::MatrixD;
  require(a_in.rows() == b_in.rows() && a_in.cols() == b_in.cols(), "ssim: shape mismatch");
  require(a_in.rows() >= ssim_params::window && a_in.cols() >= ssim_params::window,
          "ssim: image smaller than the 11x11 window");
  const MatrixD a = a_in.template cast<double>(), b = b_in.template cast<double>();
  const MatrixD mu_a = detail::valid_filter(a), mu_b = detail::valid_filter(b);
  const MatrixD e_aa = detail::valid_filter(a.cwiseProduct(a));
  const MatrixD e_bb = detail::valid_filter(b.cwiseProduct(b));
  const MatrixD e_ab = detail::valid_filter(a.cwiseProduct(b));

  const auto ma = mu_a.array(), mb = mu_b.array();
  const Eigen::ArrayXXd a1 = 2.0 * ma * mb + ssim_params::c1;
  const Eigen::ArrayXXd a2 = 2.0 * (e_ab.array() - ma * mb) + ssim_params::c2;
  const Eigen::ArrayXXd b1 = ma * ma + mb * mb + ssim_params::c1;
  const Eigen::ArrayXXd b2 = (e_aa.array() - ma * ma) + (e_bb.array() - mb * mb) + ssim_params::c2;
  const Eigen::ArrayXXd s = (a1 * a2) / (b1 * b2);
  const double count = static_cast<double>(s.size());

  if (grad_a) {
    const MatrixD d_mu = (s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2) / count).matrix();
    const MatrixD d_eaa = (-s / b2 / count).matrix();
    const MatrixD d_eab = (2.0 * s / a2 / count).matrix();
    const Eigen::Index h = a.rows(), w = a.cols();
    *grad_a = detail::valid_filter_adjoint(d_mu, h, w) +
              (2.0 * a.array() * detail::valid_filter_adjoint(d_eaa, h, w).array()).matrix() +
              (b.array() * detail::valid_filter_adjoint(d_eab, h, w).array()).matrix();
  }
  return s.sum() / count;
}

/// Mean squared LoG residual: (1/N) sum_p (pred - gt)^2 over one channel.
template <typename Scalar>
double loss_lap(const Planes<Scalar>& pred, const Planes<Scalar>& gt, Planes<Scalar>* grad = nullptr) {
  require(pred.channels() == 1, "loss_lap: single-channel maps expected");
  return detail::squared_error_mean(pred, gt, grad);
}

/// (1/N) sum_p sum_c (pred - gt)^2, N the pixel count.
template <typename Scalar>
double loss_coarse(const Planes<Scalar>& pred, const Planes<Scalar>& gt, Planes<Scalar>* grad = nullptr) {
  require(pred.channels() == 3, "loss_coarse: 3-channel images expected");
  return detail::squared_error_mean(pred, gt, grad);
}

template <typename Scalar>
double loss_final(const Planes<Scalar>& pred, const Planes<Scalar>& gt, FinalLossForm form = FinalLossForm::mean,
                  Planes<Scalar>* grad = nullptr) {
  require(pred.same_shape(gt), "loss_final: shape mismatch (" + pred.shape_string() + " vs " + gt.shape_string() + ")");
  require(pred.channels() == 3, "loss_final: 3-channel images expected");
  const double scale = form == FinalLossForm::mean ? 1.0 / 3.0 : 1.0;
  double total = 0;
  if (grad) *grad = Planes<Scalar>(3, pred.height(), pred.width());
  RowMatrix<double> g;
  for (int c = 0; c < 3; ++c) {
    const RowMatrix<Scalar> a = pred.plane(c), b = gt.plane(c);
    total += ssim_channel(a, b, grad ? &g : nullptr);
    if (grad) grad->plane(c) = (-scale * g).template cast<Scalar>();
  }
  return 1.0 - scale * total;
}

double loss_lap(const GradientMap& pred, const GradientMap& gt);
double loss_coarse(const Image& pred, const Image& gt);
double loss_final(const Image& pred, const Image& gt, FinalLossForm form = FinalLossForm::mean);

/// Gradients of the weighted total with respect to each network output.
template <typename Scalar>
struct OutputGradients {
  Planes<Scalar> final;
  Planes<Scalar> coarse;
  Planes<Scalar> grad_pred;
};

/// Weighted joint loss over raw output maps. A missing head (nullptr) is
/// only allowed when its weight is zero.
template <typename Scalar>
LossBreakdown joint_loss(const Planes<Scalar>& final, const Planes<Scalar>* coarse, const Planes<Scalar>* grad_pred,
                         const Planes<Scalar>& normal, const Planes<Scalar>& grad_gt, const LossWeights& w,
                         FinalLossForm form = FinalLossForm::mean, OutputGradients<Scalar>* grads = nullptr) {
  w.validate();
  LossBreakdown out;
  if (grad_pred) {
    out.lap = loss_lap(*grad_pred, grad_gt, grads ? &grads->grad_pred : nullptr);
    if (grads) grads->grad_pred.matrix() *= static_cast<Scalar>(w.lap);
  } else {
    require(w.lap == 0, "gradient head is disabled; the Laplacian loss weight must be zero");
  }
  if (coarse) {
    out.coarse = loss_coarse(*coarse, normal, grads ? &grads->coarse : nullptr);
    if (grads) grads->coarse.matrix() *= static_cast<Scalar>(w.coarse);
  } else {
    require(w.coarse == 0, "coarse head is disabled; the coarse loss weight must be zero");
  }
  out.final = loss_final(final, normal, form, grads ? &grads->final : nullptr);
  if (grads) grads->final.matrix() *= static_cast<Scalar>(w.final);
  out.total = w.lap * out.lap + w.coarse * out.coarse + w.final * out.final;
  return out;
}

LossBreakdown loss_total(const ForwardOutput& out, const PairedSample& sample, const LossWeights& w = {},
                         FinalLossForm form = FinalLossForm::mean);

/// Weighted sum of already-computed components.
inline LossBreakdown combine(double lap, double coarse, double final, const LossWeights& w) {
  return {lap, coarse, final, w.lap * lap + w.coarse * coarse + w.final * final};
}

}  // namespace ddnet
