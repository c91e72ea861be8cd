// SPDX-License-Identifier: Apache-2.0
#include "ddnet/losses.hpp"

namespace ddnet {

double loss_lap(const GradientMap& pred, const GradientMap& gt) { return loss_lap(pred.planes(), gt.planes()); }

double loss_coarse(const Image& pred, const Image& gt) { return loss_coarse(pred.planes(), gt.planes()); }

double loss_final(const Image& pred, const Image& gt, FinalLossForm form) {
  return loss_final(pred.planes(), gt.planes(), form);
}

LossBreakdown loss_total(const ForwardOutput& out, const PairedSample& sample, const LossWeights& w,
                         FinalLossForm form) {
  const FeatureMap* coarse = out.coarse ? &out.coarse->planes() : nullptr;
  const FeatureMap* grad = out.grad_pred ? &out.grad_pred->planes() : nullptr;
  return joint_loss(out.final.planes(), coarse, grad, sample.normal.planes(), sample.grad_gt.planes(), w, form);
}

}  // namespace ddnet
