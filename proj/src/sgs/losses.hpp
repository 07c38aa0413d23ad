#pragma once

#include <cstdint>

#include "sgs/common.hpp"
#include "sgs/ops.hpp"
#include "sgs/tensor.hpp"

namespace sgs {

struct LossWeights {
  double lambda1 = 100.0;  // content
  double lambda2 = 1.0;    // segmentation
  double clip_c = 0.01;    // critic weight clipping bound

  void validate() const {
    if (lambda1 < 0.0) throw ConfigError("lambda1 must be >= 0");
    if (lambda2 < 0.0) throw ConfigError("lambda2 must be >= 0");
    if (!(clip_c > 0.0)) throw ConfigError("clip_c must be > 0");
  }
};

// Wasserstein critic objective: the critic minimizes
// -mean(scores_real) + mean(scores_fake).
template <class T>
Tensor<T> adv_loss_critic(const Tensor<T>& scores_real,
                          const Tensor<T>& scores_fake) {
  return sub(mean(scores_fake), mean(scores_real));
}

// Generator side of the same estimate: ascend the fake scores.
template <class T>
Tensor<T> adv_loss_generator(const Tensor<T>& scores_fake) {
  return neg(mean(scores_fake));
}

// L1 content loss, normalized per voxel so the weighting stays meaningful
// across volume sizes.
template <class T>
Tensor<T> content_l1(const Tensor<T>& yhat, const Tensor<T>& y) {
  if (yhat.shape() != y.shape()) {
    throw Error("content_l1: shape mismatch " + shape_str(yhat.shape()) +
                " vs " + shape_str(y.shape()));
  }
  return mean(abs_val(sub(yhat, y)));
}

// Voxel-mean binary cross-entropy. The printed form of the paper's BCE has
// no leading minus and would be maximized; the implementation negates it.
template <class T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  return bce_with_target(pred, target);
}

template <class T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target,
                    T eps = static_cast<T>(1e-5)) {
  return dice_with_target(pred, target, eps);
}

// BCE + dice, averaged over ROI channels of [N,R,spatial...] masks.
template <class T>
Tensor<T> seg_loss(const Tensor<T>& pred, const Tensor<T>& target,
                   T eps = static_cast<T>(1e-5)) {
  if (pred.shape() != target.shape()) {
    throw Error("seg_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                shape_str(target.shape()));
  }
  if (pred.rank() < 3) throw Error("seg_loss: expects [N,R,spatial...]");
  const std::int64_t r = pred.dim(1);
  Tensor<T> total;
  for (std::int64_t ch = 0; ch < r; ++ch) {
    auto p = select_channel(pred, ch);
    auto t = select_channel(target, ch);
    auto term = add(bce_with_target(p, t), dice_with_target(p, t, eps));
    total = ch == 0 ? term : add(total, term);
  }
  return mul_scalar(total, T(1) / static_cast<T>(r));
}

// Eq. 10: adv + lambda1*content + lambda2*seg. Phase 1 runs with lambda2=0
// (pass an undefined seg tensor or a zero weight).
template <class T>
Tensor<T> total_generator_loss(const Tensor<T>& adv, const Tensor<T>& content,
                               const Tensor<T>& seg, const LossWeights& w) {
  auto total = add(adv, mul_scalar(content, static_cast<T>(w.lambda1)));
  if (seg.defined() && w.lambda2 != 0.0) {
    total = add(total, mul_scalar(seg, static_cast<T>(w.lambda2)));
  }
  return total;
}

}  // namespace sgs
