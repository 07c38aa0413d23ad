#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sgs/tensor.hpp"

namespace sgs {

// Central-difference validation of every differentiable op and loss, in
// 64-bit. The reported error is
//   max over parameters of |analytic - central| / max(1, |central|).

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
};

// Generic checker: `loss_fn` rebuilds the scalar loss from the current leaf
// values. When sample_per_tensor > 0 only that many deterministically
// sampled scalars per leaf are probed (used for whole-network cases).
double max_rel_grad_error(const std::function<Tensor<double>()>& loss_fn,
                          std::vector<Tensor<double>> leaves, double eps,
                          int sample_per_tensor = -1);

struct Conv3dCheckConfig {
  Shape input_shape{1, 2, 4, 4, 4};
  Shape weight_shape{3, 2, 3, 3, 3};
  std::int64_t stride = 1;
  std::int64_t padding = 1;
};

// The spec'd conv3d checker: 64-bit central differences over input, weight
// and bias. eps must lie in [1e-6, 1e-3].
double conv3d_grad_check(const Conv3dCheckConfig& cfg, double eps);

// Full suite covering all differentiable primitives, the style stack, all
// losses and tiny end-to-end critic/generator chains.
GradCheckReport run_gradcheck_suite();

}  // namespace sgs
