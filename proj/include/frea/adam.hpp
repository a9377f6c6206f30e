#pragma once

#include "frea/tensor.hpp"

#include <cstdint>
#include <vector>

namespace frea {

struct AdamOptions {
  Scalar lr = 2e-4;
  Scalar beta1 = 0.5;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Moment buffers for a fixed, ordered parameter list.
struct AdamState {
  AdamOptions options;
  std::vector<ArrayX> first_moment;
  std::vector<ArrayX> second_moment;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(const std::vector<Tensor>& params, AdamOptions opts);
};

/// One bias-corrected ADAM update of `params` from their gradient buffers:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
void adam_step(const std::vector<Tensor>& params, AdamState& state);

/// Same update from explicit gradients (one per parameter).
void adam_step(const std::vector<Tensor>& params, const std::vector<ArrayX>& grads,
               AdamState& state);

}  // namespace frea
