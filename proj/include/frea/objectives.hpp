#pragma once

#include "frea/model.hpp"

namespace frea {

struct LossWeights {
  Scalar low = 1.0;
  Scalar high = 1.0;
  Scalar rec = 1.0;
};

/// Per-step loss values; total == low*l_low + high*l_high + rec*l_rec.
struct LossBreakdown {
  Scalar l_low = 0;
  Scalar l_high = 0;
  Scalar l_rec = 0;
  Scalar total = 0;
  LossWeights weights;
};

/// Mean squared error; supervises the low-frequency branch.
Tensor loss_low(const Tensor& pred_low, const Tensor& pet_low);
/// Mean absolute error; supervises the high-frequency branch.
Tensor loss_high(const Tensor& pred_high, const Tensor& pet_high);
/// Mean absolute error of the fused output against the whole target.
Tensor loss_rec(const Tensor& final_output, const Tensor& pet);

/// Weighted combination of already-evaluated components. Without frequency
/// branches the branch terms are dropped (reported as 0).
LossBreakdown loss_total(Scalar l_low, Scalar l_high, Scalar l_rec, const LossWeights& weights,
                         bool use_freq_branches);

struct LossTerms {
  Tensor total;  ///< differentiable scalar
  LossBreakdown breakdown;
};

/// Differentiable objective for one forward pass. Targets are in the
/// normalized space of the model outputs.
LossTerms loss_total(const ForwardOutput& out, const Tensor& pet, const Tensor& pet_low,
                     const Tensor& pet_high, const LossWeights& weights, bool use_freq_branches);

LossWeights loss_weights(const ModelConfig& config);

}  // namespace frea
