#include "frea/objectives.hpp"

#include <stdexcept>

namespace frea {

namespace {

void require_match(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": prediction " +
                     (a.defined() ? to_string(a.shape()) : "<none>") + " vs target " +
                     (b.defined() ? to_string(b.shape()) : "<none>"));
  }
}

void require_nonnegative(const LossWeights& w) {
  if (!(w.low >= 0 && w.high >= 0 && w.rec >= 0)) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
}

}  // namespace

Tensor loss_low(const Tensor& pred_low, const Tensor& pet_low) {
  require_match(pred_low, pet_low, "loss_low");
  return mean(square(sub(pred_low, pet_low)));
}

Tensor loss_high(const Tensor& pred_high, const Tensor& pet_high) {
  require_match(pred_high, pet_high, "loss_high");
  return mean(abs(sub(pred_high, pet_high)));
}

Tensor loss_rec(const Tensor& final_output, const Tensor& pet) {
  require_match(final_output, pet, "loss_rec");
  return mean(abs(sub(final_output, pet)));
}

LossBreakdown loss_total(Scalar l_low, Scalar l_high, Scalar l_rec, const LossWeights& weights,
                         bool use_freq_branches) {
  require_nonnegative(weights);
  LossBreakdown b;
  b.weights = weights;
  b.l_rec = l_rec;
  if (use_freq_branches) {
    b.l_low = l_low;
    b.l_high = l_high;
  }
  b.total = weights.low * b.l_low + weights.high * b.l_high + weights.rec * b.l_rec;
  return b;
}

LossTerms loss_total(const ForwardOutput& out, const Tensor& pet, const Tensor& pet_low,
                     const Tensor& pet_high, const LossWeights& weights, bool use_freq_branches) {
  require_nonnegative(weights);
  Tensor rec = loss_rec(out.final_output, pet);
  Tensor total = scale(rec, weights.rec);
  Scalar l_low = 0, l_high = 0;
  if (use_freq_branches) {
    Tensor lo = loss_low(out.low_pred, pet_low);
    Tensor hi = loss_high(out.high_pred, pet_high);
    l_low = lo.item();
    l_high = hi.item();
    total = add(add(scale(lo, weights.low), scale(hi, weights.high)), total);
  }
  LossTerms terms{total, loss_total(l_low, l_high, rec.item(), weights, use_freq_branches)};
  terms.breakdown.total = total.item();
  return terms;
}

LossWeights loss_weights(const ModelConfig& config) {
  return {config.lambda_low, config.lambda_high, config.lambda_rec};
}

}  // namespace frea
