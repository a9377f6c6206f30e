#include "frea/adam.hpp"

#include <cmath>

namespace frea {

AdamState::AdamState(const std::vector<Tensor>& params, AdamOptions opts) : options(opts) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const Tensor& p : params) {
    first_moment.push_back(ArrayX::Zero(p.numel()));
    second_moment.push_back(ArrayX::Zero(p.numel()));
  }
}

void adam_step(const std::vector<Tensor>& params, const std::vector<ArrayX>& grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.first_moment[i].size() != params[i].numel()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " of shape " +
                       to_string(params[i].shape()) + " does not match its gradient/moments");
    }
  }

  ++state.step;
  const AdamOptions& o = state.options;
  const auto t = static_cast<Scalar>(state.step);
  const Scalar bias1 = 1.0 - std::pow(o.beta1, t);
  const Scalar bias2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ArrayX& m = state.first_moment[i];
    ArrayX& v = state.second_moment[i];
    m = o.beta1 * m + (1.0 - o.beta1) * grads[i];
    v = o.beta2 * v + (1.0 - o.beta2) * grads[i].square();
    ArrayX& p = params[i].node()->data;
    p -= o.lr * (m / bias1) / ((v / bias2).sqrt() + o.eps);
  }
}

void adam_step(const std::vector<Tensor>& params, AdamState& state) {
  std::vector<ArrayX> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) {
    grads.push_back(p.has_grad() ? p.grad() : ArrayX::Zero(p.numel()));
  }
  adam_step(params, grads, state);
}

}  // namespace frea
