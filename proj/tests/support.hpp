#pragma once

#include "frea/ops.hpp"
#include "frea/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace frea::test {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, Scalar lo = -1,
                            Scalar hi = 1, bool requires_grad = false) {
  ArrayX data(numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = lo + (hi - lo) * uniform01(rng);
  return Tensor(shape, std::move(data), requires_grad);
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
/// derivative is ~0 from producing a meaningless ratio of round-off terms.
inline Scalar relative_error(Scalar analytic, Scalar numeric, Scalar floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Analytic gradient of `loss(inputs)` w.r.t. every input coordinate.
inline std::vector<ArrayX> analytic_grads(const std::function<Tensor()>& loss,
                                          std::vector<Tensor>& inputs) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  GradTape tape;
  {
    GradTape::Scope scope(tape);
    const Tensor l = loss();
    tape.backward(l);
  }
  std::vector<ArrayX> out;
  for (const Tensor& t : inputs) out.push_back(t.grad());
  return out;
}

/// Central difference of `loss` at coordinate `i` of `t`, evaluated without a tape.
inline Scalar numeric_grad(const std::function<Tensor()>& loss, Tensor& t, Index i,
                           Scalar h = 1e-5) {
  const Scalar keep = t.data()[i];
  t.data()[i] = keep + h;
  const Scalar up = loss().item();
  t.data()[i] = keep - h;
  const Scalar down = loss().item();
  t.data()[i] = keep;
  return (up - down) / (2 * h);
}

struct ProbedDifference {
  Scalar value;
  bool smooth;  // no relu/abs changed sign between the two evaluations and the base point
};

/// numeric_grad plus a check that the sign pattern at every kink is the same at
/// t - h, t and t + h. Only then is the central difference a valid reference.
inline ProbedDifference probed_numeric_grad(const std::function<Tensor()>& loss, Tensor& t,
                                            Index i, Scalar h = 1e-5) {
  const Scalar keep = t.data()[i];
  auto eval = [&](Scalar v, std::uint64_t& digest) {
    t.data()[i] = v;
    KinkProbe probe;
    const Scalar l = loss().item();
    digest = probe.digest();
    return l;
  };
  std::uint64_t base = 0, hi = 0, lo = 0;
  eval(keep, base);
  const Scalar up = eval(keep + h, hi);
  const Scalar down = eval(keep - h, lo);
  t.data()[i] = keep;
  return {(up - down) / (2 * h), base == hi && base == lo};
}

/// Largest relative error over every coordinate of every input.
inline Scalar max_grad_error(const std::function<Tensor()>& loss, std::vector<Tensor> inputs) {
  const std::vector<ArrayX> grads = analytic_grads(loss, inputs);
  Scalar worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Index i = 0; i < inputs[k].numel(); ++i) {
      worst = std::max(worst, relative_error(grads[k][i], numeric_grad(loss, inputs[k], i)));
    }
  }
  return worst;
}

/// Sum of elementwise products, used to turn any op into a scalar loss with
/// a generic upstream gradient.
inline Tensor weighted_sum(const Tensor& x, const Tensor& w) { return sum(mul(x, w)); }

inline Scalar dot(const Tensor& a, const Tensor& b) {
  return (a.data() * b.data()).sum();
}

}  // namespace frea::test
