#pragma once

#include "frea/tensor.hpp"

#include <cstdint>

namespace frea {

enum class Mode { train, eval };

// Elementwise arithmetic. Operands must have identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);
Tensor square(const Tensor& a);
/// |a| with subgradient 0 at 0.
Tensor abs(const Tensor& a);
Tensor tanh(const Tensor& a);
/// max(0, a); subgradient 0 at 0.
Tensor relu(const Tensor& a);

/// While alive, relu and abs on this thread fold the sign pattern of their
/// inputs into digest(). Two evaluations with equal digests took the same
/// branch at every kink, so the graph was smooth between them.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  std::uint64_t digest() const { return digest_; }
  void observe(const ArrayX& x);

 private:
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  KinkProbe* previous_;
};

/// Reductions to a one-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// 2D cross-correlation. input NCHW, weight (O, I, K, K), bias (O) or undefined.
/// Output extent per axis: floor((H + 2 pad - K) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

/// Transposed convolution, the adjoint of conv2d over the same weight.
/// input (N, I, H, W), weight (I, O, K, K), bias (O) or undefined.
/// Output extent per axis: (H - 1) stride - 2 pad + K.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        int stride, int padding);

/// Running statistics owned by one batch-norm layer.
struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormStats init(Index channels);
};

struct BatchNormOptions {
  Mode mode = Mode::train;
  Scalar momentum = 0.1;
  Scalar eps = 1e-5;
  /// Train mode only: whether this call folds its batch statistics into `stats`.
  bool update_running = true;
};

/// Per-channel normalization over N*H*W. Train mode uses batch statistics
/// (biased variance); eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, const BatchNormOptions& options);

/// Inverted dropout: train mode keeps each element with probability 1 - p and
/// scales survivors by 1 / (1 - p). Eval mode and p == 0 return `x` itself.
Tensor dropout(const Tensor& x, Scalar p, Mode mode, std::uint64_t seed);

/// Bilinear resize with half-pixel centers (align_corners = false).
Tensor upsample_bilinear(const Tensor& x, Index out_h, Index out_w);

/// Non-overlapping k x k average pooling; H and W must be divisible by k.
Tensor avg_pool2d(const Tensor& x, Index k);

/// Concatenates along the channel axis. N, H, W must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, Index begin, Index count);

/// Per-position dot product over channels: (N, C, H, W) x2 -> (N, 1, H, W).
Tensor channel_dot(const Tensor& a, const Tensor& b);

/// Softmax over the H*W positions of each sample of an (N, 1, H, W) tensor.
Tensor spatial_softmax(const Tensor& x);

/// out(n, c, y, x) = f(n, c, y, x) * (scores(n, 0, y, x) * factor).
Tensor gate_channels(const Tensor& f, const Tensor& scores, Scalar factor);

}  // namespace frea
