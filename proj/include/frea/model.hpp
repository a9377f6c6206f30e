#pragma once

#include "frea/ops.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace frea {

inline constexpr int kDepth = 6;
/// Decoder layers 1..kDropoutLayers apply dropout in train mode.
inline constexpr int kDropoutLayers = 3;

struct ModelConfig {
  Index input_size = 256;
  std::array<Index, kDepth> encoder_filters{64, 128, 256, 512, 512, 512};
  std::array<Index, kDepth> decoder_filters{512, 1024, 1024, 512, 256, 128};
  int low_branch_layer = 4;
  int high_branch_layer = 5;
  bool use_attention = true;
  bool use_freq_branches = true;
  Scalar dropout_p = 0.5;
  Scalar lambda_low = 1.0;
  Scalar lambda_high = 1.0;
  Scalar lambda_rec = 1.0;
  Scalar init_std = 0.02;
  Scalar bn_momentum = 0.1;
  Scalar bn_eps = 1e-5;
  std::uint64_t rng_seed = 0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  /// Narrow desk-scale variant used by tests and CI defaults.
  static ModelConfig reduced(Index input_size = 64);

  bool operator==(const ModelConfig&) const = default;
};

/// "unet", "wo-freq", "wo-att" or "full" applied on top of `base`.
ModelConfig ablation_config(std::string_view name, ModelConfig base = {});
inline constexpr std::array<std::string_view, 4> kAblationNames{"unet", "wo-freq", "wo-att",
                                                                "full"};

struct ConvParams {
  Tensor weight;
  Tensor bias;
};

struct NormParams {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
};

struct ForwardOutput {
  Tensor low_pred;      ///< (N,1,S,S); undefined without frequency branches
  Tensor high_pred;     ///< (N,1,S,S); undefined without frequency branches
  Tensor final_output;  ///< (N,1,S,S) synthesized image in [-1, 1]
  /// Post-softmax maps (N,1,h,w) for the low then high branch; empty without attention.
  std::vector<Tensor> attention_maps;
  /// Output of the attention-free pass. Equals final_output when attention is off.
  Tensor pass_a_output;
  /// Penultimate activation of the attention-free pass.
  Tensor penultimate;
  std::vector<Index> encoder_trace;
  std::vector<Index> decoder_trace;
};

/// Softmax-normalized compatibility scores between local features f (N,C,h,w)
/// and a global descriptor already projected to the same shape.
Tensor attention_scores(const Tensor& f, const Tensor& g);

/// Gates f by scores broadcast over channels, rescaled by the number of
/// positions so that uniform scores are an identity.
Tensor attention_apply(const Tensor& f, const Tensor& scores);

class FreaUnet {
 public:
  explicit FreaUnet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  /// Ablation switches only; parameter shapes are identical across arms.
  void set_switches(bool use_attention, bool use_freq_branches);

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Dropout masks are a pure function of (rng_seed, step, layer).
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }

  ForwardOutput forward(const Tensor& mr);

  /// All trainable tensors in build order.
  std::vector<Tensor> parameters() const;
  /// Batch-norm running statistics (mean, var per layer) in build order.
  std::vector<Tensor> buffers() const;
  Index parameter_count() const;
  void zero_grad();

  /// Deep copy with independent storage.
  FreaUnet clone() const;

 private:
  struct EncoderLayer {
    ConvParams conv;
    std::optional<NormParams> norm;
  };
  struct DecoderLayer {
    ConvParams conv;
    NormParams norm;
  };

  Tensor decoder_layer(int j, const Tensor& input, bool update_running);
  Tensor fuse(const Tensor& low, const Tensor& high);
  Tensor head(const ConvParams& p, const Tensor& f, Index size) const;
  std::uint64_t dropout_seed(int layer) const;

  ModelConfig config_;
  Mode mode_ = Mode::train;
  std::uint64_t step_ = 0;

  std::array<EncoderLayer, kDepth> encoder_;
  std::array<DecoderLayer, kDepth> decoder_;
  ConvParams output_;
  ConvParams fusion_;
  ConvParams attention_low_;
  ConvParams attention_high_;
  ConvParams head_low_;
  ConvParams head_high_;
};

FreaUnet build(const ModelConfig& config);

}  // namespace frea
