#include "frea/model.hpp"

#include "frea/random.hpp"

#include <cmath>
#include <stdexcept>

namespace frea {

namespace {

bool is_power_of_two(Index v) { return v > 0 && (v & (v - 1)) == 0; }

Tensor gaussian_tensor(const Shape& shape, Scalar std, std::mt19937_64& rng) {
  ArrayX data(numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = std * gaussian(rng);
  return Tensor(shape, std::move(data), true);
}

ConvParams make_conv(const Shape& weight_shape, Index out_channels, Scalar std,
                     std::mt19937_64& rng) {
  return {gaussian_tensor(weight_shape, std, rng), Tensor::zeros({out_channels}, true)};
}

NormParams make_norm(Index channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true),
          BatchNormStats::init(channels)};
}

ConvParams clone_conv(const ConvParams& p) { return {p.weight.clone(), p.bias.clone()}; }

NormParams clone_norm(const NormParams& p) {
  return {p.gamma.clone(), p.beta.clone(),
          {p.stats.running_mean.clone(), p.stats.running_var.clone()}};
}

Tensor conv1x1(const ConvParams& p, const Tensor& x) { return conv2d(x, p.weight, p.bias, 1, 0); }

// Spatial extent of decoder layer j (1-based) for input size s.
Index decoder_extent(Index s, int j) { return s >> (kDepth - j); }

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (input_size < 64 || !is_power_of_two(input_size)) {
    throw std::invalid_argument("input_size must be a power of two >= 64, got " +
                                std::to_string(input_size));
  }
  for (int i = 0; i < kDepth; ++i) {
    if (encoder_filters[i] < 1 || decoder_filters[i] < 1) {
      throw std::invalid_argument("filter counts must be positive");
    }
  }
  if (low_branch_layer < 1 || high_branch_layer > kDepth ||
      low_branch_layer >= high_branch_layer) {
    throw std::invalid_argument("branch layers must satisfy 1 <= low < high <= 6, got low=" +
                                std::to_string(low_branch_layer) +
                                " high=" + std::to_string(high_branch_layer));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw std::invalid_argument("dropout_p must lie in [0, 1)");
  }
  if (!(lambda_low >= 0 && lambda_high >= 0 && lambda_rec >= 0)) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
  if (!(init_std > 0)) throw std::invalid_argument("init_std must be positive");
  if (!(bn_momentum >= 0 && bn_momentum <= 1) || !(bn_eps > 0)) {
    throw std::invalid_argument("invalid batch-norm momentum/eps");
  }
}

ModelConfig ModelConfig::reduced(Index input_size) {
  ModelConfig c;
  c.input_size = input_size;
  c.encoder_filters = {8, 16, 16, 16, 16, 16};
  c.decoder_filters = {16, 16, 16, 16, 16, 8};
  return c;
}

ModelConfig ablation_config(std::string_view name, ModelConfig base) {
  if (name == "unet") {
    base.use_attention = false;
    base.use_freq_branches = false;
  } else if (name == "wo-freq") {
    base.use_attention = true;
    base.use_freq_branches = false;
  } else if (name == "wo-att") {
    base.use_attention = false;
    base.use_freq_branches = true;
  } else if (name == "full") {
    base.use_attention = true;
    base.use_freq_branches = true;
  } else {
    throw std::invalid_argument("unknown ablation '" + std::string(name) +
                                "' (expected unet, wo-freq, wo-att or full)");
  }
  return base;
}

Tensor attention_scores(const Tensor& f, const Tensor& g) {
  if (f.shape() != g.shape()) {
    throw ShapeError("attention_scores: features " + to_string(f.shape()) +
                     " vs projected descriptor " + to_string(g.shape()));
  }
  return spatial_softmax(channel_dot(f, g));
}

Tensor attention_apply(const Tensor& f, const Tensor& scores) {
  if (f.ndim() != 4) throw ShapeError("attention_apply: features must be NCHW");
  return gate_channels(f, scores, static_cast<Scalar>(f.dim(2) * f.dim(3)));
}

// ---------------------------------------------------------------------------

FreaUnet::FreaUnet(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.rng_seed);
  const Scalar std = config_.init_std;
  const auto& enc = config_.encoder_filters;
  const auto& dec = config_.decoder_filters;

  Index in = 1;
  for (int i = 0; i < kDepth; ++i) {
    encoder_[i].conv = make_conv({enc[i], in, 4, 4}, enc[i], std, rng);
    // A 1x1 output has one value per channel and sample: no batch variance.
    if (i > 0 && (config_.input_size >> (i + 1)) > 1) encoder_[i].norm = make_norm(enc[i]);
    in = enc[i];
  }
  for (int j = 0; j < kDepth; ++j) {
    const Index skip = j == 0 ? 0 : enc[kDepth - 1 - j];
    const Index cin = (j == 0 ? enc[kDepth - 1] : dec[j - 1]) + skip;
    decoder_[j].conv = make_conv({cin, dec[j], 4, 4}, dec[j], std, rng);
    decoder_[j].norm = make_norm(dec[j]);
  }
  const Index low_c = dec[config_.low_branch_layer - 1];
  const Index high_c = dec[config_.high_branch_layer - 1];
  const Index pen_c = dec[kDepth - 1];
  output_ = make_conv({1, pen_c, 1, 1}, 1, std, rng);
  fusion_ = make_conv({high_c, low_c, 1, 1}, high_c, std, rng);
  attention_low_ = make_conv({low_c, pen_c, 1, 1}, low_c, std, rng);
  attention_high_ = make_conv({high_c, pen_c, 1, 1}, high_c, std, rng);
  head_low_ = make_conv({1, low_c, 1, 1}, 1, std, rng);
  head_high_ = make_conv({1, high_c, 1, 1}, 1, std, rng);
}

FreaUnet build(const ModelConfig& config) { return FreaUnet(config); }

void FreaUnet::set_switches(bool use_attention, bool use_freq_branches) {
  config_.use_attention = use_attention;
  config_.use_freq_branches = use_freq_branches;
}

std::vector<Tensor> FreaUnet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : encoder_) {
    out.push_back(e.conv.weight);
    out.push_back(e.conv.bias);
    if (e.norm) {
      out.push_back(e.norm->gamma);
      out.push_back(e.norm->beta);
    }
  }
  for (const auto& d : decoder_) {
    out.insert(out.end(), {d.conv.weight, d.conv.bias, d.norm.gamma, d.norm.beta});
  }
  for (const ConvParams* p :
       {&output_, &fusion_, &attention_low_, &attention_high_, &head_low_, &head_high_}) {
    out.push_back(p->weight);
    out.push_back(p->bias);
  }
  return out;
}

std::vector<Tensor> FreaUnet::buffers() const {
  std::vector<Tensor> out;
  for (const auto& e : encoder_) {
    if (e.norm) out.insert(out.end(), {e.norm->stats.running_mean, e.norm->stats.running_var});
  }
  for (const auto& d : decoder_) {
    out.insert(out.end(), {d.norm.stats.running_mean, d.norm.stats.running_var});
  }
  return out;
}

Index FreaUnet::parameter_count() const {
  Index n = 0;
  for (const Tensor& p : parameters()) n += p.numel();
  return n;
}

void FreaUnet::zero_grad() {
  for (Tensor& p : parameters()) p.zero_grad();
}

FreaUnet FreaUnet::clone() const {
  FreaUnet copy(*this);
  for (int i = 0; i < kDepth; ++i) {
    copy.encoder_[i].conv = clone_conv(encoder_[i].conv);
    if (encoder_[i].norm) copy.encoder_[i].norm = clone_norm(*encoder_[i].norm);
    copy.decoder_[i].conv = clone_conv(decoder_[i].conv);
    copy.decoder_[i].norm = clone_norm(decoder_[i].norm);
  }
  copy.output_ = clone_conv(output_);
  copy.fusion_ = clone_conv(fusion_);
  copy.attention_low_ = clone_conv(attention_low_);
  copy.attention_high_ = clone_conv(attention_high_);
  copy.head_low_ = clone_conv(head_low_);
  copy.head_high_ = clone_conv(head_high_);
  return copy;
}

std::uint64_t FreaUnet::dropout_seed(int layer) const {
  return mix_seed(mix_seed(config_.rng_seed, step_), static_cast<std::uint64_t>(layer));
}

Tensor FreaUnet::decoder_layer(int j, const Tensor& input, bool update_running) {
  DecoderLayer& layer = decoder_[j - 1];
  Tensor x = relu(conv_transpose2d(input, layer.conv.weight, layer.conv.bias, 2, 1));
  x = batch_norm(x, layer.norm.gamma, layer.norm.beta, layer.norm.stats,
                 {mode_, config_.bn_momentum, config_.bn_eps, update_running});
  if (j <= kDropoutLayers) x = dropout(x, config_.dropout_p, mode_, dropout_seed(j));
  return x;
}

Tensor FreaUnet::fuse(const Tensor& low, const Tensor& high) {
  Tensor lifted = upsample_bilinear(low, high.dim(2), high.dim(3));
  return add(high, conv1x1(fusion_, lifted));
}

Tensor FreaUnet::head(const ConvParams& p, const Tensor& f, Index size) const {
  return upsample_bilinear(tanh(conv1x1(p, f)), size, size);
}

ForwardOutput FreaUnet::forward(const Tensor& mr) {
  const Index s = config_.input_size;
  if (mr.ndim() != 4 || mr.dim(1) != 1 || mr.dim(2) != s || mr.dim(3) != s) {
    throw ShapeError("forward: expected (N,1," + std::to_string(s) + "," + std::to_string(s) +
                     ") input, got " + to_string(mr.shape()));
  }
  if (!mr.data().allFinite()) throw std::invalid_argument("forward: non-finite input");

  const int low = config_.low_branch_layer;
  const int high = config_.high_branch_layer;
  const bool attend = config_.use_attention;
  ForwardOutput out;

  std::array<Tensor, kDepth> enc;
  Tensor x = mr;
  for (int i = 0; i < kDepth; ++i) {
    EncoderLayer& layer = encoder_[i];
    x = relu(conv2d(x, layer.conv.weight, layer.conv.bias, 2, 1));
    if (layer.norm) {
      x = batch_norm(x, layer.norm->gamma, layer.norm->beta, layer.norm->stats,
                     {mode_, config_.bn_momentum, config_.bn_eps, true});
    }
    enc[i] = x;
    out.encoder_trace.push_back(x.dim(2));
  }

  auto decoder_input = [&](int j, const Tensor& stream) {
    return j == 1 ? enc[kDepth - 1] : concat_channels(stream, enc[kDepth - j]);
  };

  // Pass A: identity gates. Layers after the fusion point are re-evaluated in
  // pass B when attention is on, so only that pass updates their statistics.
  Tensor f_low, f_high, stream;
  for (int j = 1; j <= kDepth; ++j) {
    Tensor y = decoder_layer(j, decoder_input(j, stream), !(attend && j > high));
    out.decoder_trace.push_back(y.dim(2));
    if (j == low) f_low = y;
    if (j == high) {
      f_high = y;
      y = fuse(f_low, f_high);
    }
    stream = y;
  }
  out.penultimate = stream;
  out.pass_a_output = tanh(conv1x1(output_, stream));

  Tensor gated_low = f_low, gated_high = f_high;
  if (attend) {
    // Pass B: the attention-free penultimate activation is the global
    // descriptor, pooled to each branch's grid and projected to its width.
    const Index low_extent = decoder_extent(s, low), high_extent = decoder_extent(s, high);
    Tensor g_low = conv1x1(attention_low_, avg_pool2d(out.penultimate, s / low_extent));
    Tensor g_high = conv1x1(attention_high_, avg_pool2d(out.penultimate, s / high_extent));
    Tensor scores_low = attention_scores(f_low, g_low);
    Tensor scores_high = attention_scores(f_high, g_high);
    out.attention_maps = {scores_low, scores_high};
    gated_low = attention_apply(f_low, scores_low);
    gated_high = attention_apply(f_high, scores_high);

    stream = fuse(gated_low, gated_high);
    for (int j = high + 1; j <= kDepth; ++j) stream = decoder_layer(j, decoder_input(j, stream), true);
    out.final_output = tanh(conv1x1(output_, stream));
  } else {
    out.final_output = out.pass_a_output;
  }

  if (config_.use_freq_branches) {
    out.low_pred = head(head_low_, gated_low, s);
    out.high_pred = head(head_high_, gated_high, s);
  }
  return out;
}

}  // namespace frea
