#include "frea/trainer.hpp"

#include "frea/adam.hpp"
#include "frea/checkpoint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace frea {

namespace {

std::string pm(const MetricSummary& s, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", precision, s.mean, precision, s.std);
  return buf;
}

std::string commented(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out += "# " + line + "\n";
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset, const FoldAssignment& folds,
                  int round) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig model_config = config.effective_model();
  if (model_config.input_size != dataset.size) {
    throw TrainingError("model input_size " + std::to_string(model_config.input_size) +
                        " does not match dataset size " + std::to_string(dataset.size));
  }

  TrainResult result{FreaUnet(model_config), {}};
  FreaUnet& model = result.model;
  model.set_mode(Mode::train);
  const std::vector<Tensor> params = model.parameters();
  AdamState adam(params, {config.lr, config.beta1, config.beta2, config.adam_eps});
  const LossWeights weights = loss_weights(model_config);

  RunRecord& record = result.record;
  record.round = round;
  record.config_snapshot = to_text(config);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    adam.options.lr = config.lr_at(epoch);
    const auto order = iterate(dataset, folds, round, Split::train, config.shuffle_seed, epoch);
    LossBreakdown avg;
    avg.weights = weights;
    for (const SamplePair* sample : order) {
      GradTape tape;
      GradTape::Scope scope(tape);
      model.zero_grad();
      const ForwardOutput out = model.forward(sample->mr);
      const LossTerms terms = loss_total(out, sample->pet, sample->pet_low, sample->pet_high,
                                         weights, model_config.use_freq_branches);
      if (!std::isfinite(terms.breakdown.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", sample '" + sample->subject_id + "'");
      }
      tape.backward(terms.total);
      adam_step(params, adam);
      model.set_step(model.step() + 1);

      avg.l_low += terms.breakdown.l_low;
      avg.l_high += terms.breakdown.l_high;
      avg.l_rec += terms.breakdown.l_rec;
    }
    const auto n = static_cast<Scalar>(order.size());
    record.epoch_losses.push_back(
        loss_total(avg.l_low / n, avg.l_high / n, avg.l_rec / n, weights,
                   model_config.use_freq_branches));
  }
  model.zero_grad();

  const auto bytes = serialize(model);
  record.checkpoint_hash = content_hash(bytes);
  if (!config.checkpoint.empty()) save_checkpoint(config.checkpoint, model);
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string MaskPolicy::describe() const {
  char buf[80];
  std::snprintf(buf, sizeof buf, "body>%g*max(real);ssim=%s", threshold,
                ssim == SsimMode::global ? "global" : "windowed");
  return buf;
}

MaskPolicy mask_policy(const TrainConfig& config) {
  return {config.mask_threshold,
          config.ssim_mode == "windowed" ? SsimMode::windowed : SsimMode::global};
}

MetricsReport evaluate(const Predictor& predict, const Dataset& dataset,
                       const FoldAssignment& folds, int round, const MaskPolicy& policy) {
  MetricsReport report;
  report.mask_policy = policy.describe();
  for (const SamplePair* sample : iterate(dataset, folds, round, Split::test, 0)) {
    const ImageFile syn = denormalize(predict(*sample), sample->q);
    const ImageFile& real = sample->pet_image;
    const Mask mask = body_mask(real, policy.threshold);
    report.rows.push_back({sample->subject_id, round, metric_mae(real, syn, mask),
                           metric_psnr(real, syn), metric_ssim(real, syn, policy.ssim)});
  }
  report.aggregate();
  return report;
}

MetricsReport evaluate(FreaUnet& model, const Dataset& dataset, const FoldAssignment& folds,
                       int round, const MaskPolicy& policy) {
  const Mode previous = model.mode();
  model.set_mode(Mode::eval);
  MetricsReport report =
      evaluate([&model](const SamplePair& s) { return model.forward(s.mr).final_output; },
               dataset, folds, round, policy);
  model.set_mode(previous);
  return report;
}

Predictor oracle_predictor() {
  return [](const SamplePair& s) {
    const ImageXd mr = as_f32(denormalize(s.mr, s.mr_q).plane());
    return normalize(ImageFile::from_plane(as_f32(synth_transform(mr)), kSynthQ));
  };
}

CvResult cross_validate(const TrainConfig& config, const Dataset& dataset) {
  config.validate();
  const FoldAssignment folds = kfold_split(dataset, config.k, config.data_seed);
  const MaskPolicy policy = mask_policy(config);

  CvResult cv;
  cv.config_snapshot = to_text(config);
  cv.combined.mask_policy = policy.describe();
  std::vector<Scalar> mae, psnr, ssim;
  for (int round = 0; round < config.k; ++round) {
    TrainConfig round_config = config;
    if (!config.checkpoint.empty()) {
      round_config.checkpoint = config.checkpoint + ".round" + std::to_string(round);
      cv.checkpoint_paths.push_back(round_config.checkpoint);
    }
    TrainResult result = train(round_config, dataset, folds, round);
    MetricsReport report = evaluate(result.model, dataset, folds, round, policy);
    mae.push_back(report.mae.mean);
    psnr.push_back(report.psnr.mean);
    ssim.push_back(report.ssim.mean);
    cv.combined.rows.insert(cv.combined.rows.end(), report.rows.begin(), report.rows.end());
    result.record.metrics = std::move(report);
    cv.rounds.push_back(std::move(result.record));
  }
  std::sort(cv.combined.rows.begin(), cv.combined.rows.end(),
            [](const SampleMetrics& a, const SampleMetrics& b) { return a.sample_id < b.sample_id; });
  cv.combined.aggregate();
  cv.fold_mae = summarize(mae);
  cv.fold_psnr = summarize(psnr);
  cv.fold_ssim = summarize(ssim);
  return cv;
}

std::string CvResult::summary() const {
  std::ostringstream os;
  os << commented(config_snapshot);
  os << "# mask: " << combined.mask_policy << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %4s  %-18s %-16s %-14s\n", "round", "n", "MAE", "PSNR",
                "SSIM");
  os << line;
  for (const RunRecord& r : rounds) {
    const MetricsReport& m = *r.metrics;
    std::snprintf(line, sizeof line, "%-10d %4zu  %-18s %-16s %-14s\n", r.round, m.count(),
                  pm(m.mae, 2).c_str(), pm(m.psnr, 2).c_str(), pm(m.ssim, 4).c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%-10s %4zu  %-18s %-16s %-14s\n", "samples", combined.count(),
                pm(combined.mae, 2).c_str(), pm(combined.psnr, 2).c_str(),
                pm(combined.ssim, 4).c_str());
  os << line;
  std::snprintf(line, sizeof line, "%-10s %4zu  %-18s %-16s %-14s\n", "folds", rounds.size(),
                pm(fold_mae, 2).c_str(), pm(fold_psnr, 2).c_str(), pm(fold_ssim, 4).c_str());
  os << line;
  return os.str();
}

std::string ablation_label(std::string_view name) {
  if (name == "unet") return "U-net";
  if (name == "wo-freq") return "FREA-Unet-wo-Freq";
  if (name == "wo-att") return "FREA-Unet-wo-Att";
  if (name == "full") return "FREA-Unet";
  throw std::invalid_argument("unknown ablation '" + std::string(name) + "'");
}

AblationReport ablate(const TrainConfig& config, const Dataset& dataset) {
  AblationReport report;
  report.config_snapshot = to_text(config);
  for (std::string_view name : kAblationNames) {
    TrainConfig arm = config;
    arm.ablation = std::string(name);
    if (!config.checkpoint.empty()) arm.checkpoint = config.checkpoint + "." + arm.ablation;
    report.rows.push_back({arm.ablation, ablation_label(name), cross_validate(arm, dataset)});
  }
  return report;
}

std::string AblationReport::to_text() const {
  std::ostringstream os;
  os << commented(config_snapshot);
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %-18s %-16s %-14s\n", "", "MAE", "PSNR", "SSIM");
  os << line;
  for (const AblationRow& row : rows) {
    const MetricsReport& m = row.cv.combined;
    std::snprintf(line, sizeof line, "%-20s %-18s %-16s %-14s\n", row.label.c_str(),
                  pm(m.mae, 2).c_str(), pm(m.psnr, 2).c_str(), pm(m.ssim, 4).c_str());
    os << line;
  }
  return os.str();
}

Dataset dataset_for(const TrainConfig& config) {
  if (!config.data.empty()) return load_dataset(config.data, config.model.input_size, config.freq);
  return synth_generate(config.subjects, config.model.input_size, config.data_seed, config.freq);
}

}  // namespace frea
