#pragma once

#include "frea/config.hpp"
#include "frea/data.hpp"
#include "frea/metrics.hpp"
#include "frea/model.hpp"
#include "frea/objectives.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace frea {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunRecord {
  int round = 0;
  std::vector<LossBreakdown> epoch_losses;  ///< per-epoch averages over the train split
  std::optional<MetricsReport> metrics;
  double wall_clock_seconds = 0;
  std::string config_snapshot;
  std::string checkpoint_hash;
};

struct TrainResult {
  FreaUnet model;
  RunRecord record;
};

/// Trains one CV round: per epoch and train sample, forward, loss, backward,
/// ADAM step. Saves `config.checkpoint` when set.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const FoldAssignment& folds,
                  int round);

struct MaskPolicy {
  Scalar threshold = kDefaultMaskThreshold;
  SsimMode ssim = SsimMode::global;

  std::string describe() const;
};
MaskPolicy mask_policy(const TrainConfig& config);

/// Maps a normalized sample to a normalized synthetic PET (N,1,S,S).
using Predictor = std::function<Tensor(const SamplePair&)>;

MetricsReport evaluate(const Predictor& predict, const Dataset& dataset,
                       const FoldAssignment& folds, int round, const MaskPolicy& policy);
/// Eval-mode evaluation of the fused output; the model's mode is restored.
MetricsReport evaluate(FreaUnet& model, const Dataset& dataset, const FoldAssignment& folds,
                       int round, const MaskPolicy& policy);

/// The generating transform of the synthetic data as a pseudo-model.
Predictor oracle_predictor();

struct CvResult {
  std::vector<RunRecord> rounds;
  MetricsReport combined;  ///< every test sample of every round
  /// Mean of per-round means and their std across rounds.
  MetricSummary fold_mae, fold_psnr, fold_ssim;
  std::vector<std::string> checkpoint_paths;
  std::string config_snapshot;

  /// Per-round and aggregate summary in "mean ± std" form.
  std::string summary() const;
};

/// train + evaluate for every round. With `config.checkpoint` set, round r is
/// saved as `<checkpoint>.round<r>`.
CvResult cross_validate(const TrainConfig& config, const Dataset& dataset);

struct AblationRow {
  std::string name;   ///< unet, wo-freq, wo-att, full
  std::string label;  ///< row label of the comparison table
  CvResult cv;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::string config_snapshot;

  /// Table with one row per arm and MAE / PSNR / SSIM columns (mean ± std).
  std::string to_text() const;
};

std::string ablation_label(std::string_view name);

/// cross_validate for each ablation arm with identical seeds and data.
AblationReport ablate(const TrainConfig& config, const Dataset& dataset);

/// Loads `config.data` or generates `config.subjects` synthetic pairs.
Dataset dataset_for(const TrainConfig& config);

}  // namespace frea
