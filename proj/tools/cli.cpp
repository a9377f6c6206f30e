#include "cli.hpp"

#include "frea/checkpoint.hpp"
#include "frea/config.hpp"
#include "frea/data.hpp"
#include "frea/image_io.hpp"
#include "frea/metrics.hpp"
#include "frea/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace frea::cli {

namespace {

/// Raised for problems the user can fix by changing the command line.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Holds one string option per config key so file values can be applied
/// first and explicit flags second.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file");
    for (const std::string& key : config_keys()) {
      options[key] = app.add_option(flag_for_key(key), values[key], "config key " + key);
    }
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) set_config_value(cfg, key, values.at(key));
    }
    return cfg;
  }

  bool given(const std::string& key) const {
    return options.at(key)->count() > 0;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

/// Fails before any training when an output location cannot be created.
void check_writable(const std::string& path) {
  if (path.empty()) return;
  const std::filesystem::path p(path);
  const auto dir = p.has_parent_path() ? p.parent_path() : std::filesystem::path(".");
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("output directory '" + dir.string() + "' does not exist");
  }
}

std::string commented(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out += "# " + line + "\n";
  return out;
}

std::string loss_trace(const RunRecord& r) {
  std::ostringstream os;
  os << "epoch,total,l_low,l_high,l_rec\n";
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) {
    const LossBreakdown& b = r.epoch_losses[e];
    os << e + 1 << ',' << format_metric(b.total) << ',' << format_metric(b.l_low) << ','
       << format_metric(b.l_high) << ',' << format_metric(b.l_rec) << '\n';
  }
  return os.str();
}

std::string metrics_summary(const std::string& snapshot, const MetricsReport& m) {
  char line[256];
  std::snprintf(line, sizeof line, "n=%zu mae=%s±%s psnr=%s±%s ssim=%s±%s\n", m.count(),
                format_metric(m.mae.mean).c_str(), format_metric(m.mae.std).c_str(),
                format_metric(m.psnr.mean).c_str(), format_metric(m.psnr.std).c_str(),
                format_metric(m.ssim.mean).c_str(), format_metric(m.ssim.std).c_str());
  return commented(snapshot) + "# mask: " + m.mask_policy + "\n" + line;
}

ImageFile single_channel(const std::string& path) {
  ImageFile img = read_image(path);
  if (img.channels != 1) {
    throw std::runtime_error("'" + path + "' has " + std::to_string(img.channels) +
                             " channels; expected 1");
  }
  return img;
}

/// Splits an f32 pixel into two f32 parts whose double sum is the pixel.
std::pair<float, float> exact_split(double x, double low) {
  const auto lo = static_cast<float>(low);
  const auto hi = static_cast<float>(x - lo);
  if (static_cast<double>(lo) + static_cast<double>(hi) == x) return {lo, hi};
  const auto hi2 = static_cast<float>(x - low);
  const auto lo2 = static_cast<float>(x - hi2);
  if (static_cast<double>(lo2) + static_cast<double>(hi2) == x) return {lo2, hi2};
  return {static_cast<float>(x), 0.0f};
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& out_dir, int subjects, Index size, std::uint64_t seed,
                 const FrequencyParams& freq, std::ostream& out) {
  std::filesystem::create_directories(out_dir);
  const Dataset ds = synth_generate(subjects, size, seed, freq);
  save_dataset(ds, out_dir);
  out << "wrote " << ds.samples.size() << " subjects (" << size << "x" << size << ") to "
      << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const TrainConfig& cfg, int round, std::ostream& out) {
  check_writable(cfg.checkpoint);
  check_writable(cfg.report);
  const Dataset ds = dataset_for(cfg);
  const FoldAssignment folds = kfold_split(ds, cfg.k, cfg.data_seed);
  const TrainResult result = train(cfg, ds, folds, round);
  const std::string text = commented(result.record.config_snapshot) + loss_trace(result.record);
  if (!cfg.report.empty()) write_text(cfg.report + ".loss.csv", text);
  const LossBreakdown& last = result.record.epoch_losses.back();
  out << "round " << round << ": " << result.record.epoch_losses.size()
      << " epochs, final loss " << format_metric(last.total) << ", checkpoint "
      << result.record.checkpoint_hash << "\n";
  return kExitOk;
}

int cmd_eval(const TrainConfig& cfg, int round, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw UsageError("eval needs --checkpoint");
  check_writable(cfg.report);
  FreaUnet model = load_checkpoint(cfg.checkpoint);
  const Dataset ds = dataset_for(cfg);
  const FoldAssignment folds = kfold_split(ds, cfg.k, cfg.data_seed);
  const MetricsReport report = evaluate(model, ds, folds, round, mask_policy(cfg));
  const std::string summary = metrics_summary(to_text(cfg), report);
  if (!cfg.report.empty()) {
    write_text(cfg.report + ".csv", report.to_csv());
    write_text(cfg.report + ".txt", summary);
  }
  out << summary;
  return kExitOk;
}

int cmd_cv(const TrainConfig& cfg, std::ostream& out) {
  check_writable(cfg.checkpoint);
  check_writable(cfg.report);
  const Dataset ds = dataset_for(cfg);
  const CvResult cv = cross_validate(cfg, ds);
  if (!cfg.report.empty()) {
    for (const RunRecord& r : cv.rounds) {
      const std::string prefix = cfg.report + ".round" + std::to_string(r.round);
      write_text(prefix + ".csv", r.metrics->to_csv());
      write_text(prefix + ".loss.csv", commented(r.config_snapshot) + loss_trace(r));
    }
    write_text(cfg.report + ".csv", cv.combined.to_csv());
    write_text(cfg.report + ".txt", cv.summary());
  }
  out << cv.summary();
  return kExitOk;
}

int cmd_ablate(const TrainConfig& cfg, std::ostream& out) {
  check_writable(cfg.checkpoint);
  check_writable(cfg.report);
  const Dataset ds = dataset_for(cfg);
  const AblationReport report = ablate(cfg, ds);
  if (!cfg.report.empty()) {
    for (const AblationRow& row : report.rows) {
      write_text(cfg.report + "." + row.name + ".csv", row.cv.combined.to_csv());
    }
    write_text(cfg.report + ".txt", report.to_text());
  }
  out << report.to_text();
  return kExitOk;
}

int cmd_split_freq(const std::string& in, Scalar sigma, Index size, const std::string& out_low,
                   const std::string& out_high, std::ostream& out) {
  const ImageFile img = single_channel(in);
  const ImageXd plane = img.plane();
  const ImageXd low = gaussian_blur(plane, gaussian_kernel(sigma, size));
  ImageFile lo = img, hi = img;
  for (Index i = 0; i < img.pixels.size(); ++i) {
    const auto [l, h] = exact_split(img.pixels[i], low.data()[i]);
    lo.pixels[i] = l;
    hi.pixels[i] = h;
  }
  write_raw(out_low, lo);
  write_raw(out_high, hi);
  out << "split " << in << " (sigma " << sigma << ", size " << size << ")\n";
  return kExitOk;
}

int cmd_merge_freq(const std::string& low, const std::string& high, const std::string& out_path,
                   std::ostream& out) {
  const ImageFile lo = single_channel(low);
  const ImageFile hi = single_channel(high);
  if (lo.height != hi.height || lo.width != hi.width) {
    throw std::runtime_error("band sizes differ");
  }
  ImageFile merged = lo;
  merged.pixels = (lo.pixels + hi.pixels).cast<float>().cast<double>();
  write_raw(out_path, merged);
  out << "merged into " << out_path << "\n";
  return kExitOk;
}

int cmd_metrics(const std::string& a, const std::string& b, Scalar threshold,
                const std::string& ssim_mode, std::ostream& out) {
  if (ssim_mode != "global" && ssim_mode != "windowed") {
    throw UsageError("--ssim-mode must be global or windowed");
  }
  const ImageFile real = single_channel(a);
  const ImageFile syn = single_channel(b);
  const Mask mask = body_mask(real, threshold);
  const SsimMode mode = ssim_mode == "global" ? SsimMode::global : SsimMode::windowed;
  out << "mae=" << format_metric(metric_mae(real, syn, mask))
      << " psnr=" << format_metric(metric_psnr(real, syn))
      << " ssim=" << format_metric(metric_ssim(real, syn, mode)) << "\n";
  return kExitOk;
}

int cmd_info(const std::string& checkpoint, const std::string& image, std::ostream& out) {
  if (checkpoint.empty() == image.empty()) {
    throw UsageError("info needs exactly one of --checkpoint or --in");
  }
  if (!image.empty()) {
    const ImageFile img = read_image(image);
    out << image << ": " << img.height << "x" << img.width << "x" << img.channels
        << " q=" << format_metric(img.q) << " min=" << format_metric(img.pixels.minCoeff())
        << " max=" << format_metric(img.pixels.maxCoeff()) << "\n";
    return kExitOk;
  }
  std::ifstream f(checkpoint, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + checkpoint + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), {});
  const FreaUnet model = deserialize(bytes, checkpoint);
  out << model_config_to_text(model.config());
  out << "parameters = " << model.parameter_count() << "\n";
  out << "content_hash = " << content_hash(bytes) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-aware attention U-net for MR to PET synthesis", "frea"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic paired dataset");
  std::string gen_out;
  int gen_subjects = 30;
  Index gen_size = 64;
  std::uint64_t gen_seed = 0;
  FrequencyParams gen_freq;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--subjects", gen_subjects, "number of subjects")->capture_default_str();
  gen->add_option("--size", gen_size, "image side, a multiple of 64")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();

  // train / eval / cv / ablate share the config flags.
  auto* train_cmd = app.add_subcommand("train", "Train one cross-validation round");
  ConfigFlags train_flags;
  train_flags.attach(*train_cmd);
  int train_round = 0;
  train_cmd->add_option("--round", train_round, "cross-validation round")->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a round's test split");
  ConfigFlags eval_flags;
  eval_flags.attach(*eval_cmd);
  int eval_round = 0;
  eval_cmd->add_option("--round", eval_round, "cross-validation round")->capture_default_str();

  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  ConfigFlags cv_flags;
  cv_flags.attach(*cv_cmd);

  auto* ablate_cmd = app.add_subcommand("ablate", "Cross-validate every ablation arm");
  ConfigFlags ablate_flags;
  ablate_flags.attach(*ablate_cmd);

  // split-freq / merge-freq
  auto* split = app.add_subcommand("split-freq", "Split an image into low and high bands");
  std::string split_in, split_low, split_high;
  Scalar split_sigma = FrequencyParams{}.sigma;
  Index split_size = FrequencyParams{}.kernel_size;
  split->add_option("--in", split_in, "input image")->required();
  split->add_option("--sigma", split_sigma, "Gaussian sigma")->capture_default_str();
  split->add_option("--kernel-size", split_size, "odd kernel side")->capture_default_str();
  split->add_option("--out-low", split_low, "low band output")->required();
  split->add_option("--out-high", split_high, "high band output")->required();

  auto* merge = app.add_subcommand("merge-freq", "Sum a low and a high band");
  std::string merge_low, merge_high, merge_out;
  merge->add_option("--low", merge_low, "low band")->required();
  merge->add_option("--high", merge_high, "high band")->required();
  merge->add_option("--out", merge_out, "output image")->required();

  // metrics / info
  auto* metrics = app.add_subcommand("metrics", "MAE, PSNR and SSIM between two images");
  std::string metrics_a, metrics_b, metrics_ssim = "global";
  Scalar metrics_threshold = kDefaultMaskThreshold;
  metrics->add_option("--a", metrics_a, "reference image")->required();
  metrics->add_option("--b", metrics_b, "synthesized image")->required();
  metrics->add_option("--mask-threshold", metrics_threshold, "body mask fraction of max")
      ->capture_default_str();
  metrics->add_option("--ssim-mode", metrics_ssim, "global or windowed")->capture_default_str();

  auto* info = app.add_subcommand("info", "Describe a checkpoint or an image");
  std::string info_ckpt, info_in;
  info->add_option("--checkpoint", info_ckpt, "checkpoint file");
  info->add_option("--in", info_in, "image file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    TrainConfig cfg;
    try {
      if (active == train_cmd) cfg = train_flags.resolve();
      if (active == eval_cmd) cfg = eval_flags.resolve();
      if (active == cv_cmd) cfg = cv_flags.resolve();
      if (active == ablate_cmd) cfg = ablate_flags.resolve();
      if (active == train_cmd && cfg.data.empty()) throw UsageError("train needs --data");
      if (active == train_cmd || active == cv_cmd || active == ablate_cmd) cfg.validate();
      if (active == train_cmd && (train_round < 0 || train_round >= cfg.k)) {
        throw UsageError("--round must lie in [0, k)");
      }
      if (active == eval_cmd && (eval_round < 0 || eval_round >= cfg.k)) {
        throw UsageError("--round must lie in [0, k)");
      }
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }

    if (active == gen) {
      if (gen_subjects < 3) throw UsageError("--subjects must be >= 3");
      if (gen_size < 64 || gen_size % 64 != 0) throw UsageError("--size must be a multiple of 64");
      return cmd_gen_data(gen_out, gen_subjects, gen_size, gen_seed, gen_freq, out);
    }
    if (active == train_cmd) return cmd_train(cfg, train_round, out);
    if (active == eval_cmd) return cmd_eval(cfg, eval_round, out);
    if (active == cv_cmd) return cmd_cv(cfg, out);
    if (active == ablate_cmd) return cmd_ablate(cfg, out);
    if (active == split) {
      if (!(split_sigma > 0) || split_size < 1 || split_size % 2 == 0) {
        throw UsageError("--sigma must be positive and --kernel-size odd");
      }
      return cmd_split_freq(split_in, split_sigma, split_size, split_low, split_high, out);
    }
    if (active == merge) return cmd_merge_freq(merge_low, merge_high, merge_out, out);
    if (active == metrics) {
      return cmd_metrics(metrics_a, metrics_b, metrics_threshold, metrics_ssim, out);
    }
    return cmd_info(info_ckpt, info_in, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << active->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace frea::cli
