// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "frea/checkpoint.hpp"
#include "frea/image_io.hpp"
#include "frea/trainer.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>

using namespace frea;
using frea::test::random_tensor;
using frea::test::relative_error;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && (a.data() == b.data()).all();
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_check() {
  const Dataset ds = synth_generate(3, 64, 21);
  const SamplePair& s = ds.samples[1];
  FreaUnet model(ModelConfig::reduced(64));
  model.set_step(3);  // fixes the dropout masks
  const LossWeights w = loss_weights(model.config());
  auto loss = [&] {
    return loss_total(model.forward(s.mr), s.pet, s.pet_low, s.pet_high, w, true).total;
  };

  std::vector<Tensor> params = model.parameters();
  const std::vector<ArrayX> grads = test::analytic_grads(loss, params);

  // A central difference that straddles a relu/abs kink measures a secant, not
  // the derivative. Such coordinates are redrawn; the probe tells them apart.
  std::mt19937_64 rng(99);
  int checked = 0, straddling = 0;
  Scalar worst = 0;
  auto check = [&](std::size_t k, Index i) {
    const auto d = test::probed_numeric_grad(loss, params[k], i, 1e-5);
    if (!d.smooth) {
      ++straddling;
      return false;
    }
    ++checked;
    worst = std::max(worst, relative_error(grads[k][i], d.value));
    return true;
  };

  // Coverage is best effort: weights feeding thousands of relus straddle a
  // kink at almost every coordinate.
  std::size_t covered = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (int attempt = 0; attempt < 20; ++attempt) {
      if (check(k, static_cast<Index>(rng() % static_cast<std::uint64_t>(params[k].numel())))) {
        ++covered;
        break;
      }
    }
  }
  Index total = 0;
  for (const Tensor& p : params) total += p.numel();
  while (checked < 256) {
    Index flat = static_cast<Index>(rng() % static_cast<std::uint64_t>(total));
    std::size_t k = 0;
    while (flat >= params[k].numel()) flat -= params[k++].numel();
    check(k, flat);
  }
  return {worst < 1e-4 && checked >= 256,
          std::to_string(checked) + " coordinates over " + std::to_string(covered) + "/" +
              std::to_string(params.size()) + " tensors (" + std::to_string(straddling) +
              " redrawn at kinks), max relative error " + fmt("%.2e", worst) + " (limit 1e-4)"};
}

// --- 2 ---------------------------------------------------------------------

Outcome frequency_reconstruction() {
  const std::pair<Scalar, Index> settings[] = {{0.5, 3}, {1.0, 5}, {1.5, 7}, {3.0, 13}, {5.0, 21}};
  std::mt19937_64 rng(22);
  Scalar worst_merge = 0, worst_linear = 0;
  for (int n = 0; n < 100; ++n) {
    const Index h = 32 + static_cast<Index>(rng() % 33), wd = 32 + static_cast<Index>(rng() % 33);
    const Tensor img = random_tensor({1, 1, h, wd}, rng, -1, 1);
    const Tensor other = random_tensor({1, 1, h, wd}, rng, -1, 1);
    const Scalar a = 4 * uniform01(rng) - 2, b = 4 * uniform01(rng) - 2;
    for (const auto& [sigma, size] : settings) {
      const FrequencyPair pair = freq_split(img, sigma, size);
      worst_merge = std::max(worst_merge, (freq_merge(pair).data() - img.data()).abs().maxCoeff());
      const auto k = gaussian_kernel(sigma, size);
      const Tensor mix = add(scale(img, a), scale(other, b));
      const ArrayX lhs = gaussian_blur(mix, k).data();
      const ArrayX rhs = a * gaussian_blur(img, k).data() + b * gaussian_blur(other, k).data();
      worst_linear = std::max(worst_linear, (lhs - rhs).abs().maxCoeff());
    }
  }
  return {worst_merge <= 1e-12 && worst_linear <= 1e-10,
          "500 splits, max merge error " + fmt("%.1e", worst_merge) + ", max linearity error " +
              fmt("%.1e", worst_linear)};
}

// --- 3 ---------------------------------------------------------------------

Outcome attention_identity() {
  bool identical = true;
  Scalar worst_sum = 0;
  int maps = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ModelConfig cfg = ModelConfig::reduced(64);
    cfg.rng_seed = seed;
    std::mt19937_64 rng(100 + seed);
    const Tensor x = random_tensor({1, 1, 64, 64}, rng);

    // Zero projections make every map uniform, i.e. identity gates.
    FreaUnet gated(cfg);
    auto params = gated.parameters();
    for (std::size_t i = params.size() - 8; i < params.size() - 4; ++i) params[i].data().setZero();
    FreaUnet plain = gated.clone();
    plain.set_switches(false, true);
    for (std::uint64_t step = 0; step < 3; ++step) {
      gated.set_step(step);
      plain.set_step(step);
      const ForwardOutput a = gated.forward(x);
      const ForwardOutput b = plain.forward(x);
      identical = identical && bit_equal(a.final_output, a.pass_a_output) &&
                  bit_equal(a.final_output, b.final_output) && bit_equal(a.low_pred, b.low_pred) &&
                  bit_equal(a.high_pred, b.high_pred);
    }

    FreaUnet live(cfg);
    for (const Tensor& m : live.forward(random_tensor({2, 1, 64, 64}, rng)).attention_maps) {
      const Index per = m.dim(2) * m.dim(3);
      for (Index n = 0; n < m.dim(0); ++n) {
        worst_sum = std::max(worst_sum, std::abs(m.data().segment(n * per, per).sum() - 1));
        ++maps;
      }
    }
  }
  return {identical && worst_sum <= 1e-10,
          std::string(identical ? "bit-identical" : "MISMATCH") + " over 12 forwards; " +
              std::to_string(maps) + " maps, max |sum - 1| " + fmt("%.1e", worst_sum)};
}

// --- 4 ---------------------------------------------------------------------

Outcome adjointness() {
  std::mt19937_64 rng(44);
  auto pick = [&](Index lo, Index hi) { return lo + static_cast<Index>(rng() % (hi - lo + 1)); };
  Scalar worst = 0;
  for (int t = 0; t < 50; ++t) {
    const Index n = pick(1, 2), ci = pick(1, 4), co = pick(1, 4), k = pick(1, 5);
    const int s = static_cast<int>(pick(1, 3)), p = static_cast<int>(pick(0, k - 1));
    const Index out = pick(1, 6);
    const Index h = (out - 1) * s + k - 2 * p;  // exact fit, so convT restores h
    if (h < 1) {
      --t;
      continue;
    }
    const Tensor a = random_tensor({n, ci, h, h}, rng);
    const Tensor w = random_tensor({co, ci, k, k}, rng);
    const Tensor b = random_tensor({n, co, out, out}, rng);
    const Scalar lhs = test::dot(conv2d(a, w, Tensor(), s, p), b);
    const Scalar rhs = test::dot(a, conv_transpose2d(b, w, Tensor(), s, p));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return {worst <= 1e-10, "50 triples, max |<Ca,b> - <a,C'b>| " + fmt("%.1e", worst)};
}

// --- 5 ---------------------------------------------------------------------

// Direct formulas over flat vectors.
struct Oracle {
  std::vector<double> r, s;
  std::size_t h, w;

  double q() const {
    double m = 0;
    for (std::size_t i = 0; i < r.size(); ++i) m = std::max({m, r[i], s[i]});
    return m;
  }
  double mae(double frac) const {
    double peak = *std::max_element(r.begin(), r.end()), sum = 0;
    int count = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r[i] > frac * peak) {
        sum += std::fabs(r[i] - s[i]);
        ++count;
      }
    }
    return sum / count;
  }
  double psnr() const {
    double se = 0;
    for (std::size_t i = 0; i < r.size(); ++i) se += (r[i] - s[i]) * (r[i] - s[i]);
    return 10 * std::log10(q() * q() / (se / r.size()));
  }
  // Weighted SSIM of one window; the global form uses uniform weights.
  double ssim_window(std::size_t y0, std::size_t x0, std::size_t size,
                     const std::vector<double>& wt) const {
    const double c1 = std::pow(0.01 * q(), 2), c2 = std::pow(0.02 * q(), 2);
    double ma = 0, mb = 0;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t i = (y0 + y) * w + x0 + x;
        ma += wt[y * size + x] * r[i];
        mb += wt[y * size + x] * s[i];
      }
    double va = 0, vb = 0, cv = 0;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t i = (y0 + y) * w + x0 + x;
        const double wi = wt[y * size + x];
        va += wi * (r[i] - ma) * (r[i] - ma);
        vb += wi * (s[i] - mb) * (s[i] - mb);
        cv += wi * (r[i] - ma) * (s[i] - mb);
      }
    return (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  double ssim_global() const {
    return ssim_window(0, 0, h, std::vector<double>(h * h, 1.0 / static_cast<double>(h * h)));
  }
  double ssim_windowed() const {
    std::vector<double> g(121);
    double z = 0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) z += g[y * 11 + x] = std::exp(-((y - 5) * (y - 5) + (x - 5) * (x - 5)) / 4.5);
    for (double& v : g) v /= z;
    double acc = 0;
    for (std::size_t y = 0; y + 11 <= h; ++y)
      for (std::size_t x = 0; x + 11 <= w; ++x) acc += ssim_window(y, x, 11, g);
    return acc / static_cast<double>((h - 10) * (w - 10));
  }
};

Outcome metric_oracles() {
  std::mt19937_64 rng(55);
  Scalar worst = 0;
  for (int t = 0; t < 50; ++t) {
    const Index n = 16 + static_cast<Index>(rng() % 17);
    const Scalar q = t % 2 ? 255.0 : 4095.0;
    ImageFile real{n, n, 1, q, ArrayX(n * n)}, syn = real;
    for (Index i = 0; i < n * n; ++i) {
      real.pixels[i] = uniform01(rng) < 0.2 ? 0.0 : q * uniform01(rng);
      syn.pixels[i] = std::clamp(real.pixels[i] + q * 0.2 * (uniform01(rng) - 0.5), 0.0, q);
    }
    const Oracle o{{real.pixels.begin(), real.pixels.end()},
                   {syn.pixels.begin(), syn.pixels.end()}, static_cast<std::size_t>(n),
                   static_cast<std::size_t>(n)};
    const Mask mask = body_mask(real, 0.01);
    worst = std::max({worst, relative_error(metric_mae(real, syn, mask), o.mae(0.01), 1.0),
                      relative_error(metric_psnr(real, syn), o.psnr(), 1.0),
                      std::abs(metric_ssim(real, syn) - o.ssim_global()),
                      std::abs(metric_ssim(real, syn, SsimMode::windowed) - o.ssim_windowed())});
  }

  ImageXd x(20, 20);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 1 + 254 * uniform01(rng);
  const bool identities = metric_mae(x, x, body_mask(x, 0.01)) == 0 && metric_ssim(x, x) == 1 &&
                          metric_psnr(ImageXd::Constant(8, 8, 255.0), ImageXd::Zero(8, 8)) == 0 &&
                          metric_psnr(ImageXd::Constant(8, 8, 10.0), ImageXd::Constant(8, 8, 9.0)) == 20 &&
                          std::isinf(metric_psnr(x, x));
  return {worst <= 1e-10 && identities,
          "50 pairs, max deviation " + fmt("%.1e", worst) + "; exact identities " +
              (identities ? "hold" : "FAIL")};
}

// --- 6 ---------------------------------------------------------------------

Outcome overfit() {
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.lr = 2e-4;
  cfg.k = 2;
  const Dataset ds = synth_generate(4, 64, 66);
  // Fold 1 holds everything: round 0 trains on all four pairs, round 1 tests them.
  FoldAssignment folds{2, {}};
  for (const auto& id : ds.subject_ids()) folds.fold_of[id] = 1;

  const MaskPolicy policy = mask_policy(cfg);
  FreaUnet untrained(cfg.effective_model());
  const Scalar mae_before = evaluate(untrained, ds, folds, 1, policy).mae.mean;
  TrainResult trained = train(cfg, ds, folds, 0);
  const Scalar mae_after = evaluate(trained.model, ds, folds, 1, policy).mae.mean;
  const auto& losses = trained.record.epoch_losses;
  const Scalar ratio = losses.back().total / losses.front().total;
  bool finite = true;
  for (const auto& l : losses) finite = finite && std::isfinite(l.total);
  const bool pass = finite && losses.size() == 300 && ratio <= 0.1 && mae_before >= 5 * mae_after;
  return {pass, "loss " + fmt("%.4f", losses.front().total) + " -> " +
                    fmt("%.4f", losses.back().total) + " (ratio " + fmt("%.3f", ratio) +
                    "), MAE " + fmt("%.2f", mae_before) + " -> " + fmt("%.2f", mae_after) +
                    " (" + fmt("%.1f", mae_before / mae_after) + "x); need ratio <= 0.1 and >= 5x"};
}

// --- 7 ---------------------------------------------------------------------

Outcome protocol() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.subjects = 30;
  const Dataset ds = dataset_for(cfg);
  const FoldAssignment folds = kfold_split(ds, 3, cfg.data_seed);
  bool ok = true;
  std::set<std::string> tested;
  for (int r = 0; r < 3; ++r) {
    const auto train_split = iterate(ds, folds, r, Split::train, 0);
    const auto test_split = iterate(ds, folds, r, Split::test, 0);
    ok = ok && folds.members(r).size() == 10 && train_split.size() == 20 && test_split.size() == 10;
    for (auto* s : test_split) ok = ok && tested.insert(s->subject_id).second;
  }
  ok = ok && tested.size() == 30;

  const AblationReport a = ablate(cfg, ds);
  const AblationReport b = ablate(cfg, ds);
  const std::string text = a.to_text();
  std::istringstream lines(text);
  int table_rows = 0;
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty() && line[0] != '#' && std::count(line.begin(), line.end(), '\xb1') == 3) {
      ++table_rows;
    }
  }
  std::set<std::string> names;
  for (const auto& row : a.rows) names.insert(row.name);
  bool reproducible = text == b.to_text();
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    for (std::size_t r = 0; r < a.rows[i].cv.rounds.size(); ++r) {
      reproducible = reproducible && a.rows[i].cv.rounds[r].checkpoint_hash ==
                                         b.rows[i].cv.rounds[r].checkpoint_hash;
    }
  }
  const bool pass = ok && table_rows == 4 && names.size() == 4 && reproducible;
  return {pass, std::string("folds 10/10/10 with 20/10 rounds ") + (ok ? "ok" : "FAIL") +
                    "; ablation table rows " + std::to_string(table_rows) + "; reruns " +
                    (reproducible ? "bit-identical" : "DIFFER")};
}

// --- 8 ---------------------------------------------------------------------

Outcome persistence() {
  const fs::path dir = fs::temp_directory_path() / "frea_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.subjects = 6;
  cfg.checkpoint = (dir / "m.ckpt").string();
  const Dataset ds = dataset_for(cfg);
  const FoldAssignment folds = kfold_split(ds, cfg.k, cfg.data_seed);
  TrainResult trained = train(cfg, ds, folds, 0);
  FreaUnet loaded = load_checkpoint(cfg.checkpoint);
  const auto bytes = serialize(trained.model);
  bool ckpt_ok = serialize(loaded) == bytes && content_hash(bytes) == trained.record.checkpoint_hash;
  const auto pa = trained.model.parameters(), pb = loaded.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) ckpt_ok = ckpt_ok && bit_equal(pa[i], pb[i]);
  const MetricsReport ra = evaluate(trained.model, ds, folds, 0, mask_policy(cfg));
  ckpt_ok = ckpt_ok && ra == evaluate(loaded, ds, folds, 0, mask_policy(cfg));

  // Raw images: random floats including extremes and signed zero.
  std::mt19937_64 rng(88);
  ImageFile img{7, 9, 3, 65535, ArrayX(7 * 9 * 3)};
  for (Index i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(std::ldexp(uniform01(rng) - 0.5, static_cast<int>(rng() % 200) - 100));
  }
  img.pixels[0] = -0.0;
  img.pixels[1] = std::numeric_limits<float>::max();
  img.pixels[2] = std::numeric_limits<float>::denorm_min();
  write_image(dir / "x.frea", img);
  const ImageFile back = read_image(dir / "x.frea");
  bool raw_ok = back.height == 7 && back.width == 9 && back.channels == 3 && back.q == img.q &&
                std::memcmp(back.pixels.data(), img.pixels.data(), sizeof(double) * 189) == 0;

  // CSV: header, one line per sample, then mean and std rows recomputed here.
  std::istringstream csv(ra.to_csv());
  std::vector<std::string> lines;
  for (std::string l; std::getline(csv, l);) lines.push_back(l);
  double sum = 0, sq = 0;
  for (const auto& r : ra.rows) sum += r.mae;
  const double mean = sum / ra.count();
  for (const auto& r : ra.rows) sq += (r.mae - mean) * (r.mae - mean);
  const bool csv_ok =
      lines.size() == ra.count() + 3 && lines[0] == "sample_id,fold,mae,psnr,ssim" &&
      lines[1].rfind(ra.rows[0].sample_id + ",0,", 0) == 0 &&
      lines[lines.size() - 2].rfind("mean,," + format_metric(mean) + ",", 0) == 0 &&
      lines.back().rfind("std,," + format_metric(std::sqrt(sq / ra.count())) + ",", 0) == 0;
  fs::remove_all(dir);
  return {ckpt_ok && raw_ok && csv_ok, std::string("checkpoint ") + (ckpt_ok ? "ok" : "FAIL") +
                                           ", raw image " + (raw_ok ? "ok" : "FAIL") +
                                           ", CSV contract " + (csv_ok ? "ok" : "FAIL")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gradient correctness", gradient_check},
      {"2 frequency reconstruction", frequency_reconstruction},
      {"3 attention identity", attention_identity},
      {"4 conv/transpose adjointness", adjointness},
      {"5 metric oracles", metric_oracles},
      {"6 overfit convergence", overfit},
      {"7 protocol fidelity", protocol},
      {"8 persistence", persistence},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
