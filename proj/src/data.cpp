#include "frea/data.hpp"

#include "frea/image_io.hpp"
#include "frea/metrics.hpp"
#include "frea/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <tuple>

namespace frea {

Tensor BandScale::apply(const Tensor& x) const {
  return Tensor(x.shape(), x.data() * gain + offset);
}

Tensor BandScale::invert(const Tensor& y) const {
  return Tensor(y.shape(), (y.data() - offset) / gain);
}

std::vector<std::string> Dataset::subject_ids() const {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.subject_id);
  return ids;
}

const SamplePair& Dataset::at(const std::string& subject_id) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), subject_id,
                             [](const SamplePair& s, const std::string& id) {
                               return s.subject_id < id;
                             });
  if (it == samples.end() || it->subject_id != subject_id) {
    throw DataError("unknown subject '" + subject_id + "'");
  }
  return *it;
}

namespace {

BandScale fit_range(Scalar lo, Scalar hi) {
  if (hi - lo <= 0) return {1.0, -lo};
  const Scalar gain = 2.0 / (hi - lo);
  return {gain, -1.0 - gain * lo};
}

}  // namespace

Dataset prepare_dataset(std::vector<std::tuple<std::string, ImageFile, ImageFile>> pairs,
                        const FrequencyParams& freq) {
  if (pairs.empty()) throw DataError("dataset is empty");
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });

  Dataset ds;
  ds.freq = freq;
  ds.size = std::get<1>(pairs.front()).height;
  std::vector<FrequencyPair> bands;
  Scalar low_min = std::numeric_limits<Scalar>::infinity(), low_max = -low_min, high_abs = 0;
  for (auto& [id, mr, pet] : pairs) {
    if (mr.height != ds.size || mr.width != ds.size || pet.height != ds.size ||
        pet.width != ds.size) {
      throw DataError("subject '" + id + "': images are not " + std::to_string(ds.size) + "x" +
                      std::to_string(ds.size));
    }
    SamplePair s;
    s.subject_id = id;
    s.mr = normalize(mr);
    s.pet = normalize(pet);
    s.q = pet.q;
    s.mr_q = mr.q;
    s.pet_image = pet;
    bands.push_back(freq_split(s.pet, freq.sigma, freq.kernel_size));
    low_min = std::min(low_min, bands.back().low.data().minCoeff());
    low_max = std::max(low_max, bands.back().low.data().maxCoeff());
    high_abs = std::max(high_abs, bands.back().high.data().abs().maxCoeff());
    ds.samples.push_back(std::move(s));
  }
  for (std::size_t i = 1; i < ds.samples.size(); ++i) {
    if (ds.samples[i].subject_id == ds.samples[i - 1].subject_id) {
      throw DataError("duplicate subject '" + ds.samples[i].subject_id + "'");
    }
  }
  ds.low_scale = fit_range(low_min, low_max);
  ds.high_scale = {high_abs > 0 ? 1.0 / high_abs : 1.0, 0.0};
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    ds.samples[i].pet_low = ds.low_scale.apply(bands[i].low);
    ds.samples[i].pet_high = ds.high_scale.apply(bands[i].high);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic paired data

ImageXd synth_mr(Index size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform01(rng); };
  const Scalar s = static_cast<Scalar>(size);

  struct Ellipse {
    Scalar cx, cy, rx, ry, angle, value;
  };
  auto inside = [](const Ellipse& e, Scalar x, Scalar y) {
    const Scalar dx = x - e.cx, dy = y - e.cy;
    const Scalar c = std::cos(e.angle), sn = std::sin(e.angle);
    const Scalar u = (c * dx + sn * dy) / e.rx, v = (-sn * dx + c * dy) / e.ry;
    return u * u + v * v <= 1.0;
  };

  const Ellipse head{s / 2 + uniform(-0.03, 0.03) * s, s / 2 + uniform(-0.03, 0.03) * s,
                     uniform(0.36, 0.42) * s, uniform(0.40, 0.46) * s, uniform(-0.2, 0.2),
                     uniform(0.30, 0.40)};
  std::vector<Ellipse> blobs;
  const int n_blobs = 3 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n_blobs; ++i) {
    blobs.push_back({head.cx + uniform(-0.2, 0.2) * s, head.cy + uniform(-0.2, 0.2) * s,
                     uniform(0.05, 0.18) * s, uniform(0.05, 0.18) * s,
                     uniform(0.0, std::numbers::pi), uniform(-0.15, 0.45)});
  }

  ImageXd img = ImageXd::Zero(size, size);
  Mask head_mask(size, size);
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const Scalar px = static_cast<Scalar>(x) + 0.5, py = static_cast<Scalar>(y) + 0.5;
      head_mask(y, x) = inside(head, px, py);
      if (!head_mask(y, x)) continue;
      Scalar v = head.value;
      for (const auto& b : blobs) {
        if (inside(b, px, py)) v += b.value;
      }
      img(y, x) = v;
    }
  }
  img = gaussian_blur(img, gaussian_kernel<Scalar>(1.0, 5));

  ImageXd texture(size, size);
  for (Index i = 0; i < texture.size(); ++i) texture.data()[i] = 0.05 * gaussian(rng);
  texture = gaussian_blur(texture, gaussian_kernel<Scalar>(0.7, 3));
  img += head_mask.select(texture, 0.0);

  return img.max(0.0).min(1.0) * kSynthQ;
}

ImageXd synth_transform(const ImageXd& mr) {
  const ImageXd u = (mr / kSynthQ).max(0.0).min(1.0);
  const ImageXd remapped = u.square() * (3.0 - 2.0 * u);
  const ImageXd blurred = gaussian_blur(remapped, gaussian_kernel<Scalar>(1.5, 7));
  const Index h = mr.rows(), w = mr.cols();
  ImageXd pet(h, w);
  for (Index y = 0; y < h; ++y) {
    const Scalar fy = (static_cast<Scalar>(y) + 0.5) / static_cast<Scalar>(h) - 0.5;
    for (Index x = 0; x < w; ++x) {
      const Scalar fx = (static_cast<Scalar>(x) + 0.5) / static_cast<Scalar>(w) - 0.5;
      const Scalar bias = 0.75 + 0.25 * std::cos(std::numbers::pi * fx) *
                                     std::cos(std::numbers::pi * (fy + 0.15));
      pet(y, x) = blurred(y, x) * bias;
    }
  }
  return pet.max(0.0).min(1.0) * kSynthQ;
}

ImageXd as_f32(const ImageXd& img) { return img.cast<float>().cast<Scalar>(); }

Dataset synth_generate(int n_subjects, Index size, std::uint64_t seed,
                       const FrequencyParams& freq) {
  if (n_subjects < 3) throw DataError("synthetic data needs at least 3 subjects");
  if (size < 64 || size % 64 != 0) {
    throw DataError("synthetic image size must be a positive multiple of 64, got " +
                    std::to_string(size));
  }
  std::vector<std::tuple<std::string, ImageFile, ImageFile>> pairs;
  for (int i = 0; i < n_subjects; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "subject_%03d", i);
    // Stored at f32 precision so a saved dataset reloads unchanged.
    const ImageXd mr = as_f32(synth_mr(size, mix_seed(seed, static_cast<std::uint64_t>(i))));
    pairs.emplace_back(id, ImageFile::from_plane(mr, kSynthQ),
                       ImageFile::from_plane(as_f32(synth_transform(mr)), kSynthQ));
  }
  return prepare_dataset(std::move(pairs), freq);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : dataset.samples) {
    write_raw(dir / (s.subject_id + "_mr.frea"), denormalize(s.mr, s.mr_q));
    write_raw(dir / (s.subject_id + "_pet.frea"), s.pet_image);
  }
}

// ---------------------------------------------------------------------------
// Directory loading

CropOffsets center_crop_offsets(Index height, Index width, Index size) {
  if (height < size || width < size) {
    throw DataError("image " + std::to_string(height) + "x" + std::to_string(width) +
                    " is smaller than the crop size " + std::to_string(size));
  }
  return {(height - size) / 2, (width - size) / 2};
}

ImageFile center_crop(const ImageFile& img, Index size) {
  const CropOffsets off = center_crop_offsets(img.height, img.width, size);
  return ImageFile::from_plane(img.plane().block(off.top, off.left, size, size), img.q);
}

Dataset load_dataset(const std::filesystem::path& dir, Index size, const FrequencyParams& freq) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("dataset directory '" + dir.string() + "' does not exist");
  }
  std::map<std::string, std::filesystem::path> mr_files, pet_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext != ".frea" && ext != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    for (auto [suffix, files] : {std::pair{std::string("_mr"), &mr_files},
                                 std::pair{std::string("_pet"), &pet_files}}) {
      if (stem.size() > suffix.size() &&
          stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
        (*files)[stem.substr(0, stem.size() - suffix.size())] = entry.path();
      }
    }
  }
  std::set<std::string> subjects;
  for (const auto& [id, _] : mr_files) subjects.insert(id);
  for (const auto& [id, _] : pet_files) subjects.insert(id);
  if (subjects.empty()) throw DataError("no <subject>_mr / <subject>_pet files in " + dir.string());

  std::vector<std::tuple<std::string, ImageFile, ImageFile>> pairs;
  for (const auto& id : subjects) {
    if (!mr_files.count(id)) throw DataError("subject '" + id + "': missing MR partner file");
    if (!pet_files.count(id)) throw DataError("subject '" + id + "': missing PET partner file");
    ImageFile mr, pet;
    try {
      mr = read_image(mr_files[id]);
      pet = read_image(pet_files[id]);
    } catch (const std::exception& e) {
      throw DataError("subject '" + id + "': " + e.what());
    }
    if (mr.height != pet.height || mr.width != pet.width || mr.channels != pet.channels) {
      throw DataError("subject '" + id + "': MR " + std::to_string(mr.height) + "x" +
                      std::to_string(mr.width) + " and PET " + std::to_string(pet.height) +
                      "x" + std::to_string(pet.width) + " dimensions differ");
    }
    if (mr.channels != 1) throw DataError("subject '" + id + "': multi-channel images unsupported");
    try {
      pairs.emplace_back(id, center_crop(mr, size), center_crop(pet, size));
    } catch (const DataError& e) {
      throw DataError("subject '" + id + "': " + e.what());
    }
  }
  return prepare_dataset(std::move(pairs), freq);
}

// ---------------------------------------------------------------------------
// Cross-validation

std::vector<std::string> FoldAssignment::members(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

FoldAssignment kfold_split(const std::vector<std::string>& subject_ids, int k,
                           std::uint64_t seed) {
  std::vector<std::string> ids = subject_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("kfold_split: duplicate subject ids");
  }
  if (k < 2 || static_cast<std::size_t>(k) > ids.size()) {
    throw DataError("kfold_split: k must lie in [2, " + std::to_string(ids.size()) + "], got " +
                    std::to_string(k));
  }
  std::mt19937_64 rng(seed);
  shuffle(ids, rng);
  FoldAssignment folds{k, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) folds.fold_of[ids[i]] = static_cast<int>(i % k);
  return folds;
}

FoldAssignment kfold_split(const Dataset& dataset, int k, std::uint64_t seed) {
  return kfold_split(dataset.subject_ids(), k, seed);
}

std::vector<const SamplePair*> iterate(const Dataset& dataset, const FoldAssignment& folds,
                                       int round, Split split, std::uint64_t seed, int epoch) {
  if (round < 0 || round >= folds.k) {
    throw DataError("round " + std::to_string(round) + " outside [0, " + std::to_string(folds.k) +
                    ")");
  }
  std::vector<const SamplePair*> out;
  for (const auto& s : dataset.samples) {
    auto it = folds.fold_of.find(s.subject_id);
    if (it == folds.fold_of.end()) {
      throw DataError("subject '" + s.subject_id + "' has no fold assignment");
    }
    if ((it->second == round) == (split == Split::test)) out.push_back(&s);
  }
  if (out.empty()) throw DataError("empty split for round " + std::to_string(round));
  if (split == Split::train) {
    std::mt19937_64 rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(round)),
                                 static_cast<std::uint64_t>(epoch)));
    shuffle(out, rng);
  }
  return out;
}

}  // namespace frea
