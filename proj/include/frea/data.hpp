#pragma once

#include "frea/image_ops.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace frea {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian split used to build the branch targets.
struct FrequencyParams {
  Scalar sigma = 3.0;
  Index kernel_size = 13;

  bool operator==(const FrequencyParams&) const = default;
};

/// Affine map y = gain * x + offset used to bring a band into [-1, 1].
struct BandScale {
  Scalar gain = 1.0;
  Scalar offset = 0.0;

  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& y) const;
};

struct SamplePair {
  std::string subject_id;
  Tensor mr;        ///< (1,1,S,S) in [-1, 1]
  Tensor pet;       ///< (1,1,S,S) in [-1, 1]
  Tensor pet_low;   ///< scaled low band of pet
  Tensor pet_high;  ///< scaled high band of pet
  Scalar q = 1;     ///< PET maximal intensity
  Scalar mr_q = 1;
  ImageFile pet_image;  ///< ground truth in intensity units
};

struct Dataset {
  std::vector<SamplePair> samples;  ///< sorted by subject_id
  Index size = 0;
  FrequencyParams freq;
  BandScale low_scale;
  BandScale high_scale;

  std::vector<std::string> subject_ids() const;
  const SamplePair& at(const std::string& subject_id) const;
};

/// Normalizes a list of (id, mr, pet) images of equal size and derives the
/// scaled frequency targets. Band scales are fit over the whole list.
Dataset prepare_dataset(std::vector<std::tuple<std::string, ImageFile, ImageFile>> pairs,
                        const FrequencyParams& freq);

/// Intensity range of generated images.
inline constexpr Scalar kSynthQ = 255.0;

/// Procedural MR-like slice: smoothed ellipses inside a head outline plus fine texture.
ImageXd synth_mr(Index size, std::uint64_t seed);
/// Fixed MR -> PET mapping: smoothstep remap, Gaussian blur, smooth bias field.
ImageXd synth_transform(const ImageXd& mr);

/// Rounds every pixel to the nearest float, the precision of the raw format.
ImageXd as_f32(const ImageXd& img);

/// n paired subjects "subject_000".. with PET = as_f32(synth_transform(MR)).
Dataset synth_generate(int n_subjects, Index size, std::uint64_t seed,
                       const FrequencyParams& freq = {});

/// Writes `<id>_mr.frea` / `<id>_pet.frea` for every sample.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct CropOffsets {
  Index top = 0;
  Index left = 0;
};
CropOffsets center_crop_offsets(Index height, Index width, Index size);
ImageFile center_crop(const ImageFile& img, Index size);

/// Pairs `<subject>_mr.<ext>` with `<subject>_pet.<ext>` (ext: frea or pgm),
/// center-crops to size x size and prepares targets.
Dataset load_dataset(const std::filesystem::path& dir, Index size,
                     const FrequencyParams& freq = {});

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;

  std::vector<std::string> members(int fold) const;
  bool operator==(const FoldAssignment&) const = default;
};

/// Seeded shuffle of the sorted subject list, then round-robin over k folds.
FoldAssignment kfold_split(const std::vector<std::string>& subject_ids, int k,
                           std::uint64_t seed);
FoldAssignment kfold_split(const Dataset& dataset, int k, std::uint64_t seed);

enum class Split { train, test };

/// Samples of one CV round. Test: sorted by subject. Train: shuffled with a
/// seed derived from (seed, round, epoch).
std::vector<const SamplePair*> iterate(const Dataset& dataset, const FoldAssignment& folds,
                                       int round, Split split, std::uint64_t seed,
                                       int epoch = 0);

}  // namespace frea
