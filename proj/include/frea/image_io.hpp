#pragma once

#include "frea/image_ops.hpp"

#include <filesystem>
#include <stdexcept>

namespace frea {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a raw-float ("FREA1") or binary PGM ("P5") file, detected by magic.
ImageFile read_image(const std::filesystem::path& path);

/// Writes PGM for a ".pgm" extension (Q becomes maxval, pixels rounded and
/// clamped to [0, maxval]); raw-float otherwise.
void write_image(const std::filesystem::path& path, const ImageFile& img);

/// Raw-float layout: "FREA1", u32 height, u32 width, u32 channels, f32 Q,
/// then H*W*C f32 pixels, all little-endian.
void write_raw(const std::filesystem::path& path, const ImageFile& img);
void write_pgm(const std::filesystem::path& path, const ImageFile& img);

}  // namespace frea
