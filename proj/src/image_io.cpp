#include "frea/image_io.hpp"

#include "frea/binary_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string_view>
#include <vector>

namespace frea {

namespace {

constexpr std::string_view kRawMagic = "FREA1";

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageFormatError("cannot open image file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageFile decode_raw(const std::vector<unsigned char>& bytes, const std::string& name) {
  ByteReader r(bytes, name);
  r.skip(kRawMagic.size());
  ImageFile img;
  img.height = r.u32();
  img.width = r.u32();
  img.channels = r.u32();
  img.q = r.f32();
  if (img.height == 0 || img.width == 0 || img.channels == 0) {
    throw ImageFormatError(name + ": zero image dimension in header");
  }
  if (!(img.q > 0)) throw ImageFormatError(name + ": header Q must be positive");
  const Index count = img.height * img.width * img.channels;
  if (r.remaining() < static_cast<std::size_t>(count) * 4) {
    throw ImageFormatError(name + ": truncated payload, expected " + std::to_string(count) +
                           " pixels");
  }
  img.pixels.resize(count);
  for (Index i = 0; i < count; ++i) img.pixels[i] = r.f32();
  return img;
}

// Parses one whitespace-delimited PGM header token, skipping '#' comments.
std::size_t pgm_token(const std::vector<unsigned char>& b, std::size_t& pos,
                      const std::string& name) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) {
    throw ImageFormatError(name + ": malformed PGM header");
  }
  std::size_t value = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    value = value * 10 + static_cast<std::size_t>(b[pos] - '0');
    if (value > (1u << 30)) throw ImageFormatError(name + ": PGM header value too large");
    ++pos;
  }
  return value;
}

ImageFile decode_pgm(const std::vector<unsigned char>& b, const std::string& name) {
  std::size_t pos = 2;
  const std::size_t width = pgm_token(b, pos, name);
  const std::size_t height = pgm_token(b, pos, name);
  const std::size_t maxval = pgm_token(b, pos, name);
  if (width == 0 || height == 0) throw ImageFormatError(name + ": zero PGM dimension");
  if (maxval == 0 || maxval > 65535) {
    throw ImageFormatError(name + ": PGM maxval must be in [1, 65535]");
  }
  if (pos >= b.size() || !std::isspace(b[pos])) {
    throw ImageFormatError(name + ": malformed PGM header");
  }
  ++pos;
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  const std::size_t count = width * height;
  if (b.size() - pos < count * bytes_per) {
    throw ImageFormatError(name + ": truncated PGM payload");
  }
  ImageFile img;
  img.height = static_cast<Index>(height);
  img.width = static_cast<Index>(width);
  img.channels = 1;
  img.q = static_cast<Scalar>(maxval);
  img.pixels.resize(static_cast<Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    // 16-bit samples are big-endian.
    const unsigned v = bytes_per == 1 ? b[pos + i]
                                      : (unsigned(b[pos + 2 * i]) << 8) | b[pos + 2 * i + 1];
    img.pixels[static_cast<Index>(i)] = static_cast<Scalar>(v);
  }
  return img;
}

}  // namespace

ImageFile read_image(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string name = path.string();
  if (bytes.size() >= kRawMagic.size() &&
      std::equal(kRawMagic.begin(), kRawMagic.end(), bytes.begin())) {
    try {
      return decode_raw(bytes, name);
    } catch (const ImageFormatError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw ImageFormatError(e.what());
    }
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, name);
  throw ImageFormatError(name + ": unsupported image format (unknown magic)");
}

void write_raw(const std::filesystem::path& path, const ImageFile& img) {
  if (img.pixels.size() != img.height * img.width * img.channels) {
    throw ImageFormatError("write_raw: pixel count does not match dimensions");
  }
  ByteWriter w;
  w.bytes(kRawMagic);
  w.u32(static_cast<std::uint32_t>(img.height));
  w.u32(static_cast<std::uint32_t>(img.width));
  w.u32(static_cast<std::uint32_t>(img.channels));
  w.f32(static_cast<float>(img.q));
  for (Index i = 0; i < img.pixels.size(); ++i) w.f32(static_cast<float>(img.pixels[i]));
  w.save(path);
}

void write_pgm(const std::filesystem::path& path, const ImageFile& img) {
  if (img.channels != 1) throw ImageFormatError("write_pgm: PGM holds a single channel");
  const long maxval = std::lround(img.q);
  if (maxval < 1 || maxval > 65535) throw ImageFormatError("write_pgm: Q outside [1, 65535]");
  ByteWriter w;
  w.bytes("P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
          std::to_string(maxval) + "\n");
  for (Index i = 0; i < img.pixels.size(); ++i) {
    const long v = std::clamp<long>(std::lround(img.pixels[i]), 0, maxval);
    if (maxval < 256) {
      w.u8(static_cast<std::uint8_t>(v));
    } else {
      w.u8(static_cast<std::uint8_t>(v >> 8));
      w.u8(static_cast<std::uint8_t>(v & 0xff));
    }
  }
  w.save(path);
}

void write_image(const std::filesystem::path& path, const ImageFile& img) {
  if (path.extension() == ".pgm") {
    write_pgm(path, img);
  } else {
    write_raw(path, img);
  }
}

}  // namespace frea
