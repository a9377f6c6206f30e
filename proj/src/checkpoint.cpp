#include "frea/checkpoint.hpp"

#include "frea/binary_io.hpp"
#include "frea/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <memory>
#include <stdexcept>

namespace frea {

namespace {

constexpr std::string_view kMagic = "FREAM1";

void write_tensors(ByteWriter& w, const std::vector<Tensor>& tensors) {
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    w.u32(static_cast<std::uint32_t>(t.ndim()));
    for (Index d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < t.numel(); ++i) w.f64(t.data()[i]);
  }
}

void read_tensors(ByteReader& r, const std::vector<Tensor>& into, const std::string& origin,
                  const char* what) {
  const std::uint32_t count = r.u32();
  if (count != into.size()) {
    throw std::runtime_error(origin + ": expected " + std::to_string(into.size()) + " " + what +
                             " tensors, found " + std::to_string(count));
  }
  for (const Tensor& t : into) {
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape()) {
      throw std::runtime_error(origin + ": stored shape " + to_string(shape) +
                               " does not match model shape " + to_string(t.shape()));
    }
    ArrayX& data = t.node()->data;
    for (Index i = 0; i < data.size(); ++i) data[i] = r.f64();
  }
}

}  // namespace

std::vector<std::uint8_t> serialize(const FreaUnet& model) {
  ByteWriter w;
  w.bytes(kMagic);
  const std::string text = model_config_to_text(model.config());
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  write_tensors(w, model.parameters());
  write_tensors(w, model.buffers());
  return w.buffer();
}

FreaUnet deserialize(const std::vector<unsigned char>& bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.bytes(kMagic.size()) != kMagic) throw std::runtime_error(origin + ": not a FREAM1 checkpoint");
  const std::uint32_t n = r.u32();
  FreaUnet model(model_config_from_text(r.bytes(n)));
  read_tensors(r, model.parameters(), origin, "parameter");
  read_tensors(r, model.buffers(), origin, "buffer");
  if (r.remaining() != 0) throw std::runtime_error(origin + ": trailing bytes after checkpoint");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const FreaUnet& model) {
  const auto bytes = serialize(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

FreaUnet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  return deserialize(bytes, path.string());
}

std::string content_hash(const std::vector<std::uint8_t>& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xf];
  }
  return hex;
}

}  // namespace frea
