#include "frea/image_io.hpp"
#include "frea/image_ops.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace frea;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("frea_test_" + name);
}

ImageXd random_image(Index h, Index w, std::mt19937_64& rng) {
  ImageXd img(h, w);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = uniform01(rng);
  return img;
}

// Reflect-101 index written out case by case: -1 -> 1, n -> n - 2.
Index mirror(Index i, Index n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

TEST_CASE("3x3 Gaussian kernel at sigma 1 has the closed form weights") {
  const auto k = gaussian_kernel(1.0, 3);
  const double e = std::exp(-0.5);
  const double z = (1 + 2 * e) * (1 + 2 * e);
  CHECK(k.weights(1, 1) == doctest::Approx(1 / z).epsilon(1e-15));
  CHECK(k.weights(0, 1) == doctest::Approx(e / z).epsilon(1e-15));
  CHECK(k.weights(0, 0) == doctest::Approx(e * e / z).epsilon(1e-15));
  CHECK(k.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(gaussian_kernel(1.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_kernel(0.0, 3), std::invalid_argument);
}

TEST_CASE("reflect index folds without repeating the edge") {
  CHECK(reflect_index(-1, 5) == 1);
  CHECK(reflect_index(-2, 5) == 2);
  CHECK(reflect_index(5, 5) == 3);
  CHECK(reflect_index(6, 5) == 2);
  CHECK(reflect_index(2, 5) == 2);
}

TEST_CASE("blur equals the direct mirrored-window sum") {
  std::mt19937_64 rng(5);
  const ImageXd img = random_image(9, 7, rng);
  const auto k = gaussian_kernel(1.3, 5);
  const ImageXd out = gaussian_blur(img, k);
  for (Index y = 0; y < 9; ++y)
    for (Index x = 0; x < 7; ++x) {
      double acc = 0;
      for (Index dy = -2; dy <= 2; ++dy)
        for (Index dx = -2; dx <= 2; ++dx)
          acc += k.weights(dy + 2, dx + 2) * img(mirror(y + dy, 9), mirror(x + dx, 7));
      CHECK(std::abs(out(y, x) - acc) < 1e-14);
    }
  CHECK_THROWS_AS(gaussian_blur(ImageXd::Zero(2, 2), gaussian_kernel(1.0, 5)),
                  std::invalid_argument);
}

TEST_CASE("blur keeps constants and float images work through the template") {
  const ImageXd c = ImageXd::Constant(8, 8, 3.25);
  CHECK((gaussian_blur(c, gaussian_kernel(2.0, 7)) - 3.25).abs().maxCoeff() < 1e-14);
  const Image<float> f = Image<float>::Constant(6, 6, 1.0f);
  const Image<float> fb = gaussian_blur(f, gaussian_kernel(1.0f, 3));
  CHECK((fb - 1.0f).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("checkerboard energy lands in the high band") {
  ImageXd board(16, 16);
  for (Index y = 0; y < 16; ++y)
    for (Index x = 0; x < 16; ++x) board(y, x) = ((x + y) % 2) ? 1.0 : -1.0;
  const FrequencyPair pair = freq_split(from_image(board), 3.0, 13);
  const double total = board.square().sum();
  CHECK(pair.low.data().square().sum() < 1e-3 * total);
  CHECK(pair.high.data().square().sum() > 0.99 * total);
  CHECK((freq_merge(pair).data() - from_image(board).data()).abs().maxCoeff() < 1e-15);
}

TEST_CASE("normalize maps 0, Q/2 and Q onto -1, 0 and 1; denormalize clamps") {
  ImageFile img;
  img.height = 1;
  img.width = 3;
  img.q = 255;
  img.pixels = (ArrayX(3) << 0, 127.5, 255).finished();
  const Tensor t = normalize(img);
  CHECK(t.shape() == Shape{1, 1, 1, 3});
  CHECK(t.data()[0] == -1);
  CHECK(t.data()[1] == 0);
  CHECK(t.data()[2] == 1);
  const ImageFile back = denormalize(Tensor::from({1, 1, 1, 3}, {-1.5, 0, 2}), 255);
  CHECK(back.pixels[0] == 0);
  CHECK(back.pixels[1] == 127.5);
  CHECK(back.pixels[2] == 255);
  CHECK_THROWS(normalize(ImageFile{1, 1, 1, 0, ArrayX::Zero(1)}));
}

TEST_CASE("16-bit PGM decodes big-endian samples with Q = maxval") {
  const auto path = temp_path("p16.pgm");
  {
    std::ofstream f(path, std::ios::binary);
    f << "P5\n# comment line\n3 1\n65535\n";
    const unsigned char px[] = {0x01, 0x02, 0xFF, 0xFF, 0x00, 0x00};
    f.write(reinterpret_cast<const char*>(px), sizeof px);
  }
  const ImageFile img = read_image(path);
  CHECK(img.width == 3);
  CHECK(img.height == 1);
  CHECK(img.q == 65535);
  CHECK(img.pixels[0] == 258);
  CHECK(img.pixels[1] == 65535);
  CHECK(img.pixels[2] == 0);
  std::filesystem::remove(path);
}

TEST_CASE("8-bit PGM round-trips rounded values") {
  ImageFile img{2, 2, 1, 200, (ArrayX(4) << 0, 10.4, 199.6, 250).finished()};
  const auto path = temp_path("p8.pgm");
  write_image(path, img);
  const ImageFile back = read_image(path);
  CHECK(back.q == 200);
  CHECK((back.pixels == (ArrayX(4) << 0, 10, 200, 200).finished()).all());
  std::filesystem::remove(path);
}

TEST_CASE("raw float images round-trip bit-exactly and reject damage") {
  std::mt19937_64 rng(9);
  ImageFile img{5, 4, 2, 1000, ArrayX(40)};
  for (Index i = 0; i < 40; ++i) {
    img.pixels[i] = static_cast<float>(1000 * uniform01(rng));
  }
  const auto path = temp_path("raw.frea");
  write_image(path, img);
  const ImageFile back = read_image(path);
  CHECK(back.height == 5);
  CHECK(back.width == 4);
  CHECK(back.channels == 2);
  CHECK(back.q == 1000);
  CHECK((back.pixels == img.pixels).all());

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(read_image(path), ImageFormatError);
  {
    std::ofstream f(path, std::ios::binary);
    f << "JUNK";
  }
  CHECK_THROWS_AS(read_image(path), ImageFormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_image(path), ImageFormatError);
}
