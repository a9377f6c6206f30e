#pragma once

#include "frea/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace frea {

template <typename T>
using Image = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ImageXd = Image<double>;

/// Normalized isotropic Gaussian on a size x size grid centered on the middle tap.
template <typename T>
struct GaussianKernel {
  T sigma{};
  Index size = 0;
  Image<T> weights;
};

template <typename T>
GaussianKernel<T> gaussian_kernel(T sigma, Index size) {
  if (!(sigma > T(0))) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument("gaussian_kernel: size must be odd and >= 1, got " +
                                std::to_string(size));
  }
  const Index r = size / 2;
  GaussianKernel<T> k{sigma, size, Image<T>(size, size)};
  for (Index y = 0; y < size; ++y) {
    for (Index x = 0; x < size; ++x) {
      const T d2 = T((y - r) * (y - r) + (x - r) * (x - r));
      k.weights(y, x) = std::exp(-d2 / (T(2) * sigma * sigma));
    }
  }
  k.weights /= k.weights.sum();
  return k;
}

/// Mirror index without edge repetition: -1 -> 1, n -> n - 2.
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

/// 2D correlation of a single-channel image with the kernel, reflect padding,
/// same-size output.
template <typename Derived, typename T>
Image<typename Derived::Scalar> gaussian_blur(const Eigen::ArrayBase<Derived>& img,
                                              const GaussianKernel<T>& kernel) {
  using S = typename Derived::Scalar;
  const Index h = img.rows(), w = img.cols();
  if (kernel.size > 2 * h || kernel.size > 2 * w) {
    throw std::invalid_argument("gaussian_blur: kernel size " + std::to_string(kernel.size) +
                                " exceeds twice the image extent");
  }
  const Index r = kernel.size / 2;
  Image<S> padded(h + 2 * r, w + 2 * r);
  for (Index y = 0; y < padded.rows(); ++y) {
    const Index sy = reflect_index(y - r, h);
    for (Index x = 0; x < padded.cols(); ++x) padded(y, x) = img(sy, reflect_index(x - r, w));
  }
  Image<S> out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      out(y, x) = (padded.block(y, x, kernel.size, kernel.size) * kernel.weights.template cast<S>())
                      .sum();
    }
  }
  return out;
}

/// Low band and exact residual high band of an image.
struct FrequencyPair {
  Tensor low;
  Tensor high;
  Scalar sigma = 0;
};

/// Views a (1, 1, H, W) tensor as an H x W image.
ImageXd to_image(const Tensor& t);
Tensor from_image(const ImageXd& img);

Tensor gaussian_blur(const Tensor& img, const GaussianKernel<Scalar>& kernel);

/// low = blur(img), high = img - low.
FrequencyPair freq_split(const Tensor& img, Scalar sigma, Index size);
/// low + high.
Tensor freq_merge(const FrequencyPair& pair);

/// Decoded image with its maximal representable intensity Q. Pixels are
/// interleaved row-major (H, W, C).
struct ImageFile {
  Index height = 0;
  Index width = 0;
  Index channels = 1;
  Scalar q = 1;
  ArrayX pixels;

  ImageXd plane() const;
  static ImageFile from_plane(const ImageXd& img, Scalar q);
};

/// [0, Q] -> [-1, 1].
Tensor normalize(const ImageFile& img);
/// [-1, 1] -> [0, Q], clamped.
ImageFile denormalize(const Tensor& t, Scalar q);

}  // namespace frea
