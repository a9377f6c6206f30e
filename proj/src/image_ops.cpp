#include "frea/image_ops.hpp"

namespace frea {

namespace {

void require_single_plane(const Tensor& t, const char* op) {
  if (t.ndim() != 4 || t.dim(0) != 1 || t.dim(1) != 1) {
    throw ShapeError(std::string(op) + ": expected a (1,1,H,W) image, got " +
                     to_string(t.shape()));
  }
}

}  // namespace

ImageXd to_image(const Tensor& t) {
  require_single_plane(t, "to_image");
  return Eigen::Map<const ImageXd>(t.data().data(), t.dim(2), t.dim(3));
}

Tensor from_image(const ImageXd& img) {
  ArrayX data = Eigen::Map<const ArrayX>(img.data(), img.size());
  return Tensor({1, 1, img.rows(), img.cols()}, std::move(data));
}

Tensor gaussian_blur(const Tensor& img, const GaussianKernel<Scalar>& kernel) {
  return from_image(gaussian_blur(to_image(img), kernel));
}

FrequencyPair freq_split(const Tensor& img, Scalar sigma, Index size) {
  const auto kernel = gaussian_kernel(sigma, size);
  Tensor low = gaussian_blur(img, kernel);
  Tensor high(img.shape(), img.data() - low.data());
  return {std::move(low), std::move(high), sigma};
}

Tensor freq_merge(const FrequencyPair& pair) {
  if (pair.low.shape() != pair.high.shape()) {
    throw ShapeError("freq_merge: low " + to_string(pair.low.shape()) + " vs high " +
                     to_string(pair.high.shape()));
  }
  return Tensor(pair.low.shape(), pair.low.data() + pair.high.data());
}

ImageXd ImageFile::plane() const {
  if (channels != 1) {
    throw std::invalid_argument("multi-channel images are not supported (channels = " +
                                std::to_string(channels) + ")");
  }
  return Eigen::Map<const ImageXd>(pixels.data(), height, width);
}

ImageFile ImageFile::from_plane(const ImageXd& img, Scalar q) {
  ImageFile f;
  f.height = img.rows();
  f.width = img.cols();
  f.channels = 1;
  f.q = q;
  f.pixels = Eigen::Map<const ArrayX>(img.data(), img.size());
  return f;
}

Tensor normalize(const ImageFile& img) {
  if (!(img.q > 0)) throw std::invalid_argument("normalize: Q must be positive");
  return from_image((img.plane() * 2.0) / img.q - 1.0);
}

ImageFile denormalize(const Tensor& t, Scalar q) {
  if (!(q > 0)) throw std::invalid_argument("denormalize: Q must be positive");
  const ImageXd plane = (((to_image(t) + 1.0) * q) / 2.0).max(0.0).min(q);
  return ImageFile::from_plane(plane, q);
}

}  // namespace frea
