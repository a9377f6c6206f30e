#pragma once

#include "frea/image_ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace frea {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Scalar kDefaultMaskThreshold = 0.01;
inline constexpr Scalar kSsimK1 = 0.01;
inline constexpr Scalar kSsimK2 = 0.02;

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename A, typename B>
void require_same_dims(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b,
                       const char* metric) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw MetricError(std::string(metric) + ": image dimensions differ");
  }
  if (a.size() == 0) throw MetricError(std::string(metric) + ": zero-size image");
}

}  // namespace detail

/// Body voxels: pixels of the ground truth strictly above threshold_frac * max.
template <typename Derived>
Mask body_mask(const Eigen::ArrayBase<Derived>& real, Scalar threshold_frac) {
  if (!(threshold_frac >= 0 && threshold_frac < 1)) {
    throw MetricError("body_mask: threshold fraction must lie in [0, 1)");
  }
  if (real.size() == 0) throw MetricError("body_mask: zero-size image");
  const Scalar peak = real.maxCoeff();
  if (!(peak > 0)) throw MetricError("body_mask: image has no positive intensity, mask is empty");
  Mask mask = real > threshold_frac * peak;
  if (!mask.any()) throw MetricError("body_mask: empty mask");
  return mask;
}

/// Mean absolute error over the masked pixels.
template <typename A, typename B, typename M>
Scalar metric_mae(const Eigen::ArrayBase<A>& real, const Eigen::ArrayBase<B>& syn,
                  const Eigen::ArrayBase<M>& mask) {
  detail::require_same_dims(real, syn, "metric_mae");
  if (mask.rows() != real.rows() || mask.cols() != real.cols()) {
    throw MetricError("metric_mae: mask dimensions differ from image");
  }
  const auto body = mask.count();
  if (body == 0) throw MetricError("metric_mae: empty mask");
  const Scalar total = mask.select((real - syn).abs(), Scalar(0)).sum();
  return total / static_cast<Scalar>(body);
}

/// Structural similarity from whole-image statistics with C1 = (k1 Q)^2,
/// C2 = (k2 Q)^2 and Q the maximal intensity over both images.
template <typename A, typename B>
Scalar metric_ssim(const Eigen::ArrayBase<A>& real, const Eigen::ArrayBase<B>& syn) {
  detail::require_same_dims(real, syn, "metric_ssim");
  const auto n = static_cast<Scalar>(real.size());
  const Scalar q = std::max<Scalar>(real.maxCoeff(), syn.maxCoeff());
  const Scalar c1 = (kSsimK1 * q) * (kSsimK1 * q);
  const Scalar c2 = (kSsimK2 * q) * (kSsimK2 * q);
  const Scalar mu_a = real.sum() / n;
  const Scalar mu_b = syn.sum() / n;
  const Scalar var_a = (real - mu_a).square().sum() / n;
  const Scalar var_b = (syn - mu_b).square().sum() / n;
  const Scalar cov = ((real - mu_a) * (syn - mu_b)).sum() / n;
  const Scalar num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
  const Scalar den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
  if (den == 0) return 1.0;  // both images identically zero
  return num / den;
}

/// Mean SSIM over 11x11 Gaussian windows (sigma 1.5) at every fully covered
/// position; same constants as the global form.
template <typename A, typename B>
Scalar metric_ssim_windowed(const Eigen::ArrayBase<A>& real, const Eigen::ArrayBase<B>& syn) {
  detail::require_same_dims(real, syn, "metric_ssim");
  constexpr Index kWin = 11;
  if (real.rows() < kWin || real.cols() < kWin) {
    throw MetricError("metric_ssim: image smaller than the 11x11 window");
  }
  const auto w = gaussian_kernel<Scalar>(1.5, kWin).weights;
  const Scalar q = std::max<Scalar>(real.maxCoeff(), syn.maxCoeff());
  const Scalar c1 = (kSsimK1 * q) * (kSsimK1 * q);
  const Scalar c2 = (kSsimK2 * q) * (kSsimK2 * q);
  const ImageXd a = real.template cast<Scalar>();
  const ImageXd b = syn.template cast<Scalar>();
  Scalar acc = 0;
  Index count = 0;
  for (Index y = 0; y + kWin <= a.rows(); ++y) {
    for (Index x = 0; x + kWin <= a.cols(); ++x) {
      const auto pa = a.block(y, x, kWin, kWin);
      const auto pb = b.block(y, x, kWin, kWin);
      const Scalar mu_a = (w * pa).sum(), mu_b = (w * pb).sum();
      const Scalar var_a = (w * (pa - mu_a).square()).sum();
      const Scalar var_b = (w * (pb - mu_b).square()).sum();
      const Scalar cov = (w * (pa - mu_a) * (pb - mu_b)).sum();
      const Scalar num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
      const Scalar den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      acc += den == 0 ? 1.0 : num / den;
      ++count;
    }
  }
  return acc / static_cast<Scalar>(count);
}

/// 10 log10(Q^2 / MSE) with Q the maximal intensity over both images.
/// Returns +inf when the images are identical.
template <typename A, typename B>
Scalar metric_psnr(const Eigen::ArrayBase<A>& real, const Eigen::ArrayBase<B>& syn) {
  detail::require_same_dims(real, syn, "metric_psnr");
  const Scalar mse = (real - syn).square().sum() / static_cast<Scalar>(real.size());
  if (mse == 0) return std::numeric_limits<Scalar>::infinity();
  const Scalar q = std::max<Scalar>(real.maxCoeff(), syn.maxCoeff());
  return 10.0 * std::log10(q * q / mse);
}

enum class SsimMode { global, windowed };

Mask body_mask(const ImageFile& real, Scalar threshold_frac = kDefaultMaskThreshold);
Scalar metric_mae(const ImageFile& real, const ImageFile& syn, const Mask& mask);
Scalar metric_ssim(const ImageFile& real, const ImageFile& syn,
                   SsimMode mode = SsimMode::global);
Scalar metric_psnr(const ImageFile& real, const ImageFile& syn);

// ---------------------------------------------------------------------------

struct SampleMetrics {
  std::string sample_id;
  int fold = 0;
  Scalar mae = 0;
  Scalar psnr = 0;
  Scalar ssim = 0;
};

struct MetricSummary {
  Scalar mean = 0;
  Scalar std = 0;  ///< population standard deviation
};

/// Mean and population std; a non-finite value makes both non-finite.
MetricSummary summarize(const std::vector<Scalar>& values);

struct MetricsReport {
  std::vector<SampleMetrics> rows;
  std::string mask_policy;
  MetricSummary mae, psnr, ssim;

  std::size_t count() const { return rows.size(); }
  /// Recomputes the aggregates from the per-sample rows.
  void aggregate();
  /// Header `sample_id,fold,mae,psnr,ssim`, one row per sample, then `mean`
  /// and `std` rows; 6 significant digits, infinities as `inf`.
  std::string to_csv() const;

  bool operator==(const MetricsReport&) const;
};

/// "%.6g" with `inf`, `-inf`, `nan` spelled out.
std::string format_metric(Scalar v);

}  // namespace frea
