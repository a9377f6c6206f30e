#include "frea/metrics.hpp"

#include <cstdio>
#include <sstream>

namespace frea {

Mask body_mask(const ImageFile& real, Scalar threshold_frac) {
  return body_mask(real.plane(), threshold_frac);
}

Scalar metric_mae(const ImageFile& real, const ImageFile& syn, const Mask& mask) {
  return metric_mae(real.plane(), syn.plane(), mask);
}

Scalar metric_ssim(const ImageFile& real, const ImageFile& syn, SsimMode mode) {
  return mode == SsimMode::global ? metric_ssim(real.plane(), syn.plane())
                                  : metric_ssim_windowed(real.plane(), syn.plane());
}

Scalar metric_psnr(const ImageFile& real, const ImageFile& syn) {
  return metric_psnr(real.plane(), syn.plane());
}

MetricSummary summarize(const std::vector<Scalar>& values) {
  if (values.empty()) return {};
  Scalar total = 0;
  for (Scalar v : values) total += v;
  const auto n = static_cast<Scalar>(values.size());
  MetricSummary s;
  s.mean = total / n;
  if (!std::isfinite(s.mean)) {
    s.std = std::numeric_limits<Scalar>::quiet_NaN();
    return s;
  }
  Scalar ss = 0;
  for (Scalar v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / n);
  return s;
}

void MetricsReport::aggregate() {
  std::vector<Scalar> m, p, s;
  for (const auto& r : rows) {
    m.push_back(r.mae);
    p.push_back(r.psnr);
    s.push_back(r.ssim);
  }
  mae = summarize(m);
  psnr = summarize(p);
  ssim = summarize(s);
}

std::string format_metric(Scalar v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "sample_id,fold,mae,psnr,ssim\n";
  for (const auto& r : rows) {
    os << r.sample_id << ',' << r.fold << ',' << format_metric(r.mae) << ','
       << format_metric(r.psnr) << ',' << format_metric(r.ssim) << '\n';
  }
  os << "mean,," << format_metric(mae.mean) << ',' << format_metric(psnr.mean) << ','
     << format_metric(ssim.mean) << '\n';
  os << "std,," << format_metric(mae.std) << ',' << format_metric(psnr.std) << ','
     << format_metric(ssim.std) << '\n';
  return os.str();
}

bool MetricsReport::operator==(const MetricsReport& o) const {
  auto same = [](Scalar a, Scalar b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  if (rows.size() != o.rows.size() || mask_policy != o.mask_policy) return false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &a = rows[i], &b = o.rows[i];
    if (a.sample_id != b.sample_id || a.fold != b.fold || !same(a.mae, b.mae) ||
        !same(a.psnr, b.psnr) || !same(a.ssim, b.ssim)) {
      return false;
    }
  }
  return same(mae.mean, o.mae.mean) && same(mae.std, o.mae.std) &&
         same(psnr.mean, o.psnr.mean) && same(psnr.std, o.psnr.std) &&
         same(ssim.mean, o.ssim.mean) && same(ssim.std, o.ssim.std);
}

}  // namespace frea
