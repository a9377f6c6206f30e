#include "frea/metrics.hpp"
#include "frea/objectives.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace frea;

namespace {

ImageFile make_image(Index h, Index w, Scalar q, std::initializer_list<Scalar> v) {
  ImageFile img{h, w, 1, q, ArrayX(static_cast<Index>(v.size()))};
  Index i = 0;
  for (Scalar x : v) img.pixels[i++] = x;
  return img;
}

}  // namespace

TEST_CASE("combined objective is the weighted sum of its terms") {
  const LossBreakdown a = loss_total(2, 3, 7, {1, 1, 0}, true);
  CHECK(a.total == 5);
  const LossBreakdown b = loss_total(2, 3, 7, {1, 1, 1}, true);
  CHECK(b.total == 12);
  const LossBreakdown c = loss_total(2, 3, 7, {1, 1, 1}, false);
  CHECK(c.total == 7);
  CHECK(c.l_low == 0);
  CHECK(c.l_high == 0);
  CHECK_THROWS_AS(loss_total(1, 1, 1, {-1, 1, 1}, true), std::invalid_argument);
}

TEST_CASE("loss terms: MSE for low, MAE for high and reconstruction") {
  const Tensor p = Tensor::from({1, 1, 1, 2}, {0.5, -1});
  const Tensor t = Tensor::from({1, 1, 1, 2}, {0, 1});
  CHECK(loss_low(p, t).item() == doctest::Approx((0.25 + 4) / 2));
  CHECK(loss_high(p, t).item() == doctest::Approx((0.5 + 2) / 2));
  CHECK(loss_rec(p, t).item() == doctest::Approx((0.5 + 2) / 2));
  CHECK_THROWS_AS(loss_rec(p, Tensor::zeros({1, 1, 2, 1})), ShapeError);

  ForwardOutput out;
  out.final_output = p;
  out.low_pred = p;
  out.high_pred = p;
  const LossTerms terms = loss_total(out, t, t, t, {2, 3, 5}, true);
  CHECK(terms.breakdown.total == doctest::Approx(2 * 2.125 + 3 * 1.25 + 5 * 1.25));
  CHECK(terms.total.item() == doctest::Approx(terms.breakdown.total));
  const LossTerms plain = loss_total(out, t, Tensor(), Tensor(), {2, 3, 5}, false);
  CHECK(plain.breakdown.total == doctest::Approx(5 * 1.25));
}

TEST_CASE("metric identities hold exactly") {
  std::mt19937_64 rng(11);
  ImageXd x(16, 16);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = 255 * uniform01(rng);
  const Mask m = body_mask(x, 0.01);
  CHECK(metric_mae(x, x, m) == 0);
  CHECK(metric_ssim(x, x) == 1);
  CHECK(metric_ssim_windowed(x, x) == 1);
  CHECK(std::isinf(metric_psnr(x, x)));

  // MSE = Q^2 with Q = 7, then MSE = Q^2 / 100 with Q = 10.
  CHECK(metric_psnr(ImageXd::Constant(4, 4, 7.0), ImageXd::Zero(4, 4)) == 0);
  CHECK(metric_psnr(ImageXd::Constant(4, 4, 10.0), ImageXd::Constant(4, 4, 9.0)) == 20);
  CHECK(metric_ssim(ImageXd::Zero(3, 3), ImageXd::Zero(3, 3)) == 1);
}

TEST_CASE("body mask thresholds against a fraction of the peak") {
  const ImageFile img = make_image(2, 3, 100, {0, 0.5, 1, 1.01, 50, 100});
  const Mask m = body_mask(img, 0.01);  // strictly above 1
  CHECK(m.count() == 3);
  CHECK_FALSE(m(0, 2));
  CHECK(m(1, 0));
  CHECK(body_mask(img, 0.0).count() == 5);
  CHECK_THROWS_AS(body_mask(make_image(1, 2, 1, {0, 0}), 0.01), MetricError);
  CHECK_THROWS_AS(body_mask(img, 1.0), MetricError);

  // MAE ignores background: only the three body pixels count.
  const ImageFile syn = make_image(2, 3, 100, {9, 9, 9, 2.01, 40, 100});
  CHECK(metric_mae(img, syn, m) == doctest::Approx((1 + 10 + 0) / 3.0));
}

TEST_CASE("metrics reject mismatched shapes") {
  CHECK_THROWS_AS(metric_psnr(ImageXd::Zero(2, 2), ImageXd::Zero(2, 3)), MetricError);
  CHECK_THROWS_AS(metric_ssim(ImageXd::Zero(2, 2), ImageXd::Zero(3, 2)), MetricError);
  CHECK_THROWS_AS(metric_ssim_windowed(ImageXd::Zero(8, 8), ImageXd::Zero(8, 8)), MetricError);
  const Mask m = Mask::Constant(2, 2, true);
  CHECK_THROWS_AS(metric_mae(ImageXd::Zero(3, 3), ImageXd::Zero(3, 3), m), MetricError);
}

TEST_CASE("float images go through the same templates") {
  Image<float> a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 1, 2, 3, 5;
  CHECK(metric_psnr(a, b) == doctest::Approx(10 * std::log10(25.0 / 0.25)));
}

TEST_CASE("summaries use the population standard deviation") {
  const MetricSummary s = summarize({1, 2, 3, 4});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
  const MetricSummary inf = summarize({1, std::numeric_limits<Scalar>::infinity()});
  CHECK(std::isinf(inf.mean));
  CHECK(std::isnan(inf.std));
}

TEST_CASE("CSV has the header, one row per sample and two aggregate rows") {
  MetricsReport r;
  r.rows = {{"subject_001", 0, 1.5, 30, 0.9}, {"subject_002", 1, 2.5, 20, 0.7}};
  r.aggregate();
  const std::string csv = r.to_csv();
  CHECK(csv ==
        "sample_id,fold,mae,psnr,ssim\n"
        "subject_001,0,1.5,30,0.9\n"
        "subject_002,1,2.5,20,0.7\n"
        "mean,,2,25,0.8\n"
        "std,,0.5,5,0.1\n");
  CHECK(format_metric(std::numeric_limits<Scalar>::infinity()) == "inf");
  CHECK(format_metric(-std::numeric_limits<Scalar>::infinity()) == "-inf");
  CHECK(format_metric(std::nan("")) == "nan");
  CHECK(format_metric(1.0 / 3) == "0.333333");
}
