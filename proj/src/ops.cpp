#include "frea/ops.hpp"

#include "frea/random.hpp"

#include <algorithm>
#include <cmath>

namespace frea {

namespace {

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.ndim() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + to_string(t.shape()));
  }
}

thread_local KinkProbe* active_probe = nullptr;

void observe_kinks(const ArrayX& x) {
  if (active_probe) active_probe->observe(x);
}

void accumulate(const Tensor& t, const ArrayX& g) {
  if (t.requires_grad()) t.node()->grad += g;
}

struct ConvGeometry {
  Index channels, height, width;  // image side
  Index kernel, stride, padding;
  Index out_h, out_w;             // column side
};

// Unfolds a C x H x W image into a (C*K*K) x (Ho*Wo) patch matrix.
RowMatrix im2col(const Scalar* img, const ConvGeometry& g) {
  const Index kk = g.kernel * g.kernel;
  RowMatrix cols = RowMatrix::Zero(g.channels * kk, g.out_h * g.out_w);
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* plane = img + c * g.height * g.width;
    for (Index ky = 0; ky < g.kernel; ++ky) {
      for (Index kx = 0; kx < g.kernel; ++kx) {
        Scalar* row = cols.row(c * kk + ky * g.kernel + kx).data();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) continue;
            row[oy * g.out_w + ox] = plane[iy * g.width + ix];
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatters-adds patch columns back onto the image.
void col2im(const RowMatrix& cols, const ConvGeometry& g, Scalar* img) {
  const Index kk = g.kernel * g.kernel;
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* plane = img + c * g.height * g.width;
    for (Index ky = 0; ky < g.kernel; ++ky) {
      for (Index kx = 0; kx < g.kernel; ++kx) {
        const Scalar* row = cols.row(c * kk + ky * g.kernel + kx).data();
        for (Index oy = 0; oy < g.out_h; ++oy) {
          const Index iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          for (Index ox = 0; ox < g.out_w; ++ox) {
            const Index ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.width) continue;
            plane[iy * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                     int padding, const char* op, Index in_channel_axis, Index out_channel_axis) {
  require_rank(input, 4, op, "input");
  require_rank(weight, 4, op, "weight");
  if (weight.dim(2) != weight.dim(3)) {
    throw ShapeError(std::string(op) + ": kernel must be square, got " + to_string(weight.shape()));
  }
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  if (padding < 0) throw std::invalid_argument(std::string(op) + ": padding must be >= 0");
  if (input.dim(1) != weight.dim(in_channel_axis)) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(input.dim(1)) +
                     " channels but weight " + to_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(in_channel_axis)));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != weight.dim(out_channel_axis))) {
    throw ShapeError(std::string(op) + ": bias shape " + to_string(bias.shape()) +
                     " does not match " + std::to_string(weight.dim(out_channel_axis)) +
                     " output channels");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape(), a.data() + b.data());
  if (detail::needs_grad({&a, &b})) {
    detail::record(out, [a, b, out] {
      accumulate(a, out.grad());
      accumulate(b, out.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape(), a.data() - b.data());
  if (detail::needs_grad({&a, &b})) {
    detail::record(out, [a, b, out] {
      accumulate(a, out.grad());
      accumulate(b, -out.grad());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape(), a.data() * b.data());
  if (detail::needs_grad({&a, &b})) {
    detail::record(out, [a, b, out] {
      accumulate(a, out.grad() * b.data());
      accumulate(b, out.grad() * a.data());
    });
  }
  return out;
}

Tensor scale(const Tensor& a, Scalar factor) {
  Tensor out(a.shape(), a.data() * factor);
  if (detail::needs_grad({&a})) {
    detail::record(out, [a, out, factor] { accumulate(a, out.grad() * factor); });
  }
  return out;
}

Tensor square(const Tensor& a) {
  Tensor out(a.shape(), a.data().square());
  if (detail::needs_grad({&a})) {
    detail::record(out, [a, out] { accumulate(a, 2.0 * a.data() * out.grad()); });
  }
  return out;
}

KinkProbe::KinkProbe() : previous_(active_probe) { active_probe = this; }

KinkProbe::~KinkProbe() { active_probe = previous_; }

void KinkProbe::observe(const ArrayX& x) {
  // FNV-1a over one sign symbol (-1, 0, +1) per element.
  for (Index i = 0; i < x.size(); ++i) {
    const int sign = (x[i] > 0) - (x[i] < 0);
    digest_ = (digest_ ^ static_cast<std::uint64_t>(sign + 1)) * 0x100000001b3ULL;
  }
}

Tensor abs(const Tensor& a) {
  observe_kinks(a.data());
  Tensor out(a.shape(), a.data().abs());
  if (detail::needs_grad({&a})) {
    detail::record(out, [a, out] {
      const ArrayX sign = (a.data() > 0).cast<Scalar>() - (a.data() < 0).cast<Scalar>();
      accumulate(a, sign * out.grad());
    });
  }
  return out;
}

Tensor tanh(const Tensor& a) {
  Tensor out(a.shape(), a.data().tanh());
  if (detail::needs_grad({&a})) {
    detail::record(out, [a, out] { accumulate(a, (1.0 - out.data().square()) * out.grad()); });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  observe_kinks(a.data());
  Tensor out(a.shape(), a.data().max(0.0));
  if (detail::needs_grad({&a})) {
    detail::record(out, [a, out] { accumulate(a, (a.data() > 0).cast<Scalar>() * out.grad()); });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::scalar(a.data().sum());
  if (detail::needs_grad({&a})) {
    detail::record(out, [a, out] { accumulate(a, ArrayX::Constant(a.numel(), out.grad()[0])); });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  const auto n = static_cast<Scalar>(a.numel());
  Tensor out = Tensor::scalar(a.data().sum() / n);
  if (detail::needs_grad({&a})) {
    detail::record(out,
                   [a, out, n] { accumulate(a, ArrayX::Constant(a.numel(), out.grad()[0] / n)); });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  check_conv_args(input, weight, bias, stride, padding, "conv2d", 1, 0);
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index o = weight.dim(0), k = weight.dim(2);
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " does not fit padded input " +
                     to_string(input.shape()));
  }
  const ConvGeometry geo{c, h, w, k, stride, padding, (h + 2 * padding - k) / stride + 1,
                         (w + 2 * padding - k) / stride + 1};
  const Index plane_in = c * h * w, plane_out = o * geo.out_h * geo.out_w;
  const ConstRowMap wmat(weight.data().data(), o, c * k * k);

  Tensor out = Tensor::zeros({n, o, geo.out_h, geo.out_w});
  for (Index b = 0; b < n; ++b) {
    const RowMatrix cols = im2col(input.data().data() + b * plane_in, geo);
    RowMap y(out.data().data() + b * plane_out, o, geo.out_h * geo.out_w);
    y.noalias() = wmat * cols;
    if (bias.defined()) y.colwise() += bias.data().matrix();
  }

  if (detail::needs_grad({&input, &weight, &bias})) {
    detail::record(out, [input, weight, bias, out, geo, n, o, plane_in, plane_out] {
      const ConstRowMap wmat(weight.data().data(), o, geo.channels * geo.kernel * geo.kernel);
      for (Index b = 0; b < n; ++b) {
        const ConstRowMap dy(out.grad().data() + b * plane_out, o, geo.out_h * geo.out_w);
        if (weight.requires_grad()) {
          const RowMatrix cols = im2col(input.data().data() + b * plane_in, geo);
          RowMap dw(weight.node()->grad.data(), o, geo.channels * geo.kernel * geo.kernel);
          dw.noalias() += dy * cols.transpose();
        }
        if (bias.defined() && bias.requires_grad()) {
          bias.node()->grad += dy.rowwise().sum().array();
        }
        if (input.requires_grad()) {
          const RowMatrix dcols = wmat.transpose() * dy;
          col2im(dcols, geo, input.node()->grad.data() + b * plane_in);
        }
      }
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        int stride, int padding) {
  check_conv_args(input, weight, bias, stride, padding, "conv_transpose2d", 0, 1);
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index o = weight.dim(1), k = weight.dim(2);
  const Index out_h = (h - 1) * stride - 2 * padding + k;
  const Index out_w = (w - 1) * stride - 2 * padding + k;
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("conv_transpose2d: empty output for input " + to_string(input.shape()) +
                     " with kernel " + std::to_string(k));
  }
  // Geometry of the forward convolution this op is the adjoint of: it maps
  // the (O, out_h, out_w) output image onto the (I, h, w) input grid.
  const ConvGeometry geo{o, out_h, out_w, k, stride, padding, h, w};
  if ((out_h + 2 * padding - k) / stride + 1 != h || (out_w + 2 * padding - k) / stride + 1 != w) {
    throw ShapeError("conv_transpose2d: inconsistent geometry for input " +
                     to_string(input.shape()));
  }
  const Index plane_in = c * h * w, plane_out = o * out_h * out_w;
  const ConstRowMap wmat(weight.data().data(), c, o * k * k);

  Tensor out = Tensor::zeros({n, o, out_h, out_w});
  for (Index b = 0; b < n; ++b) {
    const ConstRowMap x(input.data().data() + b * plane_in, c, h * w);
    const RowMatrix cols = wmat.transpose() * x;
    Scalar* y = out.data().data() + b * plane_out;
    col2im(cols, geo, y);
    if (bias.defined()) {
      RowMap(y, o, out_h * out_w).colwise() += bias.data().matrix();
    }
  }

  if (detail::needs_grad({&input, &weight, &bias})) {
    detail::record(out, [input, weight, bias, out, geo, n, c, o, plane_in, plane_out] {
      const Index hw = geo.out_h * geo.out_w;
      const ConstRowMap wmat(weight.data().data(), c, o * geo.kernel * geo.kernel);
      for (Index b = 0; b < n; ++b) {
        const RowMatrix dcols = im2col(out.grad().data() + b * plane_out, geo);
        if (input.requires_grad()) {
          RowMap dx(input.node()->grad.data() + b * plane_in, c, hw);
          dx.noalias() += wmat * dcols;
        }
        if (weight.requires_grad()) {
          const ConstRowMap x(input.data().data() + b * plane_in, c, hw);
          RowMap dw(weight.node()->grad.data(), c, o * geo.kernel * geo.kernel);
          dw.noalias() += x * dcols.transpose();
        }
        if (bias.defined() && bias.requires_grad()) {
          const ConstRowMap dy(out.grad().data() + b * plane_out, o, geo.height * geo.width);
          bias.node()->grad += dy.rowwise().sum().array();
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and regularization

BatchNormStats BatchNormStats::init(Index channels) {
  return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, const BatchNormOptions& options) {
  require_rank(x, 4, "batch_norm", "input");
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Index count = n * hw;
  if (count == 0) throw ShapeError("batch_norm: zero spatial extent in " + to_string(x.shape()));
  for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &stats.running_mean,
                                                             &stats.running_var}) {
    if (p->ndim() != 1 || p->dim(0) != c) {
      throw ShapeError("batch_norm: per-channel parameter shape " + to_string(p->shape()) +
                       " does not match " + std::to_string(c) + " channels");
    }
  }

  const bool train = options.mode == Mode::train;
  ArrayX mean_c(c), inv_std(c);
  for (Index ch = 0; ch < c; ++ch) {
    if (train) {
      Scalar s = 0;
      for (Index b = 0; b < n; ++b) s += x.data().segment((b * c + ch) * hw, hw).sum();
      const Scalar mu = s / static_cast<Scalar>(count);
      Scalar ss = 0;
      for (Index b = 0; b < n; ++b) {
        ss += (x.data().segment((b * c + ch) * hw, hw) - mu).square().sum();
      }
      const Scalar var = ss / static_cast<Scalar>(count);
      mean_c[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + options.eps);
      if (options.update_running) {
        const Scalar unbiased =
            count > 1 ? var * static_cast<Scalar>(count) / static_cast<Scalar>(count - 1) : var;
        auto& rm = stats.running_mean.data()[ch];
        auto& rv = stats.running_var.data()[ch];
        rm = (1.0 - options.momentum) * rm + options.momentum * mu;
        rv = (1.0 - options.momentum) * rv + options.momentum * unbiased;
      }
    } else {
      mean_c[ch] = stats.running_mean.data()[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.running_var.data()[ch] + options.eps);
    }
  }

  ArrayX xhat(x.numel());
  Tensor out = Tensor::zeros(x.shape());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * hw;
      xhat.segment(off, hw) = (x.data().segment(off, hw) - mean_c[ch]) * inv_std[ch];
      out.data().segment(off, hw) = gamma.data()[ch] * xhat.segment(off, hw) + beta.data()[ch];
    }
  }

  if (detail::needs_grad({&x, &gamma, &beta})) {
    detail::record(out, [x, gamma, beta, out, xhat = std::move(xhat), inv_std, n, c, hw, count,
                         train] {
      const ArrayX& dy = out.grad();
      for (Index ch = 0; ch < c; ++ch) {
        Scalar sum_dy = 0, sum_dy_xhat = 0;
        for (Index b = 0; b < n; ++b) {
          const Index off = (b * c + ch) * hw;
          sum_dy += dy.segment(off, hw).sum();
          sum_dy_xhat += (dy.segment(off, hw) * xhat.segment(off, hw)).sum();
        }
        if (gamma.requires_grad()) gamma.node()->grad[ch] += sum_dy_xhat;
        if (beta.requires_grad()) beta.node()->grad[ch] += sum_dy;
        if (!x.requires_grad()) continue;
        const Scalar g = gamma.data()[ch];
        const Scalar m = static_cast<Scalar>(count);
        for (Index b = 0; b < n; ++b) {
          const Index off = (b * c + ch) * hw;
          if (train) {
            x.node()->grad.segment(off, hw) +=
                (g * inv_std[ch] / m) *
                (m * dy.segment(off, hw) - sum_dy - xhat.segment(off, hw) * sum_dy_xhat);
          } else {
            x.node()->grad.segment(off, hw) += g * inv_std[ch] * dy.segment(off, hw);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, Scalar p, Mode mode, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) return x;
  std::mt19937_64 rng(seed);
  const Scalar keep_scale = 1.0 / (1.0 - p);
  ArrayX mask(x.numel());
  for (Index i = 0; i < mask.size(); ++i) {
    mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
  }
  Tensor out(x.shape(), x.data() * mask);
  if (detail::needs_grad({&x})) {
    detail::record(out, [x, out, mask = std::move(mask)] { accumulate(x, out.grad() * mask); });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

struct LerpTap {
  Index lo, hi;
  Scalar frac;
};

std::vector<LerpTap> bilinear_taps(Index in, Index out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const Scalar ratio = static_cast<Scalar>(in) / static_cast<Scalar>(out);
  for (Index i = 0; i < out; ++i) {
    Scalar src = (static_cast<Scalar>(i) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const Index hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<Scalar>(lo)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, Index out_h, Index out_w) {
  require_rank(x, 4, "upsample_bilinear", "input");
  if (out_h < 1 || out_w < 1) throw ShapeError("upsample_bilinear: output dims must be >= 1");
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);

  Tensor out = Tensor::zeros({x.dim(0), x.dim(1), out_h, out_w});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = x.data().data() + p * h * w;
    Scalar* dst = out.data().data() + p * out_h * out_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      const LerpTap& a = ty[static_cast<std::size_t>(oy)];
      for (Index ox = 0; ox < out_w; ++ox) {
        const LerpTap& b = tx[static_cast<std::size_t>(ox)];
        const Scalar top = (1 - b.frac) * src[a.lo * w + b.lo] + b.frac * src[a.lo * w + b.hi];
        const Scalar bot = (1 - b.frac) * src[a.hi * w + b.lo] + b.frac * src[a.hi * w + b.hi];
        dst[oy * out_w + ox] = (1 - a.frac) * top + a.frac * bot;
      }
    }
  }

  if (detail::needs_grad({&x})) {
    detail::record(out, [x, out, ty, tx, planes, h, w, out_h, out_w] {
      for (Index p = 0; p < planes; ++p) {
        Scalar* dsrc = x.node()->grad.data() + p * h * w;
        const Scalar* dy = out.grad().data() + p * out_h * out_w;
        for (Index oy = 0; oy < out_h; ++oy) {
          const LerpTap& a = ty[static_cast<std::size_t>(oy)];
          for (Index ox = 0; ox < out_w; ++ox) {
            const LerpTap& b = tx[static_cast<std::size_t>(ox)];
            const Scalar g = dy[oy * out_w + ox];
            dsrc[a.lo * w + b.lo] += (1 - a.frac) * (1 - b.frac) * g;
            dsrc[a.lo * w + b.hi] += (1 - a.frac) * b.frac * g;
            dsrc[a.hi * w + b.lo] += a.frac * (1 - b.frac) * g;
            dsrc[a.hi * w + b.hi] += a.frac * b.frac * g;
          }
        }
      }
    });
  }
  return out;
}

Tensor avg_pool2d(const Tensor& x, Index k) {
  require_rank(x, 4, "avg_pool2d", "input");
  if (k < 1 || x.dim(2) % k != 0 || x.dim(3) % k != 0) {
    throw ShapeError("avg_pool2d: window " + std::to_string(k) + " does not tile " +
                     to_string(x.shape()));
  }
  if (k == 1) return x;
  const Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = h / k, ow = w / k;
  const Scalar inv = 1.0 / static_cast<Scalar>(k * k);
  Tensor out = Tensor::zeros({x.dim(0), x.dim(1), oh, ow});
  for (Index p = 0; p < planes; ++p) {
    const Scalar* src = x.data().data() + p * h * w;
    Scalar* dst = out.data().data() + p * oh * ow;
    for (Index y = 0; y < h; ++y) {
      for (Index xx = 0; xx < w; ++xx) dst[(y / k) * ow + xx / k] += src[y * w + xx];
    }
    for (Index i = 0; i < oh * ow; ++i) dst[i] *= inv;
  }
  if (detail::needs_grad({&x})) {
    detail::record(out, [x, out, planes, h, w, oh, ow, k, inv] {
      for (Index p = 0; p < planes; ++p) {
        Scalar* dsrc = x.node()->grad.data() + p * h * w;
        const Scalar* dy = out.grad().data() + p * oh * ow;
        for (Index y = 0; y < h; ++y) {
          for (Index xx = 0; xx < w; ++xx) dsrc[y * w + xx] += inv * dy[(y / k) * ow + xx / k];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel manipulation and attention primitives

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels", "first operand");
  require_rank(b, 4, "concat_channels", "second operand");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: N/H/W mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  const Index n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out = Tensor::zeros({n, ca + cb, a.dim(2), a.dim(3)});
  for (Index s = 0; s < n; ++s) {
    out.data().segment(s * (ca + cb) * hw, ca * hw) = a.data().segment(s * ca * hw, ca * hw);
    out.data().segment((s * (ca + cb) + ca) * hw, cb * hw) = b.data().segment(s * cb * hw, cb * hw);
  }
  if (detail::needs_grad({&a, &b})) {
    detail::record(out, [a, b, out, n, ca, cb, hw] {
      for (Index s = 0; s < n; ++s) {
        if (a.requires_grad()) {
          a.node()->grad.segment(s * ca * hw, ca * hw) +=
              out.grad().segment(s * (ca + cb) * hw, ca * hw);
        }
        if (b.requires_grad()) {
          b.node()->grad.segment(s * cb * hw, cb * hw) +=
              out.grad().segment((s * (ca + cb) + ca) * hw, cb * hw);
        }
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, Index begin, Index count) {
  require_rank(x, 4, "slice_channels", "input");
  if (begin < 0 || count < 0 || begin + count > x.dim(1)) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + to_string(x.shape()));
  }
  const Index n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros({n, count, x.dim(2), x.dim(3)});
  for (Index s = 0; s < n; ++s) {
    out.data().segment(s * count * hw, count * hw) =
        x.data().segment((s * c + begin) * hw, count * hw);
  }
  if (detail::needs_grad({&x})) {
    detail::record(out, [x, out, n, c, hw, begin, count] {
      for (Index s = 0; s < n; ++s) {
        x.node()->grad.segment((s * c + begin) * hw, count * hw) +=
            out.grad().segment(s * count * hw, count * hw);
      }
    });
  }
  return out;
}

Tensor channel_dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "channel_dot", "first operand");
  require_same_shape(a, b, "channel_dot");
  const Index n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out = Tensor::zeros({n, 1, a.dim(2), a.dim(3)});
  for (Index s = 0; s < n; ++s) {
    auto dst = out.data().segment(s * hw, hw);
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * hw;
      dst += a.data().segment(off, hw) * b.data().segment(off, hw);
    }
  }
  if (detail::needs_grad({&a, &b})) {
    detail::record(out, [a, b, out, n, c, hw] {
      for (Index s = 0; s < n; ++s) {
        const auto dy = out.grad().segment(s * hw, hw);
        for (Index ch = 0; ch < c; ++ch) {
          const Index off = (s * c + ch) * hw;
          if (a.requires_grad()) a.node()->grad.segment(off, hw) += dy * b.data().segment(off, hw);
          if (b.requires_grad()) b.node()->grad.segment(off, hw) += dy * a.data().segment(off, hw);
        }
      }
    });
  }
  return out;
}

Tensor spatial_softmax(const Tensor& x) {
  require_rank(x, 4, "spatial_softmax", "input");
  if (x.dim(1) != 1) {
    throw ShapeError("spatial_softmax: expects a single channel, got " + to_string(x.shape()));
  }
  const Index n = x.dim(0), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  for (Index s = 0; s < n; ++s) {
    const auto logits = x.data().segment(s * hw, hw);
    auto p = out.data().segment(s * hw, hw);
    p = (logits - logits.maxCoeff()).exp();
    p /= p.sum();
  }
  if (detail::needs_grad({&x})) {
    detail::record(out, [x, out, n, hw] {
      for (Index s = 0; s < n; ++s) {
        const auto p = out.data().segment(s * hw, hw);
        const auto dy = out.grad().segment(s * hw, hw);
        const Scalar inner = (p * dy).sum();
        x.node()->grad.segment(s * hw, hw) += p * (dy - inner);
      }
    });
  }
  return out;
}

Tensor gate_channels(const Tensor& f, const Tensor& scores, Scalar factor) {
  require_rank(f, 4, "gate_channels", "features");
  require_rank(scores, 4, "gate_channels", "scores");
  if (scores.dim(0) != f.dim(0) || scores.dim(1) != 1 || scores.dim(2) != f.dim(2) ||
      scores.dim(3) != f.dim(3)) {
    throw ShapeError("gate_channels: scores " + to_string(scores.shape()) +
                     " do not broadcast over features " + to_string(f.shape()));
  }
  const Index n = f.dim(0), c = f.dim(1), hw = f.dim(2) * f.dim(3);
  const ArrayX gate = scores.data() * factor;
  Tensor out = Tensor::zeros(f.shape());
  for (Index s = 0; s < n; ++s) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (s * c + ch) * hw;
      out.data().segment(off, hw) = f.data().segment(off, hw) * gate.segment(s * hw, hw);
    }
  }
  if (detail::needs_grad({&f, &scores})) {
    detail::record(out, [f, scores, out, gate, n, c, hw, factor] {
      for (Index s = 0; s < n; ++s) {
        for (Index ch = 0; ch < c; ++ch) {
          const Index off = (s * c + ch) * hw;
          const auto dy = out.grad().segment(off, hw);
          if (f.requires_grad()) f.node()->grad.segment(off, hw) += dy * gate.segment(s * hw, hw);
          if (scores.requires_grad()) {
            scores.node()->grad.segment(s * hw, hw) += factor * dy * f.data().segment(off, hw);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace frea
