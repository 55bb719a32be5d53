#include <Eigen/Core>

#include "ldct/error.hpp"
#include "ldct/ops.hpp"

namespace ldct::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t out_pixels() const { return out_h * out_w; }
  bool pointwise() const { return kernel == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = col + ((c * g.kernel + ky) * g.kernel + kx) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            row[oy * g.out_w + ox] = inside ? x[(c * g.height + iy) * g.width + ix] : 0.0;
          }
        }
      }
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx) {
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = col + ((c * g.kernel + ky) * g.kernel + kx) * g.out_pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dx[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var* bias, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4, ErrorKind::kShape, "conv2d expects NCHW input and OCkk weights");
  require(ws[1] == xs[1], ErrorKind::kShape,
          "conv2d: weight expects " + std::to_string(ws[1]) + " input channels, got " + std::to_string(xs[1]));
  require(ws[2] == ws[3] && stride >= 1, ErrorKind::kShape, "conv2d: square kernel and stride >= 1 required");
  require(xs[2] + 2 * pad >= ws[2] && xs[3] + 2 * pad >= ws[3], ErrorKind::kShape, "conv2d: input smaller than kernel");
  if (bias) require(bias->shape() == Shape{ws[0]}, ErrorKind::kShape, "conv2d: bias must have shape (O)");

  ConvGeometry g{xs[1], xs[2], xs[3], ws[2], stride, pad, 0, 0};
  g.out_h = (g.height + 2 * pad - g.kernel) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kernel) / stride + 1;
  const std::size_t batch = xs[0], out_c = ws[0];

  Array out(Shape{batch, out_c, g.out_h, g.out_w});
  ConstMatMap wmat(w.value().data(), out_c, g.patch());
  std::vector<double> col(g.pointwise() ? 0 : g.patch() * g.out_pixels());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xn = x.value().data() + n * g.channels * g.height * g.width;
    if (!g.pointwise()) im2col(xn, g, col.data());
    ConstMatMap cmat(g.pointwise() ? xn : col.data(), g.patch(), g.out_pixels());
    MatMap omat(out.data() + n * out_c * g.out_pixels(), out_c, g.out_pixels());
    omat.noalias() = wmat * cmat;
    if (bias)
      for (std::size_t o = 0; o < out_c; ++o) omat.row(o).array() += bias->value()[o];
  }

  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_op(std::move(out), inputs, [g, batch, out_c](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const bool want_x = self.wants_grad(0), want_w = self.wants_grad(1);
    const bool has_bias = self.inputs.size() == 3;
    const bool want_b = has_bias && self.wants_grad(2);
    ConstMatMap wmat(wv.data(), out_c, g.patch());
    std::vector<double> col(g.pointwise() ? 0 : g.patch() * g.out_pixels());
    std::vector<double> dcol(g.pointwise() || !want_x ? 0 : g.patch() * g.out_pixels());
    for (std::size_t n = 0; n < batch; ++n) {
      ConstMatMap dout(self.grad.data() + n * out_c * g.out_pixels(), out_c, g.out_pixels());
      const double* xn = xv.data() + n * g.channels * g.height * g.width;
      if (want_w) {
        if (!g.pointwise()) im2col(xn, g, col.data());
        ConstMatMap cmat(g.pointwise() ? xn : col.data(), g.patch(), g.out_pixels());
        MatMap dw(self.inputs[1]->grad_buffer().data(), out_c, g.patch());
        dw.noalias() += dout * cmat.transpose();
      }
      if (want_b) {
        auto& db = self.inputs[2]->grad_buffer();
        for (std::size_t o = 0; o < out_c; ++o) db[o] += dout.row(o).sum();
      }
      if (want_x) {
        double* dxn = self.inputs[0]->grad_buffer().data() + n * g.channels * g.height * g.width;
        if (g.pointwise()) {
          MatMap dx(dxn, g.patch(), g.out_pixels());
          dx.noalias() += wmat.transpose() * dout;
        } else {
          MatMap dc(dcol.data(), g.patch(), g.out_pixels());
          dc.noalias() = wmat.transpose() * dout;
          col2im_add(dcol.data(), g, dxn);
        }
      }
    }
  });
}

Var depthwise_conv2d(const Var& x, const Var& w) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  require(xs.size() == 4 && ws.size() == 4 && ws[0] == xs[1] && ws[1] == 1 && ws[2] == ws[3] && ws[2] % 2 == 1,
          ErrorKind::kShape, "depthwise_conv2d: weight must be (C,1,k,k) with odd k matching input channels");
  const std::size_t batch = xs[0], channels = xs[1], h = xs[2], wd = xs[3], k = ws[2];
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(wd);

  Array out(xs);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const double* src = x.value().data() + (n * channels + c) * h * wd;
      const double* ker = w.value().data() + c * k * k;
      double* dst = out.data() + (n * channels + c) * h * wd;
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
          double acc = 0.0;
          for (std::ptrdiff_t ky = -r; ky <= r; ++ky) {
            const auto iy = y + ky;
            if (iy < 0 || iy >= H) continue;
            for (std::ptrdiff_t kx = -r; kx <= r; ++kx) {
              const auto ix = xx + kx;
              if (ix < 0 || ix >= W) continue;
              acc += ker[(ky + r) * static_cast<std::ptrdiff_t>(k) + (kx + r)] * src[iy * W + ix];
            }
          }
          dst[y * W + xx] = acc;
        }
    }

  return make_op(std::move(out), {x, w}, [=](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const bool want_x = self.wants_grad(0), want_w = self.wants_grad(1);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (n * channels + c) * h * wd;
        const double* src = xv.data() + base;
        const double* ker = wv.data() + c * k * k;
        const double* gout = self.grad.data() + base;
        double* dx = want_x ? self.inputs[0]->grad_buffer().data() + base : nullptr;
        double* dw = want_w ? self.inputs[1]->grad_buffer().data() + c * k * k : nullptr;
        for (std::ptrdiff_t y = 0; y < H; ++y)
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            const double go = gout[y * W + xx];
            for (std::ptrdiff_t ky = -r; ky <= r; ++ky) {
              const auto iy = y + ky;
              if (iy < 0 || iy >= H) continue;
              for (std::ptrdiff_t kx = -r; kx <= r; ++kx) {
                const auto ix = xx + kx;
                if (ix < 0 || ix >= W) continue;
                const auto ki = (ky + r) * static_cast<std::ptrdiff_t>(k) + (kx + r);
                if (dx) dx[iy * W + ix] += ker[ki] * go;
                if (dw) dw[ki] += src[iy * W + ix] * go;
              }
            }
          }
      }
  });
}

Var upsample_nearest2(const Var& x) {
  const auto& xs = x.shape();
  require(xs.size() == 4, ErrorKind::kShape, "upsample_nearest2 expects NCHW");
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
  Array out(Shape{xs[0], xs[1], 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(p * 2 * h + y) * 2 * w + xx] = x.value()[(p * h + y / 2) * w + xx / 2];
  return make_op(std::move(out), {x}, [planes, h, w](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          g[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require(as.size() == 4 && bs.size() == 4 && as[0] == bs[0] && as[2] == bs[2] && as[3] == bs[3], ErrorKind::kShape,
          "concat_channels: incompatible " + shape_string(as) + " and " + shape_string(bs));
  const std::size_t batch = as[0], ca = as[1], cb = bs[1], plane = as[2] * as[3];
  Array out(Shape{batch, ca + cb, as[2], as[3]});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.value().data() + n * ca * plane, ca * plane, out.data() + n * (ca + cb) * plane);
    std::copy_n(b.value().data() + n * cb * plane, cb * plane, out.data() + (n * (ca + cb) + ca) * plane);
  }
  return make_op(std::move(out), {a, b}, [batch, ca, cb, plane](Node& self) {
    for (std::size_t n = 0; n < batch; ++n) {
      const double* g = self.grad.data() + n * (ca + cb) * plane;
      if (self.wants_grad(0)) {
        double* da = self.inputs[0]->grad_buffer().data() + n * ca * plane;
        for (std::size_t i = 0; i < ca * plane; ++i) da[i] += g[i];
      }
      if (self.wants_grad(1)) {
        double* db = self.inputs[1]->grad_buffer().data() + n * cb * plane;
        for (std::size_t i = 0; i < cb * plane; ++i) db[i] += g[ca * plane + i];
      }
    }
  });
}

Var separable_filter_valid(const Var& x, const std::vector<double>& kernel) {
  const auto& xs = x.shape();
  const std::size_t k = kernel.size();
  require(xs.size() == 4, ErrorKind::kShape, "separable_filter_valid expects NCHW");
  require(k >= 1 && xs[2] >= k && xs[3] >= k, ErrorKind::kShape,
          "separable_filter_valid: image " + std::to_string(xs[2]) + "x" + std::to_string(xs[3]) +
              " smaller than window " + std::to_string(k));
  const std::size_t planes = xs[0] * xs[1], h = xs[2], w = xs[3], oh = h - k + 1, ow = w - k + 1;
  Array out(Shape{xs[0], xs[1], oh, ow});
  std::vector<double> tmp(h * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.value().data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += kernel[i] * src[y * w + ox + i];
        tmp[y * ow + ox] = acc;
      }
    double* dst = out.data() + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) acc += kernel[i] * tmp[(oy + i) * ow + ox];
        dst[oy * ow + ox] = acc;
      }
  }
  return make_op(std::move(out), {x}, [kernel, planes, h, w, oh, ow, k](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    std::vector<double> dtmp(h * ow);
    for (std::size_t p = 0; p < planes; ++p) {
      std::fill(dtmp.begin(), dtmp.end(), 0.0);
      const double* gout = self.grad.data() + p * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t i = 0; i < k; ++i) dtmp[(oy + i) * ow + ox] += kernel[i] * gout[oy * ow + ox];
      double* dx = g.data() + p * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t i = 0; i < k; ++i) dx[y * w + ox + i] += kernel[i] * dtmp[y * ow + ox];
    }
  });
}

}  // namespace ldct::ad
