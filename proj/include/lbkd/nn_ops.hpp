#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lbkd/tensor.hpp"

namespace lbkd {

// Per-axis pair (rows, columns) used for strides, paddings and kernel sizes.
struct Extent2 {
  std::size_t h = 0;
  std::size_t w = 0;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

inline std::string to_string(const Extent2& e) {
  return "(" + std::to_string(e.h) + "," + std::to_string(e.w) + ")";
}

// floor((in + 2 pad - kernel) / stride) + 1, or 0 when the kernel does not fit.
constexpr std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t pad) {
  if (in + 2 * pad < kernel || stride == 0) return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

// (in - 1) stride - 2 pad + kernel + output_pad; negative results map to 0.
constexpr std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel,
                                                std::size_t stride, std::size_t pad,
                                                std::size_t output_pad) {
  const long long v = static_cast<long long>((in - 1) * stride + kernel + output_pad) -
                      2 * static_cast<long long>(pad);
  return v > 0 ? static_cast<std::size_t>(v) : 0;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct PatchGeometry {
  std::size_t channels, height, width;  // image
  Extent2 kernel, stride, pad;
  std::size_t grid_h, grid_w;           // patch grid (conv output)

  std::size_t rows() const { return channels * kernel.h * kernel.w; }
  std::size_t cols() const { return grid_h * grid_w; }
};

// cols[(c, i, j), (oh, ow)] = image[c, oh*sh - ph + i, ow*sw - pw + j] (zero outside).
inline void im2col(const double* image, const PatchGeometry& g, double* cols) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel.h; ++i) {
      for (std::size_t j = 0; j < g.kernel.w; ++j, ++row) {
        double* dst = cols + row * g.cols();
        for (std::size_t oh = 0; oh < g.grid_h; ++oh) {
          const long long y = static_cast<long long>(oh * g.stride.h + i) -
                              static_cast<long long>(g.pad.h);
          double* line = dst + oh * g.grid_w;
          if (y < 0 || y >= static_cast<long long>(g.height)) {
            std::fill(line, line + g.grid_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(y) * g.width;
          for (std::size_t ow = 0; ow < g.grid_w; ++ow) {
            const long long x = static_cast<long long>(ow * g.stride.w + j) -
                                static_cast<long long>(g.pad.w);
            line[ow] = (x < 0 || x >= static_cast<long long>(g.width)) ? 0.0 : src[x];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back onto the (accumulated) image.
inline void col2im(const double* cols, const PatchGeometry& g, double* image) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel.h; ++i) {
      for (std::size_t j = 0; j < g.kernel.w; ++j, ++row) {
        const double* src = cols + row * g.cols();
        for (std::size_t oh = 0; oh < g.grid_h; ++oh) {
          const long long y = static_cast<long long>(oh * g.stride.h + i) -
                              static_cast<long long>(g.pad.h);
          if (y < 0 || y >= static_cast<long long>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(y) * g.width;
          const double* line = src + oh * g.grid_w;
          for (std::size_t ow = 0; ow < g.grid_w; ++ow) {
            const long long x = static_cast<long long>(ow * g.stride.w + j) -
                                static_cast<long long>(g.pad.w);
            if (x >= 0 && x < static_cast<long long>(g.width)) dst[x] += line[ow];
          }
        }
      }
    }
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + to_string(t.shape()));
  }
}

}  // namespace detail

// input [C_in, H, W], kernels [C_out, C_in, kH, kW], bias [C_out] -> [C_out, H', W'].
// Zero padding.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                     Extent2 stride, Extent2 padding) {
  using namespace detail;
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernels, 4, "conv2d", "kernels");
  if (kernels.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: kernels " + to_string(kernels.shape()) + " expect " +
                     std::to_string(kernels.dim(1)) + " input channels, input is " +
                     to_string(input.shape()));
  }
  if (bias.size() != kernels.dim(0)) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match kernels " +
                     to_string(kernels.shape()));
  }
  if (stride.h == 0 || stride.w == 0) throw ShapeError("conv2d: strides must be >= 1");
  const std::size_t c_out = kernels.dim(0);
  PatchGeometry g{input.dim(0), input.dim(1), input.dim(2), {kernels.dim(2), kernels.dim(3)},
                  stride, padding, 0, 0};
  g.grid_h = conv_out_extent(g.height, g.kernel.h, stride.h, padding.h);
  g.grid_w = conv_out_extent(g.width, g.kernel.w, stride.w, padding.w);
  if (g.grid_h == 0 || g.grid_w == 0) {
    throw ShapeError("conv2d: kernel " + to_string(g.kernel) + " larger than padded input " +
                     to_string(Extent2{g.height + 2 * padding.h, g.width + 2 * padding.w}));
  }

  auto cols = std::make_shared<Buffer>(g.rows() * g.cols());
  im2col(input.data().data(), g, cols->data());
  Buffer out(c_out * g.cols());
  {
    MatMap o(out.data(), c_out, g.cols());
    o.noalias() = ConstMatMap(kernels.data().data(), c_out, g.rows()) *
                  ConstMatMap(cols->data(), g.rows(), g.cols());
    const auto b = bias.data();
    for (std::size_t co = 0; co < c_out; ++co) o.row(co).array() += b[co];
  }

  auto xn = input.node(), kn = kernels.node(), bn = bias.node();
  return make_result({c_out, g.grid_h, g.grid_w}, std::move(out), {input, kernels, bias}, "conv2d",
                     [xn, kn, bn, g, c_out, cols](Node& self) {
    ConstMatMap gout(self.grad.data(), c_out, g.cols());
    if (kn->requires_grad) {
      MatMap gk(kn->ensure_grad().data(), c_out, g.rows());
      gk.noalias() += gout * ConstMatMap(cols->data(), g.rows(), g.cols()).transpose();
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for (std::size_t co = 0; co < c_out; ++co) gb[co] += gout.row(co).sum();
    }
    if (xn->requires_grad) {
      RowMatrix gcols = ConstMatMap(kn->data.data(), c_out, g.rows()).transpose() * gout;
      col2im(gcols.data(), g, xn->ensure_grad().data());
    }
  });
}

// input [C_in, H, W], kernels [C_in, C_out, kH, kW], bias [C_out].
// Uses the same kernel layout as the conv2d it is the adjoint of, i.e. for
// bias-free calls dot(conv2d(x, k), y) == dot(x, conv2d_transpose(y, k)).
inline Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                               Extent2 stride, Extent2 padding, Extent2 output_padding = {}) {
  using namespace detail;
  require_rank(input, 3, "conv2d_transpose", "input");
  require_rank(kernels, 4, "conv2d_transpose", "kernels");
  if (kernels.dim(0) != input.dim(0)) {
    throw ShapeError("conv2d_transpose: kernels " + to_string(kernels.shape()) + " expect " +
                     std::to_string(kernels.dim(0)) + " input channels, input is " +
                     to_string(input.shape()));
  }
  const std::size_t c_in = input.dim(0);
  const std::size_t c_out = kernels.dim(1);
  if (bias.size() != c_out) {
    throw ShapeError("conv2d_transpose: bias " + to_string(bias.shape()) +
                     " does not match kernels " + to_string(kernels.shape()));
  }
  if (stride.h == 0 || stride.w == 0) throw ShapeError("conv2d_transpose: strides must be >= 1");
  const Extent2 k{kernels.dim(2), kernels.dim(3)};
  const std::size_t h_out =
      conv_transpose_out_extent(input.dim(1), k.h, stride.h, padding.h, output_padding.h);
  const std::size_t w_out =
      conv_transpose_out_extent(input.dim(2), k.w, stride.w, padding.w, output_padding.w);
  if (h_out == 0 || w_out == 0) {
    throw ShapeError("conv2d_transpose: non-positive output extent for input " +
                     to_string(input.shape()) + ", kernel " + to_string(k) + ", stride " +
                     to_string(stride) + ", padding " + to_string(padding));
  }
  // Patch grid is the input; the "image" is the output.
  const PatchGeometry g{c_out, h_out, w_out, k, stride, padding, input.dim(1), input.dim(2)};

  Buffer out(c_out * h_out * w_out, 0.0);
  {
    RowMatrix cols = ConstMatMap(kernels.data().data(), c_in, g.rows()).transpose() *
                     ConstMatMap(input.data().data(), c_in, g.cols());
    col2im(cols.data(), g, out.data());
    const auto b = bias.data();
    for (std::size_t co = 0; co < c_out; ++co) {
      double* plane = out.data() + co * h_out * w_out;
      for (std::size_t i = 0; i < h_out * w_out; ++i) plane[i] += b[co];
    }
  }

  auto xn = input.node(), kn = kernels.node(), bn = bias.node();
  return make_result({c_out, h_out, w_out}, std::move(out), {input, kernels, bias},
                     "conv2d_transpose", [xn, kn, bn, g, c_in, c_out](Node& self) {
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      const std::size_t plane = g.height * g.width;
      for (std::size_t co = 0; co < c_out; ++co) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += self.grad[co * plane + i];
        gb[co] += s;
      }
    }
    if (!xn->requires_grad && !kn->requires_grad) return;
    RowMatrix gcols(g.rows(), g.cols());
    im2col(self.grad.data(), g, gcols.data());
    if (kn->requires_grad) {
      MatMap gk(kn->ensure_grad().data(), c_in, g.rows());
      gk.noalias() += ConstMatMap(xn->data.data(), c_in, g.cols()) * gcols.transpose();
    }
    if (xn->requires_grad) {
      MatMap gx(xn->ensure_grad().data(), c_in, g.cols());
      gx.noalias() += ConstMatMap(kn->data.data(), c_in, g.rows()) * gcols;
    }
  });
}

inline constexpr double kInstanceNormEps = 1e-5;

// Per-channel normalization over the H x W plane with population variance.
inline Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                            double eps = kInstanceNormEps) {
  detail::require_rank(input, 3, "instance_norm", "input");
  const std::size_t channels = input.dim(0);
  const std::size_t n = input.dim(1) * input.dim(2);
  if (n < 2) {
    throw ShapeError("instance_norm: H*W must be >= 2 for a defined variance, got " +
                     to_string(input.shape()));
  }
  if (gamma.size() != channels || beta.size() != channels) {
    throw ShapeError("instance_norm: affine parameters " + to_string(gamma.shape()) + "/" +
                     to_string(beta.shape()) + " do not match " + std::to_string(channels) +
                     " channels");
  }
  const auto x = input.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  auto normalized = std::make_shared<Buffer>(x.size());
  auto inv_std = std::make_shared<Buffer>(channels);
  Buffer out(x.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x.data() + c * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xc[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xc[i] - mu) * (xc[i] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double xh = (xc[i] - mu) * is;
      (*normalized)[c * n + i] = xh;
      out[c * n + i] = gm[c] * xh + bt[c];
    }
  }
  auto xn = input.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_result(input.shape(), std::move(out), {input, gamma, beta}, "instance_norm",
                             [xn, gn, bn, normalized, inv_std, channels, n](detail::Node& self) {
    const auto& gy = self.grad;
    const auto& xh = *normalized;
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += gy[c * n + i];
        sum_gx += gy[c * n + i] * xh[c * n + i];
      }
      if (gn->requires_grad) gn->ensure_grad()[c] += sum_gx;
      if (bn->requires_grad) bn->ensure_grad()[c] += sum_g;
      if (xn->requires_grad) {
        auto& gx = xn->ensure_grad();
        const double scale = gn->data[c] * (*inv_std)[c] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          gx[c * n + i] += scale * (static_cast<double>(n) * gy[c * n + i] - sum_g -
                                    xh[c * n + i] * sum_gx);
        }
      }
    }
  });
}

// Linear map applied along one axis of a [C, H, W] tensor: the axis of
// extent `in` becomes extent `out` via weight [out, in] and bias [out]. For
// axis 0 this is a 1x1 convolution; for axes 1 and 2 it is the same 1x1
// convolution applied with that axis moved into the channel slot.
inline Tensor axis_linear(const Tensor& input, const Tensor& weight, const Tensor& bias,
                          std::size_t axis) {
  using namespace detail;
  require_rank(input, 3, "axis_linear", "input");
  require_rank(weight, 2, "axis_linear", "weight");
  if (axis > 2) throw ShapeError("axis_linear: axis must be 0, 1 or 2");
  if (weight.dim(1) != input.dim(axis)) {
    throw ShapeError("axis_linear: weight " + to_string(weight.shape()) + " cannot act on axis " +
                     std::to_string(axis) + " of " + to_string(input.shape()));
  }
  const std::size_t n_out = weight.dim(0);
  if (bias.size() != n_out) {
    throw ShapeError("axis_linear: bias " + to_string(bias.shape()) + " does not match weight " +
                     to_string(weight.shape()));
  }
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Shape out_shape{C, H, W};
  out_shape[axis] = n_out;
  Buffer out(numel(out_shape));
  const auto x = input.data();
  const auto b = bias.data();
  ConstMatMap wm(weight.data().data(), n_out, input.dim(axis));

  // Apply y = W x over the chosen axis for every slice.
  if (axis == 0) {
    MatMap(out.data(), n_out, H * W).noalias() = wm * ConstMatMap(x.data(), C, H * W);
    for (std::size_t o = 0; o < n_out; ++o)
      for (std::size_t i = 0; i < H * W; ++i) out[o * H * W + i] += b[o];
  } else if (axis == 1) {
    for (std::size_t c = 0; c < C; ++c) {
      MatMap oc(out.data() + c * n_out * W, n_out, W);
      oc.noalias() = wm * ConstMatMap(x.data() + c * H * W, H, W);
      for (std::size_t o = 0; o < n_out; ++o) oc.row(o).array() += b[o];
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      MatMap oc(out.data() + c * H * n_out, H, n_out);
      oc.noalias() = ConstMatMap(x.data() + c * H * W, H, W) * wm.transpose();
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t o = 0; o < n_out; ++o) oc(h, o) += b[o];
    }
  }

  auto xn = input.node(), wn = weight.node(), bn = bias.node();
  return make_result(std::move(out_shape), std::move(out), {input, weight, bias}, "axis_linear",
                     [xn, wn, bn, axis, C, H, W, n_out](Node& self) {
    const std::size_t n_in = wn->data.size() / n_out;
    ConstMatMap wm(wn->data.data(), n_out, n_in);
    const double* gy = self.grad.data();
    double* gw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
    double* gb = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
    double* gx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
    const double* x = xn->data.data();
    if (axis == 0) {
      ConstMatMap g(gy, n_out, H * W);
      if (gw) MatMap(gw, n_out, n_in).noalias() += g * ConstMatMap(x, C, H * W).transpose();
      if (gb)
        for (std::size_t o = 0; o < n_out; ++o) gb[o] += g.row(o).sum();
      if (gx) MatMap(gx, C, H * W).noalias() += wm.transpose() * g;
    } else if (axis == 1) {
      for (std::size_t c = 0; c < C; ++c) {
        ConstMatMap g(gy + c * n_out * W, n_out, W);
        ConstMatMap xc(x + c * H * W, H, W);
        if (gw) MatMap(gw, n_out, n_in).noalias() += g * xc.transpose();
        if (gb)
          for (std::size_t o = 0; o < n_out; ++o) gb[o] += g.row(o).sum();
        if (gx) MatMap(gx + c * H * W, H, W).noalias() += wm.transpose() * g;
      }
    } else {
      for (std::size_t c = 0; c < C; ++c) {
        ConstMatMap g(gy + c * H * n_out, H, n_out);
        ConstMatMap xc(x + c * H * W, H, W);
        if (gw) MatMap(gw, n_out, n_in).noalias() += g.transpose() * xc;
        if (gb)
          for (std::size_t o = 0; o < n_out; ++o) gb[o] += g.col(o).sum();
        if (gx) MatMap(gx + c * H * W, H, W).noalias() += g * wm;
      }
    }
  });
}

}  // namespace lbkd
