#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

#include "elunet/tensor.hpp"

namespace elunet {

// Cross-correlation with zero padding. weights are (outC, inC, kH, kW); an
// empty bias means the layer carries none.
template <typename T>
struct ConvParams {
  Tensor4<T> weights;
  std::vector<T> bias;
  int stride = 1;
  int pad = 0;
};

enum class ConvAlgo { direct, im2col };

template <typename T>
Shape4 conv_output_shape(Shape4 x, const ConvParams<T>& p) {
  const Shape4 ws = p.weights.shape();
  if (p.stride < 1) throw std::invalid_argument("conv2d: non-positive stride");
  if (p.pad < 0) throw std::invalid_argument("conv2d: negative pad");
  if (x.c != ws.c)
    throw std::invalid_argument("conv2d: channel mismatch, input " + x.str() +
                                " vs weights " + ws.str());
  if (!p.bias.empty() && static_cast<std::int64_t>(p.bias.size()) != ws.n)
    throw std::invalid_argument("conv2d: bias length mismatch");
  const std::int64_t oh = (x.h + 2 * p.pad - ws.h) / p.stride + 1;
  const std::int64_t ow = (x.w + 2 * p.pad - ws.w) / p.stride + 1;
  if (x.h + 2 * p.pad < ws.h || x.w + 2 * p.pad < ws.w)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  return {x.n, ws.n, oh, ow};
}

namespace detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Output columns xo with a valid source for tap kw satisfy
// 0 <= xo*stride - pad + kw < W; everything else is zero padding.
inline std::pair<std::int64_t, std::int64_t> tap_range(std::int64_t extent,
                                                       std::int64_t out_extent,
                                                       int stride, int pad,
                                                       std::int64_t tap) {
  const std::int64_t lo_num = pad - tap;
  std::int64_t lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
  std::int64_t hi = (extent + pad - tap + stride - 1) / stride;
  lo = std::min(lo, out_extent);
  hi = std::max(lo, std::min(hi, out_extent));
  return {lo, hi};
}

// Patch matrix for one image: row (ic*kH+kh)*kW+kw holds that kernel tap
// across all output positions, zero where the tap falls outside the input.
// Valid spans are contiguous (stride 1) or strided copies, no inner branch.
template <typename T>
void im2col(const Tensor4<T>& x, std::int64_t n, std::int64_t kh_count,
            std::int64_t kw_count, int stride, int pad, std::int64_t oh,
            std::int64_t ow, std::vector<T>& col) {
  const Shape4 s = x.shape();
  col.resize(s.c * kh_count * kw_count * oh * ow);
  std::int64_t row = 0;
  for (std::int64_t ic = 0; ic < s.c; ++ic)
    for (std::int64_t kh = 0; kh < kh_count; ++kh)
      for (std::int64_t kw = 0; kw < kw_count; ++kw, ++row) {
        T* base = col.data() + row * oh * ow;
        const auto [xlo, xhi] = tap_range(s.w, ow, stride, pad, kw);
        for (std::int64_t y = 0; y < oh; ++y) {
          T* dst = base + y * ow;
          const std::int64_t sy = y * stride - pad + kh;
          if (sy < 0 || sy >= s.h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          std::fill(dst, dst + xlo, T(0));
          std::fill(dst + xhi, dst + ow, T(0));
          const T* src = &x.at(n, ic, sy, 0);
          const std::int64_t shift = kw - pad;
          if (stride == 1) {
            std::copy(src + xlo + shift, src + xhi + shift, dst + xlo);
          } else {
            for (std::int64_t xo = xlo; xo < xhi; ++xo)
              dst[xo] = src[xo * stride + shift];
          }
        }
      }
}

// Transpose of im2col: scatter-adds patch-matrix gradients back to input
// positions, sequentially, so accumulation order is fixed.
template <typename T>
void col2im_add(const std::vector<T>& col, Tensor4<T>& gx, std::int64_t n,
                std::int64_t kh_count, std::int64_t kw_count, int stride, int pad,
                std::int64_t oh, std::int64_t ow) {
  const Shape4 s = gx.shape();
  std::int64_t row = 0;
  for (std::int64_t ic = 0; ic < s.c; ++ic)
    for (std::int64_t kh = 0; kh < kh_count; ++kh)
      for (std::int64_t kw = 0; kw < kw_count; ++kw, ++row) {
        const T* base = col.data() + row * oh * ow;
        const auto [xlo, xhi] = tap_range(s.w, ow, stride, pad, kw);
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t sy = y * stride - pad + kh;
          if (sy < 0 || sy >= s.h) continue;
          const T* src = base + y * ow;
          T* dst = &gx.at(n, ic, sy, 0);
          const std::int64_t shift = kw - pad;
          if (stride == 1) {
            for (std::int64_t xo = xlo; xo < xhi; ++xo) dst[xo + shift] += src[xo];
          } else {
            for (std::int64_t xo = xlo; xo < xhi; ++xo)
              dst[xo * stride + shift] += src[xo];
          }
        }
      }
}

}  // namespace detail

template <typename T>
Tensor4<T> conv2d_forward_direct(const Tensor4<T>& x, const ConvParams<T>& p) {
  const Shape4 out_shape = conv_output_shape(x.shape(), p);
  const Shape4 s = x.shape(), ws = p.weights.shape();
  Tensor4<T> out(out_shape);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t oc = 0; oc < ws.n; ++oc)
      for (std::int64_t y = 0; y < out_shape.h; ++y)
        for (std::int64_t xo = 0; xo < out_shape.w; ++xo) {
          double acc = p.bias.empty() ? 0.0 : static_cast<double>(p.bias[oc]);
          for (std::int64_t ic = 0; ic < s.c; ++ic)
            for (std::int64_t kh = 0; kh < ws.h; ++kh) {
              const std::int64_t sy = y * p.stride - p.pad + kh;
              if (sy < 0 || sy >= s.h) continue;
              for (std::int64_t kw = 0; kw < ws.w; ++kw) {
                const std::int64_t sx = xo * p.stride - p.pad + kw;
                if (sx < 0 || sx >= s.w) continue;
                acc += static_cast<double>(x.at(n, ic, sy, sx)) *
                       static_cast<double>(p.weights.at(oc, ic, kh, kw));
              }
            }
          out.at(n, oc, y, xo) = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
Tensor4<T> conv2d_forward_im2col(const Tensor4<T>& x, const ConvParams<T>& p) {
  const Shape4 out_shape = conv_output_shape(x.shape(), p);
  const Shape4 s = x.shape(), ws = p.weights.shape();
  const std::int64_t k = s.c * ws.h * ws.w;
  const std::int64_t m = out_shape.h * out_shape.w;
  Tensor4<T> out(out_shape);
  detail::ConstMatMap<T> weight_mat(p.weights.data(), ws.n, k);
  std::vector<T> col;
  for (std::int64_t n = 0; n < s.n; ++n) {
    detail::im2col(x, n, ws.h, ws.w, p.stride, p.pad, out_shape.h, out_shape.w, col);
    detail::ConstMatMap<T> col_mat(col.data(), k, m);
    detail::MatMap<T> out_mat(&out.at(n, 0, 0, 0), ws.n, m);
    out_mat.noalias() = weight_mat * col_mat;
  }
  if (!p.bias.empty())
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t oc = 0; oc < ws.n; ++oc) {
        T* row = &out.at(n, oc, 0, 0);
        for (std::int64_t i = 0; i < m; ++i) row[i] += p.bias[oc];
      }
  return out;
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvParams<T>& p,
                          ConvAlgo algo = ConvAlgo::im2col) {
  return algo == ConvAlgo::direct ? conv2d_forward_direct(x, p)
                                  : conv2d_forward_im2col(x, p);
}

template <typename T>
struct ConvGrads {
  Tensor4<T> x;
  Tensor4<T> weights;
  std::vector<T> bias;  // empty when the layer has no bias
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const ConvParams<T>& p,
                             const Tensor4<T>& grad_out) {
  const Shape4 out_shape = conv_output_shape(x.shape(), p);
  if (!(grad_out.shape() == out_shape))
    throw std::invalid_argument("conv2d_backward: grad shape " +
                                grad_out.shape().str() + ", expected " +
                                out_shape.str());
  const Shape4 s = x.shape(), ws = p.weights.shape();
  const std::int64_t k = s.c * ws.h * ws.w;
  const std::int64_t m = out_shape.h * out_shape.w;

  ConvGrads<T> g{Tensor4<T>(s), Tensor4<T>(ws),
                 std::vector<T>(p.bias.size(), T(0))};
  detail::ConstMatMap<T> weight_mat(p.weights.data(), ws.n, k);
  detail::MatMap<T> gw_mat(g.weights.data(), ws.n, k);
  std::vector<T> col, gcol(k * m);
  for (std::int64_t n = 0; n < s.n; ++n) {
    detail::im2col(x, n, ws.h, ws.w, p.stride, p.pad, out_shape.h, out_shape.w, col);
    detail::ConstMatMap<T> col_mat(col.data(), k, m);
    detail::ConstMatMap<T> go_mat(&grad_out.at(n, 0, 0, 0), ws.n, m);
    gw_mat.noalias() += go_mat * col_mat.transpose();
    detail::MatMap<T> gcol_mat(gcol.data(), k, m);
    gcol_mat.noalias() = weight_mat.transpose() * go_mat;
    detail::col2im_add(gcol, g.x, n, ws.h, ws.w, p.stride, p.pad, out_shape.h,
                       out_shape.w);
  }
  if (!p.bias.empty())
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t oc = 0; oc < ws.n; ++oc) {
        const T* row = &grad_out.at(n, oc, 0, 0);
        double acc = 0;
        for (std::int64_t i = 0; i < m; ++i) acc += row[i];
        g.bias[oc] += static_cast<T>(acc);
      }
  return g;
}

}  // namespace elunet
