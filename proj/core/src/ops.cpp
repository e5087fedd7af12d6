#include "okfe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace okfe {

template <typename T>
void BasicConvParams<T>::validate() const {
  if (weight.rank() != 4) {
    throw ShapeError("conv weight must be rank 4, got " +
                     to_string(weight.shape()));
  }
  const auto& s = weight.shape();
  if (s[2] != s[3]) {
    throw ShapeError("conv kernel must be square, got " + to_string(s));
  }
  if (s[2] % 2 == 0) {
    throw ShapeError("conv kernel size must be odd, got " + std::to_string(s[2]));
  }
  if (bias.size() != s[0]) {
    throw ShapeError("conv bias has " + std::to_string(bias.size()) +
                     " entries for " + std::to_string(s[0]) + " output channels");
  }
}

namespace {

template <typename T>
void check_conv_input(const BasicTensor<T>& input,
                      const BasicConvParams<T>& params) {
  params.validate();
  if (input.rank() != 3 || input.channels() != params.in_channels()) {
    throw ShapeError("conv2d input " + to_string(input.shape()) +
                     " incompatible with weight " +
                     to_string(params.weight.shape()));
  }
  const std::size_t k = params.kernel_size();
  if (input.height() < k || input.width() < k) {
    throw ShapeError("conv2d input " + to_string(input.shape()) +
                     " smaller than kernel " + to_string(params.weight.shape()));
  }
}

}  // namespace

// Zero-padded copies of every input plane with row stride w + 2*pad. In this
// layout each kernel tap is one contiguous multiply-add over h * stride
// elements; the 2*pad trailing columns of every output row are scratch.
template <typename T>
std::vector<T> padded_planes(const BasicTensor<T>& input, std::size_t pad) {
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  const std::size_t stride = w + 2 * pad;
  const std::size_t plane = (h + 2 * pad) * stride + 2 * pad;
  std::vector<T> out(input.channels() * plane, T{0});
  for (std::size_t c = 0; c < input.channels(); ++c) {
    const T* src = input.plane(c).data();
    T* dst = out.data() + c * plane;
    for (std::size_t i = 0; i < h; ++i) {
      std::copy(src + i * w, src + (i + 1) * w, dst + (i + pad) * stride + pad);
    }
  }
  return out;
}

// Eight independent partial sums so the reduction vectorizes without
// reassociation flags; the lane order is fixed, so results are reproducible.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 8;
  T lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
  }
  T tail{0};
  for (; i < n; ++i) tail += a[i] * b[i];
  T sum{0};
  for (T v : lanes) sum += v;
  return sum + tail;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input,
                      const BasicConvParams<T>& params) {
  check_conv_input(input, params);
  const std::size_t cin = params.in_channels();
  const std::size_t cout = params.out_channels();
  const std::size_t k = params.kernel_size();
  const std::size_t pad = k / 2;
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  const std::size_t stride = w + 2 * pad;
  const std::size_t in_plane = (h + 2 * pad) * stride + 2 * pad;
  const std::size_t span = h * stride;

  const std::vector<T> padded = padded_planes(input, pad);
  std::vector<T> acc(span);
  BasicTensor<T> out = BasicTensor<T>::chw(cout, h, w);
  for (std::size_t o = 0; o < cout; ++o) {
    std::fill(acc.begin(), acc.end(), params.bias[o]);
    T* dst = acc.data();
    for (std::size_t c = 0; c < cin; ++c) {
      const T* base = padded.data() + c * in_plane;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const T wv = params.weight[((o * cin + c) * k + ki) * k + kj];
          if (wv == T{0}) continue;
          const T* src = base + ki * stride + kj;
          for (std::size_t n = 0; n < span; ++n) dst[n] += wv * src[n];
        }
      }
    }
    T* out_plane = out.plane(o).data();
    for (std::size_t i = 0; i < h; ++i) {
      std::copy(dst + i * stride, dst + i * stride + w, out_plane + i * w);
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input,
                             const BasicConvParams<T>& params,
                             const BasicTensor<T>& grad_output,
                             bool want_input_grad) {
  check_conv_input(input, params);
  const std::size_t cin = params.in_channels();
  const std::size_t cout = params.out_channels();
  const std::size_t k = params.kernel_size();
  const std::size_t pad = k / 2;
  const std::size_t h = input.height();
  const std::size_t w = input.width();
  if (grad_output.shape() != Shape{cout, h, w}) {
    throw ShapeError("conv2d_backward grad " + to_string(grad_output.shape()) +
                     " does not match output " +
                     to_string(Shape{cout, h, w}));
  }
  const std::size_t stride = w + 2 * pad;
  const std::size_t in_plane = (h + 2 * pad) * stride + 2 * pad;
  const std::size_t span = h * stride;

  ConvGrads<T> g;
  g.weight = BasicTensor<T>(params.weight.shape());
  g.bias.assign(cout, T{0});
  if (want_input_grad) g.input = BasicTensor<T>(input.shape());

  const std::vector<T> padded = padded_planes(input, pad);
  std::vector<T> grad_padded(want_input_grad ? cin * in_plane : 0, T{0});
  // Output gradient in the same strided layout, zero in the scratch columns
  // so they contribute nothing.
  std::vector<T> go(span, T{0});
  for (std::size_t o = 0; o < cout; ++o) {
    const T* src_go = grad_output.plane(o).data();
    double bias_acc = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        go[i * stride + j] = src_go[i * w + j];
        bias_acc += src_go[i * w + j];
      }
    }
    g.bias[o] = static_cast<T>(bias_acc);

    for (std::size_t c = 0; c < cin; ++c) {
      const T* base = padded.data() + c * in_plane;
      T* gbase = want_input_grad ? grad_padded.data() + c * in_plane : nullptr;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const std::size_t widx = ((o * cin + c) * k + ki) * k + kj;
          const T* src = base + ki * stride + kj;
          g.weight[widx] = dot(go.data(), src, span);
          if (gbase != nullptr) {
            const T wv = params.weight[widx];
            T* gdst = gbase + ki * stride + kj;
            for (std::size_t n = 0; n < span; ++n) gdst[n] += wv * go[n];
          }
        }
      }
    }
  }
  if (want_input_grad) {
    for (std::size_t c = 0; c < cin; ++c) {
      const T* src = grad_padded.data() + c * in_plane;
      T* dst = g.input.plane(c).data();
      for (std::size_t i = 0; i < h; ++i) {
        const T* row = src + (i + pad) * stride + pad;
        std::copy(row, row + w, dst + i * w);
      }
    }
  }
  return g;
}

template <typename T>
BilinearTap<T> bilinear_tap(std::span<const T> plane, std::size_t height,
                            std::size_t width, T row, T col) {
  const T max_row = static_cast<T>(height - 1);
  const T max_col = static_cast<T>(width - 1);
  bool row_clamped = false;
  bool col_clamped = false;
  if (row < T{0}) {
    row = T{0};
    row_clamped = true;
  } else if (row > max_row) {
    row = max_row;
    row_clamped = true;
  }
  if (col < T{0}) {
    col = T{0};
    col_clamped = true;
  } else if (col > max_col) {
    col = max_col;
    col_clamped = true;
  }

  const auto r0 = static_cast<std::size_t>(std::floor(row));
  const auto c0 = static_cast<std::size_t>(std::floor(col));
  const std::size_t r1 = std::min(r0 + 1, height - 1);
  const std::size_t c1 = std::min(c0 + 1, width - 1);
  const T lr = row - static_cast<T>(r0);
  const T lc = col - static_cast<T>(c0);

  const T v00 = plane[r0 * width + c0];
  const T v01 = plane[r0 * width + c1];
  const T v10 = plane[r1 * width + c0];
  const T v11 = plane[r1 * width + c1];

  BilinearTap<T> tap{};
  tap.value = (T{1} - lr) * ((T{1} - lc) * v00 + lc * v01) +
              lr * ((T{1} - lc) * v10 + lc * v11);
  tap.d_row = row_clamped || r1 == r0
                  ? T{0}
                  : ((T{1} - lc) * (v10 - v00) + lc * (v11 - v01));
  tap.d_col = col_clamped || c1 == c0
                  ? T{0}
                  : ((T{1} - lr) * (v01 - v00) + lr * (v11 - v10));
  return tap;
}

template <typename T>
void bilinear_scatter(std::span<T> grad_plane, std::size_t height,
                      std::size_t width, T row, T col, T grad) {
  row = std::clamp(row, T{0}, static_cast<T>(height - 1));
  col = std::clamp(col, T{0}, static_cast<T>(width - 1));
  const auto r0 = static_cast<std::size_t>(std::floor(row));
  const auto c0 = static_cast<std::size_t>(std::floor(col));
  const std::size_t r1 = std::min(r0 + 1, height - 1);
  const std::size_t c1 = std::min(c0 + 1, width - 1);
  const T lr = row - static_cast<T>(r0);
  const T lc = col - static_cast<T>(c0);
  grad_plane[r0 * width + c0] += grad * (T{1} - lr) * (T{1} - lc);
  grad_plane[r0 * width + c1] += grad * (T{1} - lr) * lc;
  grad_plane[r1 * width + c0] += grad * lr * (T{1} - lc);
  grad_plane[r1 * width + c1] += grad * lr * lc;
}

template <typename T>
std::vector<T> bilinear_sample(const BasicTensor<T>& map,
                               std::span<const BasicSamplePoint<T>> points) {
  if (map.rank() != 3 || map.channels() != 1) {
    throw ShapeError("bilinear_sample expects a [1,H,W] map, got " +
                     to_string(map.shape()));
  }
  std::vector<T> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    out.push_back(
        bilinear_tap<T>(map.values(), map.height(), map.width(), p.row, p.col)
            .value);
  }
  return out;
}

#define OKFE_INSTANTIATE_OPS(T)                                                \
  template struct BasicConvParams<T>;                                          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&,                        \
                                 const BasicConvParams<T>&);                   \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&,                 \
                                        const BasicConvParams<T>&,             \
                                        const BasicTensor<T>&, bool);          \
  template BilinearTap<T> bilinear_tap(std::span<const T>, std::size_t,        \
                                       std::size_t, T, T);                     \
  template void bilinear_scatter(std::span<T>, std::size_t, std::size_t, T, T, \
                                 T);                                           \
  template std::vector<T> bilinear_sample(                                     \
      const BasicTensor<T>&, std::span<const BasicSamplePoint<T>>);

OKFE_INSTANTIATE_OPS(float)
OKFE_INSTANTIATE_OPS(double)

#undef OKFE_INSTANTIATE_OPS

}  // namespace okfe
