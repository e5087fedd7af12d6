#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "okfe/tensor.hpp"

namespace okfe {

// Weights are laid out [out_channels, in_channels, k, k]; k must be odd so
// "same" zero padding is symmetric.
template <typename T>
struct BasicConvParams {
  BasicTensor<T> weight;
  std::vector<T> bias;

  static BasicConvParams zeros(std::size_t out_channels,
                               std::size_t in_channels, std::size_t k) {
    return {BasicTensor<T>(Shape{out_channels, in_channels, k, k}),
            std::vector<T>(out_channels, T{0})};
  }

  std::size_t out_channels() const { return weight.shape().at(0); }
  std::size_t in_channels() const { return weight.shape().at(1); }
  std::size_t kernel_size() const { return weight.shape().at(2); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  void validate() const;

  template <typename U>
  BasicConvParams<U> cast() const {
    return {weight.template cast<U>(), std::vector<U>(bias.begin(), bias.end())};
  }

  friend bool operator==(const BasicConvParams&,
                         const BasicConvParams&) = default;
};

using ConvParams = BasicConvParams<float>;

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;  // empty when not requested
  BasicTensor<T> weight;
  std::vector<T> bias;
};

// "Same"-size 2-D convolution (cross-correlation) with zero padding.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input,
                      const BasicConvParams<T>& params);

// Vector-Jacobian product of conv2d for upstream gradient `grad_output`.
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input,
                             const BasicConvParams<T>& params,
                             const BasicTensor<T>& grad_output,
                             bool want_input_grad = true);

template <typename T>
struct BasicSamplePoint {
  T row;
  T col;
};

using SamplePoint = BasicSamplePoint<float>;

// Value of a bilinear sample and its partial derivatives with respect to the
// sample coordinates. Derivatives are zero along an axis that was clamped.
template <typename T>
struct BilinearTap {
  T value;
  T d_row;
  T d_col;
};

// Bilinear interpolation on one H x W plane. Coordinates outside
// [0, H-1] x [0, W-1] are clamped to the border.
template <typename T>
BilinearTap<T> bilinear_tap(std::span<const T> plane, std::size_t height,
                            std::size_t width, T row, T col);

// Scatters `grad` into the four grid cells that produced the sample at
// (row, col), mirroring bilinear_tap's clamping.
template <typename T>
void bilinear_scatter(std::span<T> grad_plane, std::size_t height,
                      std::size_t width, T row, T col, T grad);

template <typename T>
std::vector<T> bilinear_sample(const BasicTensor<T>& map,
                               std::span<const BasicSamplePoint<T>> points);

// In-place max(x, 0).
template <typename T>
void relu_inplace(BasicTensor<T>& t) {
  for (T& v : t.values()) v = v > T{0} ? v : T{0};
}

}  // namespace okfe
