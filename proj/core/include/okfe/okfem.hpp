#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "okfe/ops.hpp"
#include "okfe/tensor.hpp"

namespace okfe {

enum class FirstFramePolicy { never_keyframe, always_keyframe };

std::string_view to_string(FirstFramePolicy policy);
FirstFramePolicy parse_first_frame_policy(std::string_view text);

struct OkfemConfig {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t backbone_layers = 2;
  std::size_t backbone_channels = 16;
  std::size_t deform_kernel_size = 3;
  std::size_t appearance_kernel_size = 3;
  FirstFramePolicy first_frame_policy = FirstFramePolicy::never_keyframe;
  // Initial sum of the threshold map, spread evenly over its pixels. A small
  // positive value starts the gate closed on static content.
  double threshold_init = 0.1;

  void validate() const;
  Shape frame_shape() const { return {channels, height, width}; }
  Shape map_shape() const { return {1, height, width}; }
  // Channel count seen by the deformable layer.
  std::size_t feature_channels() const {
    return backbone_layers == 0 ? channels : backbone_channels;
  }
};

// Plain conv stack (each followed by max(x, 0)), an offset predictor with
// 2*k*k output channels (dy, dx per tap) and the single-channel response
// kernel applied at the deformed sample positions.
template <typename T>
struct BasicDeformableConvParams {
  std::vector<BasicConvParams<T>> backbone;
  BasicConvParams<T> offset_predictor;
  BasicConvParams<T> response_kernel;

  std::size_t kernel_size() const { return response_kernel.kernel_size(); }
  void validate() const;

  template <typename U>
  BasicDeformableConvParams<U> cast() const {
    BasicDeformableConvParams<U> out;
    for (const auto& layer : backbone) out.backbone.push_back(layer.template cast<U>());
    out.offset_predictor = offset_predictor.template cast<U>();
    out.response_kernel = response_kernel.template cast<U>();
    return out;
  }

  friend bool operator==(const BasicDeformableConvParams&,
                         const BasicDeformableConvParams&) = default;
};

template <typename T>
struct BasicThresholdKernel {
  BasicTensor<T> th;  // [1, H, W]

  friend bool operator==(const BasicThresholdKernel&,
                         const BasicThresholdKernel&) = default;
};

template <typename T>
struct BasicAppearanceParams {
  BasicConvParams<T> w;  // [C, C, k, k]

  friend bool operator==(const BasicAppearanceParams&,
                         const BasicAppearanceParams&) = default;
};

template <typename T>
struct BasicOkfemModel {
  OkfemConfig config;
  BasicDeformableConvParams<T> deform;
  BasicThresholdKernel<T> threshold;
  BasicAppearanceParams<T> appearance;

  void validate() const;

  template <typename U>
  BasicOkfemModel<U> cast() const {
    return {config, deform.template cast<U>(), {threshold.th.template cast<U>()},
            {appearance.w.template cast<U>()}};
  }

  // Visits every trainable array in a fixed order with a stable name.
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    for (std::size_t i = 0; i < self.deform.backbone.size(); ++i) {
      const std::string prefix = "backbone." + std::to_string(i);
      fn(prefix + ".weight", self.deform.backbone[i].weight.values());
      fn(prefix + ".bias", std::span(self.deform.backbone[i].bias));
    }
    fn(std::string("offset.weight"), self.deform.offset_predictor.weight.values());
    fn(std::string("offset.bias"), std::span(self.deform.offset_predictor.bias));
    fn(std::string("response.weight"), self.deform.response_kernel.weight.values());
    fn(std::string("response.bias"), std::span(self.deform.response_kernel.bias));
    fn(std::string("threshold"), self.threshold.th.values());
    fn(std::string("appearance.weight"), self.appearance.w.weight.values());
    fn(std::string("appearance.bias"), std::span(self.appearance.w.bias));
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    visit(*this, std::forward<Fn>(fn));
  }
  template <typename Fn>
  void for_each_parameter(Fn&& fn) const {
    visit(*this, std::forward<Fn>(fn));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, auto span) { n += span.size(); });
    return n;
  }

  // Copies of all parameters concatenated in visit order.
  std::vector<T> flatten() const {
    std::vector<T> out;
    for_each_parameter([&](const std::string&, auto span) {
      out.insert(out.end(), span.begin(), span.end());
    });
    return out;
  }

  friend bool operator==(const BasicOkfemModel& a, const BasicOkfemModel& b) {
    return a.deform == b.deform && a.threshold == b.threshold &&
           a.appearance == b.appearance;
  }
};

using DeformableConvParams = BasicDeformableConvParams<float>;
using ThresholdKernel = BasicThresholdKernel<float>;
using AppearanceParams = BasicAppearanceParams<float>;
using OkfemModel = BasicOkfemModel<float>;

// Seeded initialization: He-normal backbone, small offset predictor (so
// sample positions start near the regular grid), uniform threshold map
// summing to threshold_init.
OkfemModel make_model(const OkfemConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Differentiable pieces shared by streaming and training.

template <typename T>
BasicTensor<T> deformable_conv(const BasicTensor<T>& features,
                               const BasicTensor<T>& offsets,
                               const BasicConvParams<T>& response);

template <typename T>
struct DeformableConvGrads {
  BasicTensor<T> features;
  BasicTensor<T> offsets;
  BasicConvParams<T> response;
};

template <typename T>
DeformableConvGrads<T> deformable_conv_backward(
    const BasicTensor<T>& features, const BasicTensor<T>& offsets,
    const BasicConvParams<T>& response, const BasicTensor<T>& grad_map);

// Intermediate values of one receptive-field evaluation, kept for backward.
template <typename T>
struct ReceptiveFieldTrace {
  std::vector<BasicTensor<T>> activations;  // activations[0] is the frame
  BasicTensor<T> offsets;
  BasicTensor<T> map;  // D(t), [1, H, W]

  const BasicTensor<T>& features() const { return activations.back(); }
};

template <typename T>
ReceptiveFieldTrace<T> receptive_field_trace(
    const BasicTensor<T>& frame, const BasicDeformableConvParams<T>& params);

// Parameter gradients of <grad_map, D(t)>.
template <typename T>
BasicDeformableConvParams<T> receptive_field_backward(
    const ReceptiveFieldTrace<T>& trace,
    const BasicDeformableConvParams<T>& params,
    const BasicTensor<T>& grad_map);

template <typename T>
BasicTensor<T> appearance_map(const BasicTensor<T>& frame,
                              const BasicTensor<T>& receptive_field,
                              const BasicAppearanceParams<T>& params);

// ---------------------------------------------------------------------------
// Streaming types.

struct ReceptiveFieldMap {
  Tensor map;  // [1, H, W]
  std::int64_t frame_index = 0;
};

struct MotionDiffMap {
  Tensor r;  // [1, H, W]
  std::int64_t frame_index = 0;
};

struct FrameScore {
  Tensor s_map;  // per-pixel r - TH
  float total = 0.0f;
  std::int64_t frame_index = 0;
};

struct GateDecision {
  bool selected = false;
  std::int64_t frame_index = 0;
};

struct KeyframeRecord {
  std::int64_t frame_index = 0;
  float score = 0.0f;
  Tensor k_fm;  // r(t), [1, H, W]
  Tensor k_fa;  // y(t) + y(t-1), [C, H, W]
  // Set only for a first frame emitted by FirstFramePolicy::always_keyframe;
  // such records carry k_fm = 0, k_fa = y(t) and score 0.
  bool forced = false;
};

// Everything a stream remembers between frames: one D and one y.
struct OkfemState {
  std::optional<ReceptiveFieldMap> prev_receptive_field;
  std::optional<Tensor> prev_appearance;
  std::int64_t frame_index = 0;
};

struct StepOutput {
  std::int64_t frame_index = 0;
  std::optional<float> score;  // absent for the first frame
  std::optional<KeyframeRecord> keyframe;
  // Same features for a scored frame the gate rejected. Consumers use it for
  // the zero-keyframe fallback and the random-frame ablation.
  std::optional<KeyframeRecord> rejected;
};

OkfemState init_state(const OkfemConfig& config);

ReceptiveFieldMap receptive_field(const Tensor& frame,
                                  const DeformableConvParams& params,
                                  std::int64_t frame_index = 0);

MotionDiffMap motion_diff(const ReceptiveFieldMap& current,
                          const ReceptiveFieldMap& previous);

FrameScore frame_score(const MotionDiffMap& r, const ThresholdKernel& th);

GateDecision gate(const FrameScore& score);

Tensor appearance(const Tensor& frame, const ReceptiveFieldMap& d_t,
                  const AppearanceParams& params);

// Advances `state` by one frame.
StepOutput step(OkfemState& state, const Tensor& frame, const OkfemModel& model);

// Same as step() for an externally computed D(t). Without a frame the
// appearance path sees a zero frame, so y(t) = W * broadcast(D(t)).
StepOutput step_with_receptive_field(OkfemState& state, const Tensor& d_map,
                                     const Tensor* frame,
                                     const OkfemModel& model);

// Binary snapshot of a state ("OKS1" + index + stored maps as FTS1 blobs).
std::vector<std::uint8_t> serialize_state(const OkfemState& state);

// Runs a full sequence through a fresh state and keeps the emitted records
// plus the highest-scoring rejected frame as a fallback.
struct ExtractionResult {
  std::vector<KeyframeRecord> keyframes;
  std::vector<float> scores;  // S(t) per frame; frame 0 holds 0
  std::optional<KeyframeRecord> best_rejected;
  std::size_t num_frames = 0;

  double keyframe_ratio() const {
    return num_frames == 0 ? 0.0
                           : static_cast<double>(keyframes.size()) /
                                 static_cast<double>(num_frames);
  }
};

ExtractionResult extract_keyframes(const std::vector<Tensor>& frames,
                                   const OkfemModel& model);

}  // namespace okfe
