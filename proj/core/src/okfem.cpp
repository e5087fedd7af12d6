#include "okfe/okfem.hpp"

#include <cmath>
#include <limits>

#include "okfe/error.hpp"
#include "okfe/fts.hpp"
#include "okfe/random.hpp"

namespace okfe {

std::string_view to_string(FirstFramePolicy policy) {
  switch (policy) {
    case FirstFramePolicy::never_keyframe:
      return "never_keyframe";
    case FirstFramePolicy::always_keyframe:
      return "always_keyframe";
  }
  return "never_keyframe";
}

FirstFramePolicy parse_first_frame_policy(std::string_view text) {
  if (text == "never_keyframe" || text == "never") return FirstFramePolicy::never_keyframe;
  if (text == "always_keyframe" || text == "always") return FirstFramePolicy::always_keyframe;
  throw ConfigError("unknown first-frame policy '" + std::string(text) + "'");
}

void OkfemConfig::validate() const {
  if (channels == 0 || height == 0 || width == 0) {
    throw ConfigError("okfem: frame shape " + to_string(frame_shape()) +
                      " has a zero extent");
  }
  if (deform_kernel_size % 2 == 0 || appearance_kernel_size % 2 == 0) {
    throw ConfigError("okfem: kernel sizes must be odd");
  }
  if (height < deform_kernel_size || width < deform_kernel_size ||
      height < appearance_kernel_size || width < appearance_kernel_size) {
    throw ConfigError("okfem: frame " + to_string(frame_shape()) +
                      " smaller than kernel size");
  }
  if (backbone_layers > 0 && backbone_channels == 0) {
    throw ConfigError("okfem: backbone_channels must be > 0");
  }
  if (!std::isfinite(threshold_init)) {
    throw ConfigError("okfem: threshold_init must be finite");
  }
}

template <typename T>
void BasicDeformableConvParams<T>::validate() const {
  for (const auto& layer : backbone) layer.validate();
  offset_predictor.validate();
  response_kernel.validate();
  const std::size_t k = response_kernel.kernel_size();
  if (offset_predictor.out_channels() != 2 * k * k) {
    throw ShapeError("offset predictor must emit 2*k*k = " +
                     std::to_string(2 * k * k) + " channels, has " +
                     std::to_string(offset_predictor.out_channels()));
  }
  if (response_kernel.out_channels() != 1) {
    throw ShapeError("response kernel must have exactly 1 output channel");
  }
  const std::size_t feat = backbone.empty() ? response_kernel.in_channels()
                                            : backbone.back().out_channels();
  if (response_kernel.in_channels() != feat || offset_predictor.in_channels() != feat) {
    throw ShapeError("deformable layer expects " + std::to_string(feat) +
                     " feature channels");
  }
  for (std::size_t i = 1; i < backbone.size(); ++i) {
    if (backbone[i].in_channels() != backbone[i - 1].out_channels()) {
      throw ShapeError("backbone layer " + std::to_string(i) +
                       " input channels do not match previous layer");
    }
  }
}

template <typename T>
void BasicOkfemModel<T>::validate() const {
  config.validate();
  deform.validate();
  if (deform.backbone.size() != config.backbone_layers) {
    throw ShapeError("model has " + std::to_string(deform.backbone.size()) +
                     " backbone layers, config says " +
                     std::to_string(config.backbone_layers));
  }
  const std::size_t first_in = deform.backbone.empty()
                                   ? deform.response_kernel.in_channels()
                                   : deform.backbone.front().in_channels();
  if (first_in != config.channels) {
    throw ShapeError("model expects " + std::to_string(first_in) +
                     " input channels, config says " + std::to_string(config.channels));
  }
  if (deform.kernel_size() != config.deform_kernel_size) {
    throw ShapeError("deformable kernel size does not match config");
  }
  if (threshold.th.shape() != config.map_shape()) {
    throw ShapeError("threshold kernel " + to_string(threshold.th.shape()) +
                     " must match receptive field " + to_string(config.map_shape()));
  }
  appearance.w.validate();
  if (appearance.w.in_channels() != config.channels ||
      appearance.w.out_channels() != config.channels) {
    throw ShapeError("appearance kernel must map " + std::to_string(config.channels) +
                     " channels to themselves");
  }
}

namespace {

template <typename T>
void fill_normal(BasicTensor<T>& t, Rng& rng, double stddev) {
  for (T& v : t.values()) v = static_cast<T>(rng.normal() * stddev);
}

ConvParams random_conv(std::size_t out, std::size_t in, std::size_t k, Rng& rng,
                       double stddev) {
  ConvParams p = ConvParams::zeros(out, in, k);
  fill_normal(p.weight, rng, stddev);
  return p;
}

}  // namespace

OkfemModel make_model(const OkfemConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  OkfemModel m;
  m.config = config;
  std::size_t in = config.channels;
  for (std::size_t i = 0; i < config.backbone_layers; ++i) {
    const double fan_in = static_cast<double>(in * 9);
    m.deform.backbone.push_back(
        random_conv(config.backbone_channels, in, 3, rng, std::sqrt(2.0 / fan_in)));
    in = config.backbone_channels;
  }
  const std::size_t k = config.deform_kernel_size;
  const double fan_in = static_cast<double>(in * k * k);
  m.deform.offset_predictor =
      random_conv(2 * k * k, in, k, rng, 0.1 / std::sqrt(fan_in));
  // Keep the summed response per frame of order one so S(t) starts in the
  // sensitive range of the surrogate gate.
  const double pixels = static_cast<double>(config.height * config.width);
  m.deform.response_kernel =
      random_conv(1, in, k, rng, 1.0 / std::sqrt(fan_in * pixels));
  m.threshold.th = Tensor(config.map_shape());
  m.threshold.th.fill(static_cast<float>(config.threshold_init / pixels));
  const std::size_t ka = config.appearance_kernel_size;
  m.appearance.w = random_conv(config.channels, config.channels, ka, rng,
                               1.0 / std::sqrt(static_cast<double>(config.channels * ka * ka)));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_deformable_inputs(const BasicTensor<T>& features,
                             const BasicTensor<T>& offsets,
                             const BasicConvParams<T>& response) {
  response.validate();
  const std::size_t k = response.kernel_size();
  if (features.rank() != 3 || features.channels() != response.in_channels()) {
    throw ShapeError("deformable_conv features " + to_string(features.shape()) +
                     " incompatible with kernel " + to_string(response.weight.shape()));
  }
  if (response.out_channels() != 1) {
    throw ShapeError("deformable_conv response kernel must have one output channel");
  }
  const Shape expected{2 * k * k, features.height(), features.width()};
  if (offsets.shape() != expected) {
    throw ShapeError("deformable_conv offsets " + to_string(offsets.shape()) +
                     " expected " + to_string(expected));
  }
}

// Kernel-weighted channel sum for one tap; sampling this plane equals the
// weighted sum of per-channel samples because interpolation is linear.
template <typename T>
void combine_tap(const BasicTensor<T>& features, const BasicConvParams<T>& response,
                 std::size_t tap, std::vector<T>& plane) {
  const std::size_t k2 = response.kernel_size() * response.kernel_size();
  const std::size_t n = features.plane_size();
  plane.assign(n, T{0});
  for (std::size_t c = 0; c < features.channels(); ++c) {
    const T w = response.weight[c * k2 + tap];
    if (w == T{0}) continue;
    const T* src = features.plane(c).data();
    for (std::size_t i = 0; i < n; ++i) plane[i] += w * src[i];
  }
}

}  // namespace

template <typename T>
BasicTensor<T> deformable_conv(const BasicTensor<T>& features,
                               const BasicTensor<T>& offsets,
                               const BasicConvParams<T>& response) {
  check_deformable_inputs(features, offsets, response);
  const std::size_t k = response.kernel_size();
  const std::size_t pad = k / 2;
  const std::size_t h = features.height();
  const std::size_t w = features.width();
  const auto hi = static_cast<std::ptrdiff_t>(h);
  const auto wi = static_cast<std::ptrdiff_t>(w);

  BasicTensor<T> out = BasicTensor<T>::chw(1, h, w, response.bias[0]);
  std::vector<T> plane;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      const std::size_t tap = a * k + b;
      combine_tap(features, response, tap, plane);
      const T* dy = offsets.plane(2 * tap).data();
      const T* dx = offsets.plane(2 * tap + 1).data();
      for (std::size_t i = 0; i < h; ++i) {
        const auto br = static_cast<std::ptrdiff_t>(i + a) - static_cast<std::ptrdiff_t>(pad);
        if (br < 0 || br >= hi) continue;  // zero padding
        for (std::size_t j = 0; j < w; ++j) {
          const auto bc = static_cast<std::ptrdiff_t>(j + b) - static_cast<std::ptrdiff_t>(pad);
          if (bc < 0 || bc >= wi) continue;
          const std::size_t idx = i * w + j;
          out[idx] += bilinear_tap<T>(plane, h, w, static_cast<T>(br) + dy[idx],
                                      static_cast<T>(bc) + dx[idx])
                          .value;
        }
      }
    }
  }
  return out;
}

template <typename T>
DeformableConvGrads<T> deformable_conv_backward(const BasicTensor<T>& features,
                                                const BasicTensor<T>& offsets,
                                                const BasicConvParams<T>& response,
                                                const BasicTensor<T>& grad_map) {
  check_deformable_inputs(features, offsets, response);
  const std::size_t k = response.kernel_size();
  const std::size_t k2 = k * k;
  const std::size_t pad = k / 2;
  const std::size_t h = features.height();
  const std::size_t w = features.width();
  const std::size_t n = h * w;
  const auto hi = static_cast<std::ptrdiff_t>(h);
  const auto wi = static_cast<std::ptrdiff_t>(w);
  if (grad_map.shape() != Shape{1, h, w}) {
    throw ShapeError("deformable_conv_backward grad " + to_string(grad_map.shape()));
  }

  DeformableConvGrads<T> g;
  g.features = BasicTensor<T>(features.shape());
  g.offsets = BasicTensor<T>(offsets.shape());
  g.response = BasicConvParams<T>::zeros(1, features.channels(), k);
  g.response.bias[0] = grad_map.sum();

  std::vector<T> plane;
  std::vector<T> grad_plane(n);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      const std::size_t tap = a * k + b;
      combine_tap(features, response, tap, plane);
      std::fill(grad_plane.begin(), grad_plane.end(), T{0});
      const T* dy = offsets.plane(2 * tap).data();
      const T* dx = offsets.plane(2 * tap + 1).data();
      T* gdy = g.offsets.plane(2 * tap).data();
      T* gdx = g.offsets.plane(2 * tap + 1).data();
      for (std::size_t i = 0; i < h; ++i) {
        const auto br = static_cast<std::ptrdiff_t>(i + a) - static_cast<std::ptrdiff_t>(pad);
        if (br < 0 || br >= hi) continue;
        for (std::size_t j = 0; j < w; ++j) {
          const auto bc = static_cast<std::ptrdiff_t>(j + b) - static_cast<std::ptrdiff_t>(pad);
          if (bc < 0 || bc >= wi) continue;
          const std::size_t idx = i * w + j;
          const T upstream = grad_map[idx];
          const T row = static_cast<T>(br) + dy[idx];
          const T col = static_cast<T>(bc) + dx[idx];
          const auto s = bilinear_tap<T>(plane, h, w, row, col);
          gdy[idx] = upstream * s.d_row;
          gdx[idx] = upstream * s.d_col;
          bilinear_scatter<T>(grad_plane, h, w, row, col, upstream);
        }
      }
      for (std::size_t c = 0; c < features.channels(); ++c) {
        const T* src = features.plane(c).data();
        T* dst = g.features.plane(c).data();
        const T wv = response.weight[c * k2 + tap];
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += static_cast<double>(src[i]) * static_cast<double>(grad_plane[i]);
          dst[i] += wv * grad_plane[i];
        }
        g.response.weight[c * k2 + tap] = static_cast<T>(acc);
      }
    }
  }
  return g;
}

template <typename T>
ReceptiveFieldTrace<T> receptive_field_trace(const BasicTensor<T>& frame,
                                             const BasicDeformableConvParams<T>& params) {
  ReceptiveFieldTrace<T> trace;
  trace.activations.reserve(params.backbone.size() + 1);
  trace.activations.push_back(frame);
  for (const auto& layer : params.backbone) {
    BasicTensor<T> act = conv2d(trace.activations.back(), layer);
    relu_inplace(act);
    trace.activations.push_back(std::move(act));
  }
  trace.offsets = conv2d(trace.features(), params.offset_predictor);
  trace.map = deformable_conv(trace.features(), trace.offsets, params.response_kernel);
  return trace;
}

template <typename T>
BasicDeformableConvParams<T> receptive_field_backward(
    const ReceptiveFieldTrace<T>& trace, const BasicDeformableConvParams<T>& params,
    const BasicTensor<T>& grad_map) {
  BasicDeformableConvParams<T> grads;
  auto dg = deformable_conv_backward(trace.features(), trace.offsets,
                                     params.response_kernel, grad_map);
  grads.response_kernel = std::move(dg.response);

  const bool has_backbone = !params.backbone.empty();
  auto og = conv2d_backward(trace.features(), params.offset_predictor, dg.offsets,
                            has_backbone);
  grads.offset_predictor = {std::move(og.weight), std::move(og.bias)};

  grads.backbone.resize(params.backbone.size());
  if (!has_backbone) return grads;

  BasicTensor<T> upstream = std::move(dg.features);
  for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] += og.input[i];
  for (std::size_t l = params.backbone.size(); l-- > 0;) {
    const BasicTensor<T>& out = trace.activations[l + 1];
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      if (!(out[i] > T{0})) upstream[i] = T{0};
    }
    auto cg = conv2d_backward(trace.activations[l], params.backbone[l], upstream, l > 0);
    grads.backbone[l] = {std::move(cg.weight), std::move(cg.bias)};
    upstream = std::move(cg.input);
  }
  return grads;
}

template <typename T>
BasicTensor<T> appearance_map(const BasicTensor<T>& frame,
                              const BasicTensor<T>& receptive_field,
                              const BasicAppearanceParams<T>& params) {
  if (frame.rank() != 3 || receptive_field.shape() != Shape{1, frame.height(), frame.width()}) {
    throw ShapeError("appearance: frame " + to_string(frame.shape()) +
                     " and receptive field " + to_string(receptive_field.shape()) +
                     " disagree spatially");
  }
  BasicTensor<T> input = frame;
  const std::size_t n = frame.plane_size();
  for (std::size_t c = 0; c < frame.channels(); ++c) {
    T* dst = input.plane(c).data();
    for (std::size_t i = 0; i < n; ++i) dst[i] += receptive_field[i];
  }
  return conv2d(input, params.w);
}

#define OKFE_INSTANTIATE_OKFEM(T)                                                   \
  template struct BasicDeformableConvParams<T>;                                     \
  template struct BasicOkfemModel<T>;                                               \
  template BasicTensor<T> deformable_conv(const BasicTensor<T>&,                    \
                                          const BasicTensor<T>&,                    \
                                          const BasicConvParams<T>&);               \
  template DeformableConvGrads<T> deformable_conv_backward(                         \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicConvParams<T>&,      \
      const BasicTensor<T>&);                                                       \
  template ReceptiveFieldTrace<T> receptive_field_trace(                            \
      const BasicTensor<T>&, const BasicDeformableConvParams<T>&);                  \
  template BasicDeformableConvParams<T> receptive_field_backward(                   \
      const ReceptiveFieldTrace<T>&, const BasicDeformableConvParams<T>&,           \
      const BasicTensor<T>&);                                                       \
  template BasicTensor<T> appearance_map(const BasicTensor<T>&,                     \
                                         const BasicTensor<T>&,                     \
                                         const BasicAppearanceParams<T>&);

OKFE_INSTANTIATE_OKFEM(float)
OKFE_INSTANTIATE_OKFEM(double)

#undef OKFE_INSTANTIATE_OKFEM

// ---------------------------------------------------------------------------
// Streaming.

OkfemState init_state(const OkfemConfig& config) {
  config.validate();
  return OkfemState{};
}

ReceptiveFieldMap receptive_field(const Tensor& frame, const DeformableConvParams& params,
                                  std::int64_t frame_index) {
  return {receptive_field_trace(frame, params).map, frame_index};
}

MotionDiffMap motion_diff(const ReceptiveFieldMap& current,
                          const ReceptiveFieldMap& previous) {
  if (current.frame_index != previous.frame_index + 1) {
    throw OnlineContractError("motion_diff: frame " + std::to_string(current.frame_index) +
                              " does not follow frame " +
                              std::to_string(previous.frame_index));
  }
  require_same_shape(current.map, previous.map, "motion_diff");
  Tensor r = current.map;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= previous.map[i];
  return {std::move(r), current.frame_index};
}

FrameScore frame_score(const MotionDiffMap& r, const ThresholdKernel& th) {
  require_same_shape(r.r, th.th, "frame_score");
  Tensor s = r.r;
  for (std::size_t i = 0; i < s.size(); ++i) s[i] -= th.th[i];
  const float total = s.sum();
  return {std::move(s), total, r.frame_index};
}

GateDecision gate(const FrameScore& score) {
  return {score.total > 0.0f, score.frame_index};
}

Tensor appearance(const Tensor& frame, const ReceptiveFieldMap& d_t,
                  const AppearanceParams& params) {
  return appearance_map(frame, d_t.map, params);
}

namespace {

StepOutput advance(OkfemState& state, ReceptiveFieldMap d_t, const Tensor& frame,
                   const OkfemModel& model) {
  Tensor y = appearance(frame, d_t, model.appearance);
  StepOutput out;
  out.frame_index = state.frame_index;

  if (!state.prev_receptive_field) {
    if (model.config.first_frame_policy == FirstFramePolicy::always_keyframe) {
      out.keyframe = KeyframeRecord{state.frame_index, 0.0f,
                                    Tensor(model.config.map_shape()), y, true};
    }
  } else {
    MotionDiffMap r = motion_diff(d_t, *state.prev_receptive_field);
    const FrameScore s = frame_score(r, model.threshold);
    out.score = s.total;
    Tensor k_fa = y;
    for (std::size_t i = 0; i < k_fa.size(); ++i) k_fa[i] += (*state.prev_appearance)[i];
    KeyframeRecord record{state.frame_index, s.total, std::move(r.r), std::move(k_fa), false};
    if (gate(s).selected) {
      out.keyframe = std::move(record);
    } else {
      out.rejected = std::move(record);
    }
  }

  state.prev_receptive_field = std::move(d_t);
  state.prev_appearance = std::move(y);
  ++state.frame_index;
  return out;
}

}  // namespace

StepOutput step(OkfemState& state, const Tensor& frame, const OkfemModel& model) {
  if (frame.shape() != model.config.frame_shape()) {
    throw ShapeError("step: frame " + to_string(frame.shape()) + " expected " +
                     to_string(model.config.frame_shape()));
  }
  return advance(state, receptive_field(frame, model.deform, state.frame_index), frame,
                 model);
}

StepOutput step_with_receptive_field(OkfemState& state, const Tensor& d_map,
                                     const Tensor* frame, const OkfemModel& model) {
  if (d_map.shape() != model.config.map_shape()) {
    throw ShapeError("step: receptive field " + to_string(d_map.shape()) + " expected " +
                     to_string(model.config.map_shape()));
  }
  if (frame != nullptr && frame->shape() != model.config.frame_shape()) {
    throw ShapeError("step: frame " + to_string(frame->shape()) + " expected " +
                     to_string(model.config.frame_shape()));
  }
  const Tensor zero_frame = frame == nullptr ? Tensor(model.config.frame_shape()) : Tensor();
  return advance(state, {d_map, state.frame_index}, frame ? *frame : zero_frame, model);
}

std::vector<std::uint8_t> serialize_state(const OkfemState& state) {
  std::vector<std::uint8_t> out{'O', 'K', 'S', '1'};
  const auto index = static_cast<std::uint64_t>(state.frame_index);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(index >> (8 * i)));
  const std::uint8_t flags = (state.prev_receptive_field ? 1 : 0) |
                             (state.prev_appearance ? 2 : 0);
  out.push_back(flags);
  if (state.prev_receptive_field) {
    const auto blob = write_fts(state.prev_receptive_field->map);
    out.insert(out.end(), blob.begin(), blob.end());
  }
  if (state.prev_appearance) {
    const auto blob = write_fts(*state.prev_appearance);
    out.insert(out.end(), blob.begin(), blob.end());
  }
  return out;
}

ExtractionResult extract_keyframes(const std::vector<Tensor>& frames,
                                   const OkfemModel& model) {
  ExtractionResult result;
  result.num_frames = frames.size();
  result.scores.reserve(frames.size());
  OkfemState state = init_state(model.config);
  for (const Tensor& frame : frames) {
    StepOutput out = step(state, frame, model);
    result.scores.push_back(out.score.value_or(0.0f));
    if (out.keyframe) result.keyframes.push_back(std::move(*out.keyframe));
    if (out.rejected &&
        (!result.best_rejected || out.rejected->score > result.best_rejected->score)) {
      result.best_rejected = std::move(out.rejected);
    }
  }
  return result;
}

}  // namespace okfe
