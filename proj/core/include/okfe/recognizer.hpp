#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "okfe/okfem.hpp"
#include "okfe/optim.hpp"
#include "okfe/word_vectors.hpp"

namespace okfe {

// Pooled keyframe statistics: per channel mean and standard deviation of
// k_fm (1 channel) then k_fa (C channels), averaged over records.
struct VisualFeature {
  std::vector<float> values;
};

inline std::size_t visual_dim(std::size_t frame_channels) { return 2 * (1 + frame_channels); }

VisualFeature pool_keyframes(std::span<const KeyframeRecord> records);

// Fully connected layer, weight stored [out, in] row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  static DenseLayer zeros(std::size_t in, std::size_t out);
  std::vector<float> forward(std::span<const float> x) const;
  void validate() const;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

inline constexpr std::size_t kPluginHidden = 450;

struct PluginParams {
  DenseLayer fc1;   // d_vis + 300 -> 450
  DenseLayer fc2;   // 450 -> 300
  DenseLayer head;  // d_vis + 300 -> num_classes

  std::size_t visual_dim() const { return head.in - kWordVectorDim; }
  std::size_t num_classes() const { return head.out; }
  void validate() const;

  static PluginParams zeros(std::size_t visual_dim, std::size_t num_classes);

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    for (DenseLayer* l : {&fc1, &fc2, &head}) {
      fn(std::span<float>(l->weight));
      fn(std::span<float>(l->bias));
    }
  }
  template <typename Fn>
  void for_each_parameter(Fn&& fn) const {
    for (const DenseLayer* l : {&fc1, &fc2, &head}) {
      fn(std::span<const float>(l->weight));
      fn(std::span<const float>(l->bias));
    }
  }

  friend bool operator==(const PluginParams&, const PluginParams&) = default;
};

// Small uniform initialization scaled by fan-in.
PluginParams make_plugin(std::size_t visual_dim, std::size_t num_classes, std::uint64_t seed);

// FNV-1a over the raw parameter bytes.
std::uint64_t parameter_checksum(const PluginParams& params);

struct PluginOutput {
  std::vector<float> probabilities;
  std::vector<float> refined;  // 300 entries, fed back as the next w2v
  std::size_t label = 0;       // argmax, lowest index on ties
};

PluginOutput plugin_forward(const VisualFeature& vis, std::span<const float> w2v,
                            const PluginParams& params);

// Cross-entropy against `target` and its parameter gradients. The w2v input
// is treated as data.
struct PluginGradients {
  double loss = 0.0;
  PluginParams grads;
  PluginOutput output;
};

PluginGradients plugin_gradients(const VisualFeature& vis, std::span<const float> w2v,
                                 std::size_t target, const PluginParams& params);

struct IttsConfig {
  int max_iterations = 10;
  int stability_run = 3;

  void validate() const;
};

struct LabeledFeature {
  VisualFeature feature;
  std::size_t label = 0;
};

struct IttsTrainLogEntry {
  int epoch = 0;
  std::size_t sample = 0;
  int iterations = 0;
  bool converged = false;  // stopped by the stability rule
  std::vector<std::size_t> labels;
};

struct IttsTrainResult {
  PluginParams params;
  std::vector<IttsTrainLogEntry> log;

  // Share of the last epoch's samples that stopped by the stability rule.
  double converged_fraction() const;
};

// Per sample: forward with the working w2v, cross-entropy step, replace the
// working copy with the refined vector; stop once the last stability_run
// labels agree or after max_iterations. The table itself is never modified.
IttsTrainResult itts_train(PluginParams params, const std::vector<LabeledFeature>& dataset,
                           const WordVectorTable& table, const IttsConfig& cfg,
                           const OptimizerConfig& opt, std::uint64_t seed);

struct ClassRun {
  std::size_t label = 0;     // L_c
  float probability = 0.0f;  // P_c, at the final iteration
  int iterations = 0;
  bool converged = false;
};

struct PredictionRecord {
  std::vector<ClassRun> runs;  // one per class vector
  std::size_t label = 0;       // L_kf
  bool converged = false;      // the run behind L_kf stopped by the stability rule
};

PredictionRecord itts_test(const PluginParams& params, const VisualFeature& vis,
                           const WordVectorTable& table, const IttsConfig& cfg);

// Same combination rule with one forward pass per class vector.
PredictionRecord single_pass_test(const PluginParams& params, const VisualFeature& vis,
                                  const WordVectorTable& table);

struct RecognitionReport {
  double accuracy = 0.0;
  std::vector<PredictionRecord> records;
};

RecognitionReport evaluate_recognizer(const PluginParams& params,
                                      const std::vector<LabeledFeature>& dataset,
                                      const WordVectorTable& table, const IttsConfig& cfg,
                                      bool iterative = true);

}  // namespace okfe
