#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "okfe/recognizer.hpp"
#include "okfe/summarize.hpp"
#include "okfe/tensor.hpp"
#include "okfe/training.hpp"
#include "okfe/word_vectors.hpp"

namespace okfe {

struct SynthConfig {
  std::size_t num_frames = 64;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_events = 3;
  double noise_level = 0.02;
  double motion = 0.05;  // peak blob speed, pixels per frame
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::size_t kMinEventGap = 4;

struct SynthVideo {
  std::vector<Tensor> frames;
  GroundTruthKeyframes gt;  // first frame of every post-change regime
  Summary reference;        // shots centered on the events, <= 15% of the frames
  FrameFeatureSeq features; // mean color + 4x4 luminance grid per frame
  std::vector<std::size_t> events;
};

// Drifting blobs over a slowly moving textured background. Each event adds a
// new high-contrast blob and recolors the background. Infeasible configs
// (events closer than kMinEventGap apart) throw ConfigError.
SynthVideo synth_video(const SynthConfig& cfg);

// Mean color + 4x4 luminance grid, the descriptor used by synth_video.
FrameFeatureSeq frame_descriptors(const std::vector<Tensor>& frames);

// Video i of a suite uses derive_seed(seed, i).
std::vector<SynthVideo> synth_suite(const SynthConfig& base, std::size_t count);

TrainingSample to_training_sample(const SynthVideo& video);
EvaluationVideo to_evaluation_video(const SynthVideo& video);

struct ClassificationSynthConfig {
  std::size_t num_classes = 5;
  std::size_t samples_per_class = 20;
  std::size_t visual_dim = 8;
  double spread = 0.15;  // within-class std relative to unit-scale centroids
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassificationSet {
  std::vector<LabeledFeature> samples;
  WordVectorTable table;
};

// Gaussian clusters around per-class centroids, plus one random unit-scale
// word vector per class labelled "class<k>".
ClassificationSet synth_classification(const ClassificationSynthConfig& cfg);

}  // namespace okfe
