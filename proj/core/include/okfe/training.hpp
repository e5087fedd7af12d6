#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "okfe/okfem.hpp"
#include "okfe/optim.hpp"
#include "okfe/summarize.hpp"

namespace okfe {

struct LossConfig {
  double alpha = 0.6;
  double beta = 0.42;
  double ste_temperature = 1.0;  // tau: surrogate gate is sigmoid(S / tau)
  double score_scale = 1.0;      // sigma: score reward is tanh(S / sigma)

  void validate() const;
};

struct GroundTruthKeyframes {
  std::vector<std::size_t> keyframe_indices;  // sorted, unique
  std::size_t num_frames = 0;

  void validate() const;
  bool contains(std::size_t frame) const;
  friend bool operator==(const GroundTruthKeyframes&, const GroundTruthKeyframes&) = default;
};

// How the gate enters the objective.
//   straight_through: forward uses the hard gate, backward differentiates
//                     through sigmoid(S / tau) in its place.
//   smooth:           the gate is sigmoid(S / tau) in both passes; this is the
//                     fully differentiable surrogate used for gradient checks.
enum class GateMode { straight_through, smooth };

// alpha * sum_f err(f) - beta * sum_{f: Z(f) = 1} tanh(S(f) / sigma), where
// err(f) counts misses (f in Y, Z = 0) and false positives (f not in Y, Z = 1).
// Not normalized by the frame count.
double selection_loss(std::span<const double> scores, std::span<const GateDecision> gates,
                      const GroundTruthKeyframes& gt, const LossConfig& config);

// Per-frame contribution to the objective and its derivative w.r.t. S(f).
struct FrameObjective {
  double loss = 0.0;
  double d_score = 0.0;
};

FrameObjective frame_objective(double score, bool in_ground_truth, const LossConfig& config,
                               GateMode mode);

// Derivative of the surrogate gate sigmoid(S / tau) w.r.t. S.
double surrogate_gate_slope(double score, double temperature);

template <typename T>
struct SequenceGradients {
  double loss = 0.0;                 // normalized by the frame count
  std::vector<double> scores;        // S(t); entry 0 is 0 (no previous frame)
  std::vector<GateDecision> gates;   // hard gates
  BasicOkfemModel<T> gradients;      // same layout as the model
};

// Objective over one sequence (divided by F) and its parameter gradients.
// Gradients reach TH through S = sum(r - TH) and the receptive-field stack
// through r(t) = D(t) - D(t-1). The appearance kernel W does not influence S,
// so its gradient is identically zero.
template <typename T>
SequenceGradients<T> loss_gradients(const BasicOkfemModel<T>& model,
                                    const std::vector<BasicTensor<T>>& sequence,
                                    const GroundTruthKeyframes& gt, const LossConfig& config,
                                    GateMode mode = GateMode::straight_through,
                                    std::size_t jobs = 1);

// Forward-only version of the same objective.
template <typename T>
double sequence_loss(const BasicOkfemModel<T>& model,
                     const std::vector<BasicTensor<T>>& sequence,
                     const GroundTruthKeyframes& gt, const LossConfig& config,
                     GateMode mode = GateMode::straight_through,
                     std::size_t jobs = 1);

struct TrainingSample {
  std::vector<Tensor> frames;
  GroundTruthKeyframes gt;
};

struct EpochMetrics {
  int epoch = 0;
  double mean_loss = 0.0;
  double keyframe_ratio = 0.0;  // selected / scored frames during the epoch
};

struct TrainResult {
  OkfemModel model;
  std::vector<EpochMetrics> epochs;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Epoch loop: visits the dataset in a seeded order and applies one momentum
// SGD step per sequence. Throws NumericalError with the epoch and sample
// index when the loss stops being finite. `jobs` threads share the per-frame
// work of each step; the result is identical for any thread count.
TrainResult train(OkfemModel model, const std::vector<TrainingSample>& dataset,
                  const OptimizerConfig& opt, const LossConfig& loss, std::uint64_t seed,
                  const EpochCallback& on_epoch = {}, std::size_t jobs = 1);

// Frame-level keyframe detection F1 against the ground truth (exact frames).
double keyframe_f1(std::span<const std::size_t> predicted, const GroundTruthKeyframes& gt);

// ---------------------------------------------------------------------------
// Key-shot evaluation shared by the sweep, the CLI and the acceptance suite.

struct EvaluationVideo {
  std::vector<Tensor> frames;
  GroundTruthKeyframes gt;
  std::vector<Summary> references;
  FrameFeatureSeq features;
};

struct SummaryProtocol {
  double budget = kDefaultBudget;
  std::size_t max_segments = 24;  // clamped to the frame count
  double kts_penalty = 0.01;
  Aggregation aggregation = Aggregation::mean;
};

struct VideoEvaluation {
  std::vector<std::size_t> keyframes;
  Segments segments;
  Summary summary;
  double f_score = 0.0;
  double keyframe_ratio = 0.0;
};

VideoEvaluation evaluate_video(const OkfemModel& model, const EvaluationVideo& video,
                               const SummaryProtocol& protocol);

struct SweepResult {
  double alpha = 0.0;
  double beta = 0.0;
  double f_score = 0.0;             // mean over evaluation videos
  double mean_keyframe_ratio = 0.0;
  std::vector<double> per_video_scores;
};

// The ten (alpha, beta) pairs of the default sweep, in sweep order.
std::vector<std::pair<double, double>> default_alpha_beta_grid();

struct SweepSetup {
  OkfemConfig model_config;
  OptimizerConfig opt;
  LossConfig loss;  // alpha/beta overridden per grid point
  SummaryProtocol protocol;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

// Independent training run per grid point from the same initial model; the
// result order follows the grid.
std::vector<SweepResult> sweep_alpha_beta(const std::vector<std::pair<double, double>>& grid,
                                          const std::vector<TrainingSample>& train_set,
                                          const std::vector<EvaluationVideo>& eval_set,
                                          const SweepSetup& setup);

// Tab-separated table and JSON array (alpha, beta, f_score, keyframe_ratio).
std::string sweep_table_tsv(const std::vector<SweepResult>& results);
std::string sweep_table_json(const std::vector<SweepResult>& results);

}  // namespace okfe
