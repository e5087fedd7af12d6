#include "okfe/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

#include <nlohmann/json.hpp>

#include "okfe/error.hpp"
#include "okfe/parallel.hpp"
#include "okfe/random.hpp"

namespace okfe {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
  if (!(ste_temperature > 0.0)) throw ConfigError("ste_temperature must be > 0");
  if (!(score_scale > 0.0)) throw ConfigError("score_scale must be > 0");
}

void GroundTruthKeyframes::validate() const {
  for (std::size_t i = 0; i < keyframe_indices.size(); ++i) {
    if (keyframe_indices[i] >= num_frames) {
      throw ValidationError("ground-truth keyframe " + std::to_string(keyframe_indices[i]) +
                            " outside " + std::to_string(num_frames) + " frames");
    }
    if (i > 0 && keyframe_indices[i] <= keyframe_indices[i - 1]) {
      throw ValidationError("ground-truth keyframes must be sorted and unique");
    }
  }
}

bool GroundTruthKeyframes::contains(std::size_t frame) const {
  return std::binary_search(keyframe_indices.begin(), keyframe_indices.end(), frame);
}

double surrogate_gate_slope(double score, double temperature) {
  const double s = 1.0 / (1.0 + std::exp(-score / temperature));
  return s * (1.0 - s) / temperature;
}

FrameObjective frame_objective(double score, bool in_ground_truth, const LossConfig& config,
                               GateMode mode) {
  // y = 0 for ground-truth keyframes, 1 otherwise.
  const double y = in_ground_truth ? 0.0 : 1.0;
  const double soft = 1.0 / (1.0 + std::exp(-score / config.ste_temperature));
  const double slope = soft * (1.0 - soft) / config.ste_temperature;
  const double z = mode == GateMode::smooth ? soft : (score > 0.0 ? 1.0 : 0.0);
  const double reward = std::tanh(score / config.score_scale);
  const double reward_slope = (1.0 - reward * reward) / config.score_scale;

  FrameObjective out;
  const double err = (1.0 - y) * (1.0 - z) + y * z;
  out.loss = config.alpha * err - config.beta * z * reward;
  out.d_score = config.alpha * (2.0 * y - 1.0) * slope -
                config.beta * (z * reward_slope + reward * slope);
  return out;
}

double selection_loss(std::span<const double> scores, std::span<const GateDecision> gates,
                      const GroundTruthKeyframes& gt, const LossConfig& config) {
  config.validate();
  if (scores.empty()) throw ConfigError("selection_loss: empty sequence");
  if (scores.size() != gates.size() || scores.size() != gt.num_frames) {
    throw ShapeError("selection_loss: " + std::to_string(scores.size()) + " scores, " +
                     std::to_string(gates.size()) + " gates, " +
                     std::to_string(gt.num_frames) + " ground-truth frames");
  }
  double errors = 0.0;
  double reward = 0.0;
  for (std::size_t f = 0; f < scores.size(); ++f) {
    const bool selected = gates[f].selected;
    const bool keyframe = gt.contains(f);
    if (selected != keyframe) errors += 1.0;
    if (selected) reward += std::tanh(scores[f] / config.score_scale);
  }
  return config.alpha * errors - config.beta * reward;
}

namespace {

template <typename T>
void add_into(BasicConvParams<T>& into, const BasicConvParams<T>& g) {
  for (std::size_t i = 0; i < into.weight.size(); ++i) into.weight[i] += g.weight[i];
  for (std::size_t i = 0; i < into.bias.size(); ++i) into.bias[i] += g.bias[i];
}

template <typename T>
BasicOkfemModel<T> zero_like(const BasicOkfemModel<T>& model) {
  BasicOkfemModel<T> z = model;
  z.for_each_parameter([](const std::string&, auto span) {
    std::fill(span.begin(), span.end(), T{0});
  });
  return z;
}

template <typename T>
struct ForwardPass {
  std::vector<ReceptiveFieldTrace<T>> traces;
  std::vector<double> scores;
  std::vector<GateDecision> gates;
  std::vector<double> d_scores;  // dL/dS(t), already divided by F
  double loss = 0.0;
};

template <typename T>
ForwardPass<T> run_forward(const BasicOkfemModel<T>& model,
                           const std::vector<BasicTensor<T>>& sequence,
                           const GroundTruthKeyframes& gt, const LossConfig& config,
                           GateMode mode, std::size_t jobs) {
  config.validate();
  model.validate();
  const std::size_t n = sequence.size();
  if (n < 2) throw ConfigError("loss_gradients: sequence needs at least 2 frames");
  if (gt.num_frames != n) {
    throw ShapeError("ground truth covers " + std::to_string(gt.num_frames) +
                     " frames, sequence has " + std::to_string(n));
  }
  gt.validate();

  for (const auto& frame : sequence) {
    if (frame.shape() != model.config.frame_shape()) {
      throw ShapeError("training frame " + to_string(frame.shape()) + " expected " +
                       to_string(model.config.frame_shape()));
    }
  }
  ForwardPass<T> fp;
  fp.traces.resize(n);
  parallel_for(n, jobs, [&](std::size_t t) {
    fp.traces[t] = receptive_field_trace(sequence[t], model.deform);
  });

  fp.scores.assign(n, 0.0);
  fp.d_scores.assign(n, 0.0);
  fp.gates.resize(n);

  // The first frame has no motion evidence; its gate is fixed by policy and
  // contributes only a constant selection error.
  const bool first_selected =
      model.config.first_frame_policy == FirstFramePolicy::always_keyframe;
  fp.gates[0] = {first_selected, 0};
  double total = config.alpha * ((first_selected != gt.contains(0)) ? 1.0 : 0.0);

  const auto& th = model.threshold.th;
  for (std::size_t t = 1; t < n; ++t) {
    const auto& cur = fp.traces[t].map;
    const auto& prev = fp.traces[t - 1].map;
    double s = 0.0;
    for (std::size_t p = 0; p < cur.size(); ++p) {
      const T r = cur[p] - prev[p];
      s += static_cast<double>(static_cast<T>(r - th[p]));
    }
    fp.scores[t] = s;
    fp.gates[t] = {s > 0.0, static_cast<std::int64_t>(t)};
    const FrameObjective fo = frame_objective(s, gt.contains(t), config, mode);
    total += fo.loss;
    fp.d_scores[t] = fo.d_score / static_cast<double>(n);
  }
  fp.loss = total / static_cast<double>(n);
  if (!std::isfinite(fp.loss)) throw NumericalError("loss is not finite");
  return fp;
}

}  // namespace

template <typename T>
double sequence_loss(const BasicOkfemModel<T>& model,
                     const std::vector<BasicTensor<T>>& sequence,
                     const GroundTruthKeyframes& gt, const LossConfig& config,
                     GateMode mode, std::size_t jobs) {
  return run_forward(model, sequence, gt, config, mode, jobs).loss;
}

template <typename T>
SequenceGradients<T> loss_gradients(const BasicOkfemModel<T>& model,
                                    const std::vector<BasicTensor<T>>& sequence,
                                    const GroundTruthKeyframes& gt, const LossConfig& config,
                                    GateMode mode, std::size_t jobs) {
  ForwardPass<T> fp = run_forward(model, sequence, gt, config, mode, jobs);
  const std::size_t n = sequence.size();

  SequenceGradients<T> out;
  out.loss = fp.loss;
  out.gradients = zero_like(model);

  // S(t) = sum(D(t) - D(t-1) - TH): every TH pixel receives -dL/dS(t) and
  // D(t) receives the uniform map dL/dS(t) - dL/dS(t+1).
  double th_grad = 0.0;
  for (std::size_t t = 1; t < n; ++t) th_grad -= fp.d_scores[t];
  out.gradients.threshold.th.fill(static_cast<T>(th_grad));

  // Frames are independent given dL/dS; their contributions are summed in
  // frame order so the result does not depend on the thread count.
  std::vector<std::optional<BasicDeformableConvParams<T>>> per_frame(n);
  parallel_for(n, jobs, [&](std::size_t t) {
    const double here = t >= 1 ? fp.d_scores[t] : 0.0;
    const double next = t + 1 < n ? fp.d_scores[t + 1] : 0.0;
    const double g = here - next;
    if (g == 0.0) return;
    BasicTensor<T> grad_map(model.config.map_shape());
    grad_map.fill(static_cast<T>(g));
    per_frame[t] = receptive_field_backward(fp.traces[t], model.deform, grad_map);
  });
  for (const auto& frame_grads : per_frame) {
    if (!frame_grads) continue;
    for (std::size_t l = 0; l < frame_grads->backbone.size(); ++l) {
      add_into(out.gradients.deform.backbone[l], frame_grads->backbone[l]);
    }
    add_into(out.gradients.deform.offset_predictor, frame_grads->offset_predictor);
    add_into(out.gradients.deform.response_kernel, frame_grads->response_kernel);
  }

  out.scores = std::move(fp.scores);
  out.gates = std::move(fp.gates);
  bool finite = true;
  out.gradients.for_each_parameter([&](const std::string&, auto span) {
    for (T v : span) finite = finite && std::isfinite(v);
  });
  if (!finite) throw NumericalError("gradient is not finite");
  return out;
}

template SequenceGradients<float> loss_gradients(const BasicOkfemModel<float>&,
                                                 const std::vector<BasicTensor<float>>&,
                                                 const GroundTruthKeyframes&,
                                                 const LossConfig&, GateMode, std::size_t);
template SequenceGradients<double> loss_gradients(const BasicOkfemModel<double>&,
                                                  const std::vector<BasicTensor<double>>&,
                                                  const GroundTruthKeyframes&,
                                                  const LossConfig&, GateMode, std::size_t);
template double sequence_loss(const BasicOkfemModel<float>&,
                              const std::vector<BasicTensor<float>>&,
                              const GroundTruthKeyframes&, const LossConfig&, GateMode, std::size_t);
template double sequence_loss(const BasicOkfemModel<double>&,
                              const std::vector<BasicTensor<double>>&,
                              const GroundTruthKeyframes&, const LossConfig&, GateMode, std::size_t);

// ---------------------------------------------------------------------------

TrainResult train(OkfemModel model, const std::vector<TrainingSample>& dataset,
                  const OptimizerConfig& opt, const LossConfig& loss, std::uint64_t seed,
                  const EpochCallback& on_epoch, std::size_t jobs) {
  opt.validate();
  loss.validate();
  model.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");

  std::vector<float> velocity(model.parameter_count(), 0.0f);
  TrainResult result;
  std::vector<std::size_t> order(dataset.size());

  for (int epoch = 0; epoch < opt.total_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t scored = 0;
    std::size_t selected = 0;
    for (std::size_t idx : order) {
      const TrainingSample& sample = dataset[idx];
      SequenceGradients<float> g;
      try {
        g = loss_gradients(model, sample.frames, sample.gt, loss,
                             GateMode::straight_through, jobs);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             ", sample " + std::to_string(idx) + ": " + e.what());
      }
      loss_sum += g.loss;
      for (std::size_t t = 1; t < g.gates.size(); ++t) {
        ++scored;
        selected += g.gates[t].selected ? 1 : 0;
      }

      std::vector<std::span<float>> grads;
      g.gradients.for_each_parameter(
          [&](const std::string&, std::span<float> span) { grads.push_back(span); });
      std::size_t group = 0;
      std::size_t offset = 0;
      model.for_each_parameter([&](const std::string&, std::span<float> params) {
        sgd_momentum_step(params, std::span(velocity).subspan(offset, params.size()),
                          grads[group], opt, epoch);
        offset += params.size();
        ++group;
      });
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = loss_sum / static_cast<double>(dataset.size());
    m.keyframe_ratio =
        scored == 0 ? 0.0 : static_cast<double>(selected) / static_cast<double>(scored);
    if (!std::isfinite(m.mean_loss)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    }
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  result.model = std::move(model);
  return result;
}

double keyframe_f1(std::span<const std::size_t> predicted, const GroundTruthKeyframes& gt) {
  if (predicted.empty() && gt.keyframe_indices.empty()) return 1.0;
  if (predicted.empty() || gt.keyframe_indices.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t f : predicted) hits += gt.contains(f) ? 1 : 0;
  const double p = static_cast<double>(hits) / static_cast<double>(predicted.size());
  const double r = static_cast<double>(hits) / static_cast<double>(gt.keyframe_indices.size());
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

// ---------------------------------------------------------------------------

VideoEvaluation evaluate_video(const OkfemModel& model, const EvaluationVideo& video,
                               const SummaryProtocol& protocol) {
  const ExtractionResult ex = extract_keyframes(video.frames, model);
  VideoEvaluation ev;
  for (const auto& rec : ex.keyframes) {
    ev.keyframes.push_back(static_cast<std::size_t>(rec.frame_index));
  }
  ev.keyframe_ratio = ex.keyframe_ratio();
  const std::size_t n = video.features.num_frames();
  if (n != video.frames.size()) {
    throw ShapeError("evaluation video has " + std::to_string(video.frames.size()) +
                     " frames but " + std::to_string(n) + " feature rows");
  }
  ev.segments = kts_segment(video.features, std::clamp<std::size_t>(protocol.max_segments, 1, n),
                            protocol.kts_penalty);
  ev.summary = keyframes_to_keyshots(ev.segments, ev.keyframes, protocol.budget);
  if (!video.references.empty()) {
    ev.f_score = f_score(ev.summary, video.references, protocol.aggregation);
  }
  return ev;
}

std::vector<std::pair<double, double>> default_alpha_beta_grid() {
  return {{0.2, 0.8},   {0.4, 0.6},   {0.5, 0.5},   {0.5, 0.45},  {0.55, 0.45},
          {0.6, 0.42},  {0.6, 0.4},   {0.62, 0.42}, {0.64, 0.42}, {0.8, 0.2}};
}

std::vector<SweepResult> sweep_alpha_beta(const std::vector<std::pair<double, double>>& grid,
                                          const std::vector<TrainingSample>& train_set,
                                          const std::vector<EvaluationVideo>& eval_set,
                                          const SweepSetup& setup) {
  if (grid.empty()) throw ConfigError("sweep: grid is empty");
  if (eval_set.empty()) throw ConfigError("sweep: evaluation set is empty");
  const OkfemModel initial = make_model(setup.model_config, setup.seed);

  std::vector<SweepResult> results(grid.size());
  auto run_point = [&](std::size_t i) {
    LossConfig loss = setup.loss;
    loss.alpha = grid[i].first;
    loss.beta = grid[i].second;
    const TrainResult trained = train(initial, train_set, setup.opt, loss, setup.seed);
    SweepResult r;
    r.alpha = loss.alpha;
    r.beta = loss.beta;
    for (const auto& video : eval_set) {
      const VideoEvaluation ev = evaluate_video(trained.model, video, setup.protocol);
      r.per_video_scores.push_back(ev.f_score);
      r.f_score += ev.f_score;
      r.mean_keyframe_ratio += ev.keyframe_ratio;
    }
    r.f_score /= static_cast<double>(eval_set.size());
    r.mean_keyframe_ratio /= static_cast<double>(eval_set.size());
    results[i] = std::move(r);
  };

  parallel_for(grid.size(), setup.jobs, run_point);
  return results;
}

std::string sweep_table_tsv(const std::vector<SweepResult>& results) {
  std::string out = "alpha\tbeta\tf_score\tkeyframe_ratio\n";
  char line[128];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%.2f\t%.2f\t%.4f\t%.4f\n", r.alpha, r.beta, r.f_score,
                  r.mean_keyframe_ratio);
    out += line;
  }
  return out;
}

std::string sweep_table_json(const std::vector<SweepResult>& results) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json row;
    row["alpha"] = r.alpha;
    row["beta"] = r.beta;
    row["f_score"] = r.f_score;
    row["keyframe_ratio"] = r.mean_keyframe_ratio;
    row["per_video_scores"] = r.per_video_scores;
    arr.push_back(std::move(row));
  }
  return arr.dump(2) + "\n";
}

}  // namespace okfe
