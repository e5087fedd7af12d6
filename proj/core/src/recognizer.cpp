#include "okfe/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <optional>

#include "okfe/error.hpp"
#include "okfe/random.hpp"

namespace okfe {

namespace {

void channel_stats(const Tensor& t, std::vector<double>& out) {
  const std::size_t plane = t.plane_size();
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const float* p = t.data() + c * plane;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = p[i] - mean;
      var += d * d;
    }
    out.push_back(mean);
    out.push_back(std::sqrt(var / static_cast<double>(plane)));
  }
}

std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<float> concat(std::span<const float> a, std::span<const float> b) {
  std::vector<float> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool stable(const std::vector<std::size_t>& labels, int run) {
  const auto n = static_cast<std::size_t>(run);
  if (labels.size() < n) return false;
  return std::all_of(labels.end() - static_cast<std::ptrdiff_t>(n), labels.end(),
                     [&](std::size_t l) { return l == labels.back(); });
}

void check_table(const WordVectorTable& table, std::size_t num_classes) {
  if (table.size() != num_classes) {
    throw ValidationError("word-vector table has " + std::to_string(table.size()) +
                          " classes, classifier expects " + std::to_string(num_classes));
  }
}

PredictionRecord combine(std::vector<ClassRun> runs) {
  PredictionRecord rec;
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < runs.size(); ++c) {
    if (runs[c].label != c) continue;
    if (!best || runs[c].probability > runs[*best].probability) best = c;
  }
  if (!best) {
    for (std::size_t c = 0; c < runs.size(); ++c) {
      if (!best || runs[c].probability > runs[*best].probability) best = c;
    }
  }
  rec.label = runs[*best].label;
  rec.converged = runs[*best].converged;
  rec.runs = std::move(runs);
  return rec;
}

}  // namespace

VisualFeature pool_keyframes(std::span<const KeyframeRecord> records) {
  if (records.empty()) throw ValidationError("pool_keyframes: no keyframe records");
  std::vector<double> sum;
  for (const auto& rec : records) {
    std::vector<double> stats;
    channel_stats(rec.k_fm, stats);
    channel_stats(rec.k_fa, stats);
    if (sum.empty()) sum.assign(stats.size(), 0.0);
    if (stats.size() != sum.size()) {
      throw ShapeError("pool_keyframes: records have different channel counts");
    }
    for (std::size_t i = 0; i < stats.size(); ++i) sum[i] += stats[i];
  }
  VisualFeature out;
  for (double v : sum) out.values.push_back(static_cast<float>(v / records.size()));
  return out;
}

DenseLayer DenseLayer::zeros(std::size_t in, std::size_t out) {
  return {in, out, std::vector<float>(in * out, 0.0f), std::vector<float>(out, 0.0f)};
}

void DenseLayer::validate() const {
  if (weight.size() != in * out || bias.size() != out) {
    throw ShapeError("dense layer " + std::to_string(in) + "->" + std::to_string(out) +
                     " has " + std::to_string(weight.size()) + " weights and " +
                     std::to_string(bias.size()) + " biases");
  }
}

std::vector<float> DenseLayer::forward(std::span<const float> x) const {
  if (x.size() != in) {
    throw ShapeError("dense layer expects " + std::to_string(in) + " inputs, got " +
                     std::to_string(x.size()));
  }
  std::vector<float> y(bias);
  for (std::size_t o = 0; o < out; ++o) {
    const float* w = weight.data() + o * in;
    float acc = 0.0f;
    for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
    y[o] += acc;
  }
  return y;
}

void PluginParams::validate() const {
  fc1.validate();
  fc2.validate();
  head.validate();
  if (fc1.out != kPluginHidden || fc2.in != kPluginHidden || fc2.out != kWordVectorDim ||
      head.in < kWordVectorDim || fc1.in != head.in || head.out == 0) {
    throw ShapeError("plugin layers must be (d+300)->450->300 and (d+300)->classes");
  }
}

PluginParams PluginParams::zeros(std::size_t visual_dim, std::size_t num_classes) {
  const std::size_t in = visual_dim + kWordVectorDim;
  return {DenseLayer::zeros(in, kPluginHidden), DenseLayer::zeros(kPluginHidden, kWordVectorDim),
          DenseLayer::zeros(in, num_classes)};
}

PluginParams make_plugin(std::size_t visual_dim, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) throw ConfigError("classifier needs at least one class");
  PluginParams p = PluginParams::zeros(visual_dim, num_classes);
  Rng rng(seed);
  for (DenseLayer* l : {&p.fc1, &p.fc2, &p.head}) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l->in));
    for (float& w : l->weight) w = static_cast<float>(rng.uniform(-bound, bound));
  }
  return p;
}

std::uint64_t parameter_checksum(const PluginParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  params.for_each_parameter([&](std::span<const float> span) {
    for (float v : span) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  });
  return h;
}

namespace {

struct ForwardCache {
  std::vector<float> x1;
  std::vector<float> pre;
  std::vector<float> hidden;
  std::vector<float> x2;
  PluginOutput out;
};

ForwardCache forward_cached(const VisualFeature& vis, std::span<const float> w2v,
                            const PluginParams& params) {
  if (vis.values.size() != params.visual_dim()) {
    throw ShapeError("visual feature has " + std::to_string(vis.values.size()) +
                     " values, classifier expects " + std::to_string(params.visual_dim()));
  }
  if (w2v.size() != kWordVectorDim) {
    throw ShapeError("word vector has " + std::to_string(w2v.size()) + " values, expected 300");
  }
  ForwardCache c;
  c.x1 = concat(vis.values, w2v);
  c.pre = params.fc1.forward(c.x1);
  c.hidden = c.pre;
  for (float& v : c.hidden) v = std::max(v, 0.0f);
  c.out.refined = params.fc2.forward(c.hidden);
  c.x2 = concat(vis.values, c.out.refined);
  std::vector<float> logits = params.head.forward(c.x2);
  const float top = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (float& l : logits) {
    l = std::exp(l - top);
    z += l;
  }
  for (float& l : logits) l = static_cast<float>(l / z);
  c.out.probabilities = std::move(logits);
  c.out.label = argmax(c.out.probabilities);
  return c;
}

void outer_add(DenseLayer& g, std::span<const float> d_out, std::span<const float> x) {
  for (std::size_t o = 0; o < g.out; ++o) {
    g.bias[o] += d_out[o];
    if (d_out[o] == 0.0f) continue;
    float* w = g.weight.data() + o * g.in;
    for (std::size_t i = 0; i < g.in; ++i) w[i] += d_out[o] * x[i];
  }
}

std::vector<float> transpose_apply(const DenseLayer& l, std::span<const float> d_out) {
  std::vector<float> d_in(l.in, 0.0f);
  for (std::size_t o = 0; o < l.out; ++o) {
    if (d_out[o] == 0.0f) continue;
    const float* w = l.weight.data() + o * l.in;
    for (std::size_t i = 0; i < l.in; ++i) d_in[i] += d_out[o] * w[i];
  }
  return d_in;
}

}  // namespace

PluginOutput plugin_forward(const VisualFeature& vis, std::span<const float> w2v,
                            const PluginParams& params) {
  return forward_cached(vis, w2v, params).out;
}

PluginGradients plugin_gradients(const VisualFeature& vis, std::span<const float> w2v,
                                 std::size_t target, const PluginParams& params) {
  if (target >= params.num_classes()) {
    throw ValidationError("class " + std::to_string(target) + " outside " +
                          std::to_string(params.num_classes()) + " classes");
  }
  ForwardCache c = forward_cached(vis, w2v, params);
  PluginGradients g;
  g.grads = PluginParams::zeros(params.visual_dim(), params.num_classes());
  g.loss = -std::log(std::max(static_cast<double>(c.out.probabilities[target]), 1e-30));

  std::vector<float> d_logits = c.out.probabilities;
  d_logits[target] -= 1.0f;
  outer_add(g.grads.head, d_logits, c.x2);
  const std::vector<float> d_x2 = transpose_apply(params.head, d_logits);
  const std::span<const float> d_refined =
      std::span(d_x2).subspan(params.visual_dim(), kWordVectorDim);
  outer_add(g.grads.fc2, d_refined, c.hidden);
  std::vector<float> d_pre = transpose_apply(params.fc2, d_refined);
  for (std::size_t i = 0; i < d_pre.size(); ++i) {
    if (c.pre[i] <= 0.0f) d_pre[i] = 0.0f;
  }
  outer_add(g.grads.fc1, d_pre, c.x1);
  g.output = std::move(c.out);
  return g;
}

void IttsConfig::validate() const {
  if (stability_run < 1) throw ConfigError("stability_run must be >= 1");
  if (max_iterations < stability_run) {
    throw ConfigError("max_iterations must be >= stability_run");
  }
}

double IttsTrainResult::converged_fraction() const {
  if (log.empty()) return 0.0;
  const int last = log.back().epoch;
  std::size_t total = 0;
  std::size_t converged = 0;
  for (const auto& e : log) {
    if (e.epoch != last) continue;
    ++total;
    converged += e.converged ? 1 : 0;
  }
  return static_cast<double>(converged) / static_cast<double>(total);
}

IttsTrainResult itts_train(PluginParams params, const std::vector<LabeledFeature>& dataset,
                           const WordVectorTable& table, const IttsConfig& cfg,
                           const OptimizerConfig& opt, std::uint64_t seed) {
  cfg.validate();
  opt.validate();
  params.validate();
  check_table(table, params.num_classes());
  for (const auto& s : dataset) {
    if (s.label >= table.size()) {
      throw ValidationError("no word vector for class " + std::to_string(s.label));
    }
  }

  std::vector<std::vector<float>> velocity;
  params.for_each_parameter(
      [&](std::span<float> span) { velocity.emplace_back(span.size(), 0.0f); });

  IttsTrainResult result;
  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < opt.total_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t idx : order) {
      const LabeledFeature& sample = dataset[idx];
      std::vector<float> w2v = table.at(sample.label).values;
      IttsTrainLogEntry entry;
      entry.epoch = epoch;
      entry.sample = idx;
      for (int it = 0; it < cfg.max_iterations; ++it) {
        PluginGradients g = plugin_gradients(sample.feature, w2v, sample.label, params);
        if (!std::isfinite(g.loss)) {
          throw NumericalError("classifier loss diverged at epoch " + std::to_string(epoch));
        }
        std::vector<std::span<float>> grads;
        g.grads.for_each_parameter([&](std::span<float> span) { grads.push_back(span); });
        std::size_t group = 0;
        params.for_each_parameter([&](std::span<float> span) {
          sgd_momentum_step(span, velocity[group], grads[group], opt, epoch);
          ++group;
        });
        w2v = std::move(g.output.refined);
        entry.labels.push_back(g.output.label);
        entry.iterations = it + 1;
        if (stable(entry.labels, cfg.stability_run)) {
          entry.converged = true;
          break;
        }
      }
      result.log.push_back(std::move(entry));
    }
  }
  result.params = std::move(params);
  return result;
}

PredictionRecord itts_test(const PluginParams& params, const VisualFeature& vis,
                           const WordVectorTable& table, const IttsConfig& cfg) {
  cfg.validate();
  check_table(table, params.num_classes());
  std::vector<ClassRun> runs;
  for (std::size_t c = 0; c < table.size(); ++c) {
    std::vector<float> w2v = table.at(c).values;
    std::vector<std::size_t> labels;
    ClassRun run;
    for (int it = 0; it < cfg.max_iterations; ++it) {
      PluginOutput out = plugin_forward(vis, w2v, params);
      labels.push_back(out.label);
      run.label = out.label;
      run.probability = out.probabilities[out.label];
      run.iterations = it + 1;
      w2v = std::move(out.refined);
      if (stable(labels, cfg.stability_run)) {
        run.converged = true;
        break;
      }
    }
    runs.push_back(run);
  }
  return combine(std::move(runs));
}

PredictionRecord single_pass_test(const PluginParams& params, const VisualFeature& vis,
                                  const WordVectorTable& table) {
  check_table(table, params.num_classes());
  std::vector<ClassRun> runs;
  for (std::size_t c = 0; c < table.size(); ++c) {
    const PluginOutput out = plugin_forward(vis, table.at(c).values, params);
    runs.push_back({out.label, out.probabilities[out.label], 1, false});
  }
  return combine(std::move(runs));
}

RecognitionReport evaluate_recognizer(const PluginParams& params,
                                      const std::vector<LabeledFeature>& dataset,
                                      const WordVectorTable& table, const IttsConfig& cfg,
                                      bool iterative) {
  RecognitionReport report;
  std::size_t correct = 0;
  for (const auto& s : dataset) {
    PredictionRecord rec = iterative ? itts_test(params, s.feature, table, cfg)
                                     : single_pass_test(params, s.feature, table);
    correct += rec.label == s.label ? 1 : 0;
    report.records.push_back(std::move(rec));
  }
  report.accuracy =
      dataset.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(dataset.size());
  return report;
}

}  // namespace okfe
