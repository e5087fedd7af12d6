#include <doctest.h>

#include <cmath>
#include <numeric>

#include "okfe/error.hpp"
#include "okfe/random.hpp"
#include "okfe/recognizer.hpp"
#include "okfe/synth.hpp"

using namespace okfe;

namespace {

constexpr std::size_t kVis = 4;

std::vector<float> unit(std::size_t i, float scale = 1.0f) {
  std::vector<float> v(kWordVectorDim, 0.0f);
  v[i] = scale;
  return v;
}

WordVectorTable table_of(std::vector<std::vector<float>> vectors) {
  WordVectorTable t;
  for (std::size_t c = 0; c < vectors.size(); ++c) {
    t.labels.push_back("c" + std::to_string(c));
    t.vectors.push_back({std::move(vectors[c]), c});
  }
  return t;
}

// refined swaps the first two word-vector coordinates, logit k reads refined[k].
PluginParams swap_toy() {
  PluginParams p = PluginParams::zeros(kVis, 2);
  const std::size_t in = p.fc1.in;
  p.fc1.weight[0 * in + kVis + 0] = 1.0f;
  p.fc1.weight[1 * in + kVis + 1] = 1.0f;
  p.fc2.weight[1 * kPluginHidden + 0] = 1.0f;
  p.fc2.weight[0 * kPluginHidden + 1] = 1.0f;
  p.head.weight[0 * in + kVis + 0] = 1.0f;
  p.head.weight[1 * in + kVis + 1] = 1.0f;
  return p;
}

std::vector<double> dense(const DenseLayer& l, const std::vector<double>& x) {
  std::vector<double> y(l.out);
  for (std::size_t o = 0; o < l.out; ++o) {
    y[o] = l.bias[o];
    for (std::size_t i = 0; i < l.in; ++i) y[o] += double(l.weight[o * l.in + i]) * x[i];
  }
  return y;
}

VisualFeature random_feature(Rng& rng, std::size_t d = kVis) {
  VisualFeature f;
  for (std::size_t i = 0; i < d; ++i) f.values.push_back(static_cast<float>(rng.normal()));
  return f;
}

}  // namespace

TEST_CASE("zero plugin is uniform") {
  const PluginParams p = PluginParams::zeros(kVis, 4);
  const auto out = plugin_forward(VisualFeature{std::vector<float>(kVis, 1.0f)}, unit(3), p);
  for (float v : out.probabilities) CHECK(v == doctest::Approx(0.25));
  CHECK(out.label == 0);
  CHECK(out.refined == std::vector<float>(kWordVectorDim, 0.0f));
}

TEST_CASE("plugin forward against a dense double computation") {
  Rng rng(2);
  const PluginParams p = make_plugin(kVis, 5, 3);
  for (int trial = 0; trial < 5; ++trial) {
    const VisualFeature vis = random_feature(rng);
    std::vector<float> w2v(kWordVectorDim);
    for (auto& v : w2v) v = static_cast<float>(rng.normal() * 0.1);
    std::vector<double> x(vis.values.begin(), vis.values.end());
    x.insert(x.end(), w2v.begin(), w2v.end());
    auto h = dense(p.fc1, x);
    for (auto& v : h) v = std::max(v, 0.0);
    const auto refined = dense(p.fc2, h);
    std::vector<double> x2(vis.values.begin(), vis.values.end());
    x2.insert(x2.end(), refined.begin(), refined.end());
    auto logits = dense(p.head, x2);
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - top));

    const auto out = plugin_forward(vis, w2v, p);
    for (std::size_t k = 0; k < 5; ++k) CHECK(out.probabilities[k] == doctest::Approx(logits[k] / z).epsilon(1e-5));
    for (std::size_t i = 0; i < kWordVectorDim; i += 37)
      CHECK(out.refined[i] == doctest::Approx(refined[i]).epsilon(1e-4).scale(1e-4));
    const double sum = std::accumulate(out.probabilities.begin(), out.probabilities.end(), 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK_THROWS_AS(plugin_forward(VisualFeature{{1, 2}}, unit(0), p), ShapeError);
  CHECK_THROWS_AS(plugin_forward(random_feature(rng), std::vector<float>(299), p), ShapeError);
}

TEST_CASE("plugin gradients against finite differences") {
  Rng rng(4);
  PluginParams p = make_plugin(kVis, 3, 5);
  const VisualFeature vis = random_feature(rng);
  std::vector<float> w2v(kWordVectorDim);
  for (auto& v : w2v) v = static_cast<float>(rng.normal() * 0.2);
  const auto g = plugin_gradients(vis, w2v, 1, p);
  auto loss = [&] { return -std::log(double(plugin_forward(vis, w2v, p).probabilities[1])); };
  CHECK(g.loss == doctest::Approx(loss()).epsilon(1e-6));

  std::vector<std::span<float>> params, grads;
  p.for_each_parameter([&](std::span<float> s) { params.push_back(s); });
  PluginParams gp = g.grads;
  gp.for_each_parameter([&](std::span<float> s) { grads.push_back(s); });
  int checked = 0;
  for (std::size_t group = 0; group < params.size(); ++group) {
    for (int k = 0; k < 6; ++k) {
      const std::size_t i = rng.below(params[group].size());
      const float keep = params[group][i];
      const float eps = 1e-2f;
      params[group][i] = keep + eps;
      const double up = loss();
      params[group][i] = keep - eps;
      const double down = loss();
      params[group][i] = keep;
      const double fd = (up - down) / (2.0 * eps);
      CAPTURE(group);
      CHECK(std::abs(fd - grads[group][i]) <= 2e-3 + 2e-2 * std::abs(fd));
      ++checked;
    }
  }
  CHECK(checked == 36);
  CHECK_THROWS_AS(plugin_gradients(vis, w2v, 3, p), ValidationError);
}

TEST_CASE("stability rule") {
  SUBCASE("constant label stops after stability_run iterations") {
    PluginParams p = PluginParams::zeros(kVis, 3);
    p.head.bias = {0.0f, 0.5f, 1.0f};
    const auto table = table_of({unit(0), unit(1), unit(2)});
    const auto rec = itts_test(p, VisualFeature{std::vector<float>(kVis, 0.0f)}, table, {10, 3});
    REQUIRE(rec.runs.size() == 3);
    for (const ClassRun& r : rec.runs) {
      CHECK(r.iterations == 3);
      CHECK(r.converged);
      CHECK(r.label == 2);
    }
    CHECK(rec.label == 2);
    CHECK(rec.converged);
    const auto one = itts_test(p, VisualFeature{std::vector<float>(kVis, 0.0f)}, table, {10, 1});
    CHECK(one.runs[0].iterations == 1);
  }
  SUBCASE("oscillating labels run to the cap") {
    const PluginParams p = swap_toy();
    const auto table = table_of({unit(0), unit(1)});
    const auto rec = itts_test(p, VisualFeature{std::vector<float>(kVis, 0.0f)}, table, {10, 3});
    for (const ClassRun& r : rec.runs) {
      CHECK(r.iterations == 10);
      CHECK_FALSE(r.converged);
    }
    // Ten swaps bring each run back to its own class.
    CHECK(rec.runs[0].label == 0);
    CHECK(rec.runs[1].label == 1);
    CHECK_FALSE(rec.converged);
    const auto odd = itts_test(p, VisualFeature{std::vector<float>(kVis, 0.0f)}, table, {9, 3});
    CHECK(odd.runs[0].label == 1);
  }
  SUBCASE("no self-consistent run falls back to the most confident") {
    const PluginParams p = swap_toy();
    const auto table = table_of({unit(0, 2.0f), unit(1)});
    const auto rec = single_pass_test(p, VisualFeature{std::vector<float>(kVis, 0.0f)}, table);
    CHECK(rec.runs[0].label == 1);
    CHECK(rec.runs[1].label == 0);
    CHECK(rec.runs[0].probability > rec.runs[1].probability);
    CHECK(rec.label == 1);
  }
  SUBCASE("self-consistent runs win over more confident ones") {
    PluginParams p = swap_toy();
    // Run 1 lands confidently on class 0; only run 2 agrees with itself.
    p.head = DenseLayer::zeros(p.head.in, 3);
    const std::size_t in = p.head.in;
    p.head.weight[0 * in + kVis + 0] = 4.0f;
    p.head.bias = {0.0f, 0.0f, 0.5f};
    const auto table = table_of({unit(5), unit(1, 3.0f), unit(6)});
    const auto rec = single_pass_test(p, VisualFeature{std::vector<float>(kVis, 0.0f)}, table);
    CHECK(rec.runs[0].label == 2);
    CHECK(rec.runs[1].label == 0);
    CHECK(rec.runs[2].label == 2);
    CHECK(rec.runs[1].probability > rec.runs[2].probability);
    CHECK(rec.label == 2);
  }
  SUBCASE("config errors") {
    CHECK_THROWS_AS((IttsConfig{2, 3}.validate()), ConfigError);
    CHECK_THROWS_AS((IttsConfig{5, 0}.validate()), ConfigError);
  }
}

TEST_CASE("converged fraction uses the last epoch") {
  IttsTrainResult r;
  r.log = {{0, 0, 10, false, {}}, {1, 0, 3, true, {}}, {1, 1, 10, false, {}},
           {1, 2, 3, true, {}}, {1, 3, 4, true, {}}};
  CHECK(r.converged_fraction() == 0.75);
  CHECK(IttsTrainResult{}.converged_fraction() == 0.0);
}

TEST_CASE("training on separable clusters") {
  ClassificationSynthConfig sc;
  sc.num_classes = 3;
  sc.samples_per_class = 15;
  const ClassificationSet set = synth_classification(sc);
  const WordVectorTable before = set.table;
  OptimizerConfig opt;
  opt.learning_rate = 0.01;
  opt.total_epochs = 8;
  const PluginParams init = make_plugin(sc.visual_dim, 3, 1);
  const std::uint64_t init_sum = parameter_checksum(init);
  const auto a = itts_train(init, set.samples, set.table, {10, 3}, opt, 7);
  const auto b = itts_train(init, set.samples, set.table, {10, 3}, opt, 7);
  CHECK(parameter_checksum(a.params) == parameter_checksum(b.params));
  CHECK(parameter_checksum(init) == init_sum);
  CHECK(parameter_checksum(a.params) != init_sum);
  CHECK(set.table.vectors[1].values == before.vectors[1].values);
  CHECK(a.log.size() == 8 * set.samples.size());

  const auto before_eval = evaluate_recognizer(a.params, set.samples, set.table, {10, 3});
  CHECK(parameter_checksum(a.params) == parameter_checksum(b.params));
  CHECK(before_eval.accuracy >= 0.9);
  CHECK(evaluate_recognizer(a.params, set.samples, set.table, {10, 3}, false).accuracy >= 0.9);

  auto bad = set.samples;
  bad[0].label = 9;
  CHECK_THROWS_AS(itts_train(init, bad, set.table, {10, 3}, opt, 7), ValidationError);
}

TEST_CASE("pooled keyframe features") {
  KeyframeRecord a, b;
  a.k_fm = Tensor(Shape{1, 2, 2}, {1, 1, 3, 3});
  a.k_fa = Tensor(Shape{1, 2, 2}, {0, 0, 0, 0});
  b.k_fm = Tensor(Shape{1, 2, 2}, {2, 2, 2, 2});
  b.k_fa = Tensor(Shape{1, 2, 2}, {4, 4, 4, 4});
  const std::vector<KeyframeRecord> recs{a, b};
  const VisualFeature f = pool_keyframes(recs);
  REQUIRE(f.values.size() == visual_dim(1));
  CHECK(f.values[0] == doctest::Approx(2.0));  // mean of means 2 and 2
  CHECK(f.values[1] == doctest::Approx(0.5));  // mean of stds 1 and 0
  CHECK(f.values[2] == doctest::Approx(2.0));
  CHECK(f.values[3] == doctest::Approx(0.0));
  CHECK_THROWS_AS(pool_keyframes(std::span<const KeyframeRecord>{}), ValidationError);
}
