#include <doctest.h>

#include <cmath>

#include "okfe/error.hpp"
#include "okfe/finite_diff.hpp"
#include "okfe/synth.hpp"
#include "okfe/training.hpp"
#include "../support/oracles.hpp"

using namespace okfe;

namespace {

std::vector<GateDecision> gates_of(std::initializer_list<int> z) {
  std::vector<GateDecision> g;
  std::int64_t i = 0;
  for (int v : z) g.push_back({v != 0, i++});
  return g;
}

OkfemConfig toy_config() {
  OkfemConfig c;
  c.height = 16;
  c.width = 16;
  c.backbone_layers = 1;
  c.backbone_channels = 4;
  return c;
}

// Double-precision toy with off-grid offsets and a threshold that leaves
// scores spread around zero.
BasicOkfemModel<double> toy_model(std::uint64_t seed) {
  BasicOkfemModel<double> m = make_model(toy_config(), seed).cast<double>();
  Rng rng(seed + 1);
  for (auto& v : m.deform.offset_predictor.weight.values()) v = rng.uniform(-0.2, 0.2);
  for (auto& v : m.deform.offset_predictor.bias) v = rng.uniform(-0.6, 0.6);
  for (auto& v : m.deform.response_kernel.weight.values()) v *= 8.0;
  for (auto& v : m.threshold.th.values()) v = rng.uniform(-0.01, 0.01);
  return m;
}

std::vector<BasicTensor<double>> toy_sequence(std::uint64_t seed, std::size_t n = 8) {
  Rng rng(seed);
  std::vector<BasicTensor<double>> frames;
  for (std::size_t t = 0; t < n; ++t) frames.push_back(oracle::random_tensor<double>({3, 16, 16}, rng));
  return frames;
}

double rel_error(std::span<const double> analytic, const BasicTensor<double>& numeric) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    scale = std::max(scale, std::abs(numeric[i]));
  }
  return scale == 0 ? diff : diff / scale;
}

}  // namespace

TEST_CASE("selection loss") {
  LossConfig cfg;
  const GroundTruthKeyframes gt{{1, 2}, 4};
  const std::vector<double> s{-1, 2, -1, 3};
  SUBCASE("hand-evaluated example") {
    const double expected = 0.6 * 2 - 0.42 * (std::tanh(2.0) + std::tanh(3.0));
    CHECK(selection_loss(s, gates_of({0, 1, 0, 1}), gt, cfg) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.3770).epsilon(1e-3));
  }
  SUBCASE("perfect selection without the score term is zero") {
    cfg.beta = 0;
    CHECK(selection_loss(s, gates_of({0, 1, 1, 0}), gt, cfg) == 0.0);
  }
  SUBCASE("alpha = 0 is non-positive") {
    cfg.alpha = 0;
    CHECK(selection_loss(s, gates_of({0, 1, 0, 1}), gt, cfg) <= 0.0);
    CHECK(selection_loss(s, gates_of({0, 0, 0, 0}), gt, cfg) == 0.0);
  }
  SUBCASE("linear in alpha and beta") {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> sc;
      std::vector<GateDecision> z;
      for (int f = 0; f < 10; ++f) {
        sc.push_back(rng.uniform(-3, 3));
        z.push_back({rng.uniform() < 0.5, f});
      }
      const GroundTruthKeyframes g{{0, 4, 7}, 10};
      LossConfig a{rng.uniform(), rng.uniform(), 1, 1}, e1{1, 0, 1, 1}, e2{0, 1, 1, 1};
      CHECK(selection_loss(sc, z, g, a) ==
            a.alpha * selection_loss(sc, z, g, e1) + a.beta * selection_loss(sc, z, g, e2));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(selection_loss(std::vector<double>{1, 2}, gates_of({0, 1, 0, 1}), gt, cfg), ShapeError);
    CHECK_THROWS_AS(selection_loss({}, {}, GroundTruthKeyframes{{}, 0}, cfg), ConfigError);
    cfg.beta = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("surrogate gate") {
  CHECK(surrogate_gate_slope(0.0, 2.0) == doctest::Approx(0.5 * surrogate_gate_slope(0.0, 1.0)).epsilon(1e-15));
  CHECK(surrogate_gate_slope(0.0, 1.0) == doctest::Approx(0.25));
  // The smooth objective's derivative matches its own finite differences.
  LossConfig cfg{0.6, 0.42, 0.7, 1.3};
  for (double s : {-2.0, -0.3, 0.1, 1.7}) {
    for (bool gt : {false, true}) {
      const double e = 1e-6;
      const double fd = (frame_objective(s + e, gt, cfg, GateMode::smooth).loss -
                         frame_objective(s - e, gt, cfg, GateMode::smooth).loss) / (2 * e);
      CHECK(frame_objective(s, gt, cfg, GateMode::smooth).d_score == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("loss gradients match finite differences for every parameter group") {
  const auto model = toy_model(21);
  const auto seq = toy_sequence(22);
  const GroundTruthKeyframes gt{{2, 5}, 8};
  const LossConfig cfg;
  const auto g = loss_gradients(model, seq, gt, cfg, GateMode::smooth);

  // Scores must straddle zero for the check to exercise both gate states.
  int positive = 0;
  for (std::size_t t = 1; t < 8; ++t) positive += g.scores[t] > 0 ? 1 : 0;
  CHECK(positive > 0);
  CHECK(positive < 7);

  std::vector<std::span<const double>> analytic;
  g.gradients.for_each_parameter([&](const std::string&, auto span) { analytic.push_back(span); });
  std::size_t group = 0;
  model.for_each_parameter([&](const std::string& name, auto span) {
    CAPTURE(name);
    const BasicTensor<double> params(Shape{span.size()}, std::vector<double>(span.begin(), span.end()));
    const auto numeric = finite_diff_grad<double>(
        [&](const BasicTensor<double>& p) {
          auto probe = model;
          std::size_t k = 0;
          probe.for_each_parameter([&](const std::string&, auto s) {
            if (k++ == group) std::copy(p.values().begin(), p.values().end(), s.begin());
          });
          return sequence_loss(probe, seq, gt, cfg, GateMode::smooth);
        },
        params, 1e-6);
    if (name.rfind("appearance", 0) == 0) {
      // W never reaches S: both sides are exactly zero.
      for (std::size_t i = 0; i < span.size(); ++i) {
        CHECK(analytic[group][i] == 0.0);
        CHECK(numeric[i] == 0.0);
      }
    } else {
      CHECK(rel_error(analytic[group], numeric) < 1e-4);
    }
    ++group;
  });
}

TEST_CASE("score-term gradient on a single TH pixel") {
  // One selected frame far from the gate boundary with a very sharp
  // surrogate: only the reward term -beta*tanh(S/sigma) moves.
  auto model = toy_model(31);
  const auto seq = toy_sequence(32, 2);
  const LossConfig cfg{0.0, 0.42, 1e-3, 1.0};
  const GroundTruthKeyframes gt{{}, 2};
  auto probe = model;
  const double s0 = loss_gradients(probe, seq, gt, cfg).scores[1];
  // Shift the threshold so that S(1) = 0.5.
  probe.threshold.th[0] += s0 - 0.5;
  const auto g = loss_gradients(probe, seq, gt, cfg);
  REQUIRE(g.gates[1].selected);
  CHECK(g.scores[1] == doctest::Approx(0.5).epsilon(1e-9));
  const double expected = 0.42 * (1 - std::tanh(0.5) * std::tanh(0.5)) / 1.0 / 2.0;  // divided by F
  const double e = 1e-6;
  auto up = probe, down = probe;
  up.threshold.th[7] += e;
  down.threshold.th[7] -= e;
  const double fd = (sequence_loss(up, seq, gt, cfg) - sequence_loss(down, seq, gt, cfg)) / (2 * e);
  CHECK(g.gradients.threshold.th[7] == doctest::Approx(expected).epsilon(1e-4));
  CHECK(fd == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("saturated static sequence has zero gradient") {
  auto model = toy_model(41);
  model.threshold.th.fill(1.0);  // sum over 256 pixels: S = -256
  const auto frame = toy_sequence(42, 1)[0];
  const std::vector<BasicTensor<double>> seq(6, frame);
  const auto g = loss_gradients(model, seq, GroundTruthKeyframes{{}, 6}, LossConfig{});
  g.gradients.for_each_parameter([&](const std::string& name, auto span) {
    CAPTURE(name);
    for (double v : span) CHECK(std::abs(v) < 1e-6);
  });
  for (const auto& gd : g.gates) CHECK_FALSE(gd.selected);
}

TEST_CASE("loss gradient errors") {
  const auto model = toy_model(51);
  CHECK_THROWS_AS(loss_gradients(model, toy_sequence(52, 1), GroundTruthKeyframes{{}, 1}, LossConfig{}), ConfigError);
  CHECK_THROWS_AS(loss_gradients(model, toy_sequence(52, 3), GroundTruthKeyframes{{}, 4}, LossConfig{}), ShapeError);
  CHECK_THROWS_AS(loss_gradients(model, toy_sequence(52, 3), GroundTruthKeyframes{{5}, 3}, LossConfig{}), ValidationError);
}

namespace {

std::vector<TrainingSample> tiny_dataset(std::size_t n) {
  SynthConfig sc;
  sc.num_frames = 12;
  sc.height = 12;
  sc.width = 12;
  sc.num_events = 1;
  sc.seed = 5;
  std::vector<TrainingSample> out;
  for (const auto& v : synth_suite(sc, n)) out.push_back(to_training_sample(v));
  return out;
}

OkfemConfig tiny_model_config() {
  OkfemConfig c;
  c.height = 12;
  c.width = 12;
  c.backbone_channels = 4;
  return c;
}

}  // namespace

TEST_CASE("train") {
  const auto data = tiny_dataset(3);
  const OkfemModel init = make_model(tiny_model_config(), 1);
  OptimizerConfig opt;
  opt.total_epochs = 2;
  SUBCASE("lr = 0 keeps the parameters") {
    opt.learning_rate = 0;
    const TrainResult r = train(init, data, opt, LossConfig{}, 3);
    CHECK(r.model == init);
    CHECK(r.epochs.size() == 2);
  }
  SUBCASE("same seed, same parameters") {
    const TrainResult a = train(init, data, opt, LossConfig{}, 3);
    const TrainResult b = train(init, data, opt, LossConfig{}, 3);
    CHECK(a.model.flatten() == b.model.flatten());
    CHECK_FALSE(a.model == init);
    int calls = 0;
    train(init, data, opt, LossConfig{}, 3, [&](const EpochMetrics& m) {
      CHECK(m.epoch == calls++);
      CHECK(m.keyframe_ratio >= 0.0);
      CHECK(m.keyframe_ratio <= 1.0);
    });
    CHECK(calls == 2);
  }
  SUBCASE("divergence is reported") {
    opt.learning_rate = 1e30;
    opt.total_epochs = 5;
    CHECK_THROWS_AS(train(init, data, opt, LossConfig{}, 3), NumericalError);
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(train(init, {}, opt, LossConfig{}, 3), ConfigError);
  }
}

TEST_CASE("keyframe f1") {
  const GroundTruthKeyframes gt{{2, 6}, 10};
  CHECK(keyframe_f1(std::vector<std::size_t>{2, 6}, gt) == 1.0);
  CHECK(keyframe_f1(std::vector<std::size_t>{}, gt) == 0.0);
  CHECK(keyframe_f1(std::vector<std::size_t>{2, 3}, gt) == doctest::Approx(0.5));
  CHECK(keyframe_f1(std::vector<std::size_t>{}, GroundTruthKeyframes{{}, 10}) == 1.0);
}

TEST_CASE("sweep") {
  const auto grid = default_alpha_beta_grid();
  REQUIRE(grid.size() == 10);
  CHECK(grid.front() == std::pair(0.2, 0.8));
  CHECK(grid[5] == std::pair(0.6, 0.42));
  CHECK(grid.back() == std::pair(0.8, 0.2));

  SynthConfig sc;
  sc.num_frames = 12;
  sc.height = 12;
  sc.width = 12;
  sc.num_events = 1;
  std::vector<TrainingSample> train_set;
  std::vector<EvaluationVideo> eval_set;
  for (const auto& v : synth_suite(sc, 2)) {
    train_set.push_back(to_training_sample(v));
    eval_set.push_back(to_evaluation_video(v));
  }
  SweepSetup setup;
  setup.model_config = tiny_model_config();
  setup.opt.total_epochs = 1;
  const auto one = sweep_alpha_beta({{0.6, 0.42}}, train_set, eval_set, setup);
  REQUIRE(one.size() == 1);
  CHECK(one[0].alpha == 0.6);
  CHECK(one[0].per_video_scores.size() == 2);
  CHECK(one[0].f_score >= 0.0);
  CHECK(one[0].f_score <= 1.0);

  setup.jobs = 2;
  const std::vector<std::pair<double, double>> two{{0.2, 0.8}, {0.8, 0.2}};
  const auto par = sweep_alpha_beta(two, train_set, eval_set, setup);
  setup.jobs = 1;
  const auto seq = sweep_alpha_beta(two, train_set, eval_set, setup);
  CHECK(sweep_table_tsv(par) == sweep_table_tsv(seq));
  CHECK(sweep_table_json(par) == sweep_table_json(seq));
  CHECK(sweep_table_tsv(seq).rfind("alpha\tbeta\tf_score\tkeyframe_ratio\n0.20\t0.80\t", 0) == 0);
  CHECK_THROWS_AS(sweep_alpha_beta({}, train_set, eval_set, setup), ConfigError);
}
