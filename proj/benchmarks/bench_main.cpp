#include <benchmark/benchmark.h>

#include "okfe/okfem.hpp"
#include "okfe/random.hpp"
#include "okfe/recognizer.hpp"
#include "okfe/summarize.hpp"
#include "okfe/synth.hpp"
#include "okfe/training.hpp"

using namespace okfe;

namespace {

Tensor noise(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

ConvParams conv(std::size_t out, std::size_t in, std::uint64_t seed) {
  ConvParams p;
  p.weight = noise({out, in, 3, 3}, seed);
  p.bias.assign(out, 0.1f);
  return p;
}

void BM_Conv2d(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({ch, 32, 32}, 1);
  const ConvParams p = conv(ch, ch, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv2d)->Arg(3)->Arg(8)->Arg(16);

void BM_DeformableConv(benchmark::State& state) {
  const Tensor feat = noise({8, 32, 32}, 3);
  const Tensor offsets = noise({18, 32, 32}, 4);
  const ConvParams p = conv(1, 8, 5);
  for (auto _ : state) benchmark::DoNotOptimize(deformable_conv(feat, offsets, p));
}
BENCHMARK(BM_DeformableConv);

void BM_OnlineStep(benchmark::State& state) {
  const OkfemModel m = make_model(OkfemConfig{}, 0);
  const Tensor a = noise({3, 32, 32}, 6), b = noise({3, 32, 32}, 7);
  OkfemState s = init_state(m.config);
  bool flip = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(step(s, flip ? a : b, m));
    flip = !flip;
  }
}
BENCHMARK(BM_OnlineStep);

void BM_GradientStep(benchmark::State& state) {
  SynthConfig cfg;
  cfg.seed = 8;
  const TrainingSample sample = to_training_sample(synth_video(cfg));
  const OkfemModel m = make_model(OkfemConfig{}, 0);
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradients(m, sample.frames, sample.gt, LossConfig{}));
  state.SetLabel("64 frames 3x32x32");
}
BENCHMARK(BM_GradientStep)->Unit(benchmark::kMillisecond);

void BM_Kts(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(9);
  FrameFeatureSeq x;
  x.dim = 16;
  for (std::size_t i = 0; i < n * x.dim; ++i) x.values.push_back(static_cast<float>(rng.uniform()));
  for (auto _ : state) benchmark::DoNotOptimize(kts_segment(x, 24, 0.01));
}
BENCHMARK(BM_Kts)->Arg(64)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_IttsTest(benchmark::State& state) {
  const ClassificationSet set = synth_classification(ClassificationSynthConfig{});
  const PluginParams p = make_plugin(8, 5, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(itts_test(p, set.samples[0].feature, set.table, IttsConfig{}));
}
BENCHMARK(BM_IttsTest);

}  // namespace
BENCHMARK_MAIN();
