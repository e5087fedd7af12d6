#include <doctest.h>

#include "okfe/error.hpp"
#include "okfe/random.hpp"
#include "okfe/summarize.hpp"
#include "../support/summary_oracles.hpp"

using namespace okfe;

namespace {

FrameFeatureSeq rows(std::size_t dim, std::vector<float> v) { return {dim, std::move(v)}; }

Segments random_segments(std::size_t n, Rng& rng) {
  Segments s{{0}};
  while (s.boundaries.back() < n) {
    const std::size_t len = 1 + rng.below(std::min<std::size_t>(12, n - s.boundaries.back()));
    s.boundaries.push_back(s.boundaries.back() + len);
  }
  return s;
}

Summary random_summary(std::size_t n, Rng& rng) {
  Summary s;
  s.num_frames = n;
  std::size_t f = rng.below(5);
  while (f < n) {
    const std::size_t len = 1 + rng.below(8);
    const std::size_t end = std::min(n, f + len);
    s.shots.push_back({f, end});
    f = end + 1 + rng.below(10);
  }
  return s;
}

}  // namespace

TEST_CASE("kts") {
  SUBCASE("constant features stay in one segment") {
    const auto x = rows(2, std::vector<float>(20, 0.5f));
    CHECK(kts_segment(x, 5, 0.1).boundaries == std::vector<std::size_t>{0, 10});
  }
  SUBCASE("orthogonal halves split at the change") {
    const auto x = rows(2, {1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1});
    CHECK(kts_segment(x, 2, 0.0).boundaries == std::vector<std::size_t>{0, 3, 6});
    // Every single-boundary placement, checked by hand enumeration.
    double best = 1e9;
    std::size_t arg = 0;
    for (std::size_t b = 1; b < 6; ++b) {
      const double c = oracle::segment_cost(x, 0, b) + oracle::segment_cost(x, b, 6);
      if (c < best) best = c, arg = b;
    }
    CHECK(arg == 3);
  }
  SUBCASE("three planted blocks equal brute force") {
    std::vector<float> v;
    for (int i = 0; i < 12; ++i) {
      const int block = i / 4;
      for (int d = 0; d < 3; ++d) v.push_back(d == block ? 1.0f : 0.0f);
    }
    const auto x = rows(3, v);
    const auto dp = kts_segment_detailed(x, 3, 0.0);
    const auto bf = oracle::brute_kts(x, 3, 0.0);
    CHECK(dp.cost == bf.cost);
    CHECK(dp.segments.boundaries == std::vector<std::size_t>{0, 4, 8, 12});
  }
  SUBCASE("dp equals exhaustive search on every small instance") {
    Rng rng(3);
    int instances = 0;
    for (std::size_t n = 1; n <= 14; ++n) {
      for (std::size_t segs = 1; segs <= std::min<std::size_t>(3, n); ++segs) {
        for (int trial = 0; trial < 6; ++trial) {
          std::vector<float> v;
          for (std::size_t i = 0; i < 2 * n; ++i) v.push_back(static_cast<float>(rng.below(4)));
          const auto x = rows(2, v);
          const double penalty = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 0.5 : 2.0);
          const auto dp = kts_segment_detailed(x, segs, penalty);
          const auto bf = oracle::brute_kts(x, segs, penalty);
          CAPTURE(n);
          CAPTURE(segs);
          CHECK(dp.objective == bf.objective);
          CHECK(dp.cost == [&] {
            double c = 0;
            for (std::size_t i = 0; i < dp.segments.count(); ++i)
              c += oracle::segment_cost(x, dp.segments.start(i), dp.segments.end(i));
            return c;
          }());
          CHECK(dp.segments.count() <= segs);
          ++instances;
        }
      }
    }
    CHECK(instances > 200);
  }
  SUBCASE("errors") {
    const auto x = rows(1, {1, 2, 3});
    CHECK_THROWS_AS(kts_segment(x, 4, 1.0), ConfigError);
    CHECK_THROWS_AS(kts_segment(x, 0, 1.0), ConfigError);
    CHECK_THROWS_AS(kts_segment(rows(1, {}), 1, 1.0), ConfigError);
    CHECK_THROWS_AS(kts_segment(x, 2, -1.0), ConfigError);
  }
  SUBCASE("boundaries always partition the frames") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 5 + rng.below(60);
      std::vector<float> v;
      for (std::size_t i = 0; i < 3 * n; ++i) v.push_back(static_cast<float>(rng.normal()));
      const Segments s = kts_segment(rows(3, v), 1 + rng.below(n), rng.uniform(0, 2));
      CHECK(s.boundaries.front() == 0);
      CHECK(s.boundaries.back() == n);
      CHECK_NOTHROW(s.validate());
    }
  }
}

TEST_CASE("keyframes to keyshots") {
  const Segments segs{{0, 10, 60, 100}};
  SUBCASE("hand trace") {
    const Summary s = keyframes_to_keyshots(segs, std::vector<std::size_t>{1, 2, 3}, 0.15);
    CHECK(s.shots == std::vector<Shot>{{0, 10}});
    CHECK(s.num_frames == 100);
  }
  SUBCASE("unconstrained budget takes every segment with keyframes") {
    const Summary s = keyframes_to_keyshots(segs, std::vector<std::size_t>{5, 70}, 1.0);
    CHECK(s.shots == std::vector<Shot>{{0, 10}, {60, 100}});
  }
  SUBCASE("no keyframes, no summary") {
    CHECK(keyframes_to_keyshots(segs, std::vector<std::size_t>{}, 0.5).shots.empty());
  }
  SUBCASE("oversized segments are skipped and selection continues") {
    const Segments s2{{0, 20, 25, 100}};
    // ratios: 2/20, 1/5, 3/75 -> order 1, 0, 2; capacity 15 fits only 1.
    const Summary s = keyframes_to_keyshots(s2, std::vector<std::size_t>{0, 1, 22, 30, 40, 50}, 0.15);
    CHECK(s.shots == std::vector<Shot>{{20, 25}});
  }
  SUBCASE("equal ratios go to the earlier segment") {
    const Segments s2{{0, 5, 10, 20}};
    const Summary s = keyframes_to_keyshots(s2, std::vector<std::size_t>{12, 1}, 0.25);
    CHECK(s.shots == std::vector<Shot>{{0, 5}});
  }
  SUBCASE("budget never exceeded") {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 1 + rng.below(150);
      const Segments s = random_segments(n, rng);
      std::vector<std::size_t> kf;
      for (std::size_t i = 0, k = rng.below(n + 1); i < k; ++i) kf.push_back(rng.below(n));
      const double budget = rng.uniform(0.01, 1.0);
      const Summary out = keyframes_to_keyshots(s, kf, budget);
      CHECK(out.total_length() <= budget_frames(budget, n));
      CHECK_NOTHROW(out.validate());
    }
  }
  SUBCASE("keyframe out of range") {
    CHECK_THROWS_AS(keyframes_to_keyshots(segs, std::vector<std::size_t>{100}, 0.15), ConfigError);
  }
}

TEST_CASE("importance to keyshots") {
  SUBCASE("uniform scores, tie goes to the earlier segment") {
    const Segments s{{0, 5, 10}};
    const std::vector<float> scores(10, 1.0f);
    CHECK(importance_to_keyshots(scores, s, 0.5).shots == std::vector<Shot>{{0, 5}});
  }
  SUBCASE("values 3, 2, 1 with room for two") {
    const Segments s{{0, 5, 10, 15}};
    std::vector<float> scores;
    for (float v : {3.0f, 2.0f, 1.0f}) scores.insert(scores.end(), 5, v);
    CHECK(importance_to_keyshots(scores, s, 10.0 / 15.0).shots == std::vector<Shot>{{0, 5}, {5, 10}});
  }
  SUBCASE("full budget takes everything") {
    const Segments s{{0, 3, 7}};
    CHECK(importance_to_keyshots(std::vector<float>(7, 0.0f), s, 1.0).shots.size() == 2);
  }
  SUBCASE("optimal against exhaustive subsets") {
    Rng rng(6);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 2 + rng.below(40);
      const Segments s = random_segments(n, rng);
      if (s.count() > 12) continue;
      std::vector<float> scores;
      for (std::size_t i = 0; i < n; ++i) scores.push_back(static_cast<float>(rng.below(5)));
      const double budget = rng.uniform(0.05, 0.9);
      const std::size_t cap = budget_frames(budget, n);
      double best = 0;
      for (std::size_t mask = 0; mask < (std::size_t{1} << s.count()); ++mask) {
        std::size_t len = 0;
        double value = 0;
        for (std::size_t i = 0; i < s.count(); ++i) {
          if (!(mask >> i & 1)) continue;
          len += s.length(i);
          for (std::size_t f = s.start(i); f < s.end(i); ++f) value += scores[f];
        }
        if (len <= cap) best = std::max(best, value);
      }
      const Summary out = importance_to_keyshots(scores, s, budget);
      double got = 0;
      for (const Shot& sh : out.shots)
        for (std::size_t f = sh.start; f < sh.end; ++f) got += scores[f];
      CHECK(got == best);
      CHECK(out.total_length() <= cap);
    }
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(importance_to_keyshots(std::vector<float>(3), Segments{{0, 4}}, 0.5), ShapeError);
  }
}

TEST_CASE("f score") {
  Summary a{{{0, 10}}, 100}, b{{{5, 15}}, 100};
  const std::vector<Summary> ref_b{b}, ref_a{a};
  CHECK(f_score(a, ref_a) == 1.0);
  CHECK(f_score(a, ref_b) == doctest::Approx(0.5).epsilon(1e-12));
  const auto o = overlap_score(a, b);
  CHECK(o.precision == 0.5);
  CHECK(o.recall == 0.5);
  CHECK(f_score(a, std::vector<Summary>{Summary{{{50, 60}}, 100}}) == 0.0);
  CHECK(f_score(Summary{{}, 100}, ref_a) == 0.0);

  const std::vector<Summary> two{a, Summary{{{50, 60}}, 100}};
  CHECK(f_score(a, two, Aggregation::mean) == doctest::Approx(0.5));
  CHECK(f_score(a, two, Aggregation::max) == 1.0);
  CHECK_THROWS_AS(f_score(a, std::vector<Summary>{Summary{{}, 50}}), ShapeError);
  CHECK_THROWS_AS(f_score(a, std::vector<Summary>{}), ConfigError);
  CHECK(parse_aggregation("max") == Aggregation::max);
  CHECK_THROWS_AS(parse_aggregation("median"), ConfigError);

  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(120);
    const Summary p = random_summary(n, rng), r = random_summary(n, rng);
    const std::vector<Summary> rr{r}, pp{p};
    const double f = f_score(p, rr);
    CHECK(std::abs(f - oracle::f_formula(p, r)) < 1e-9);
    CHECK(f == f_score(r, pp));
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
  }
}

TEST_CASE("budget frames") {
  CHECK(budget_frames(0.15, 100) == 15);
  CHECK(budget_frames(0.15, 64) == 9);
  CHECK(budget_frames(0.3, 10) == 3);  // 0.3 * 10 is 2.9999... in binary
  CHECK(budget_frames(2.0, 10) == 10);
  CHECK_THROWS_AS(budget_frames(0.0, 10), ConfigError);
}
