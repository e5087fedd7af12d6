#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace okfe {

// F frames of d-dimensional descriptors, row-major.
struct FrameFeatureSeq {
  std::size_t dim = 0;
  std::vector<float> values;

  std::size_t num_frames() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const float> frame(std::size_t f) const {
    return std::span<const float>(values).subspan(f * dim, dim);
  }
  void validate() const;
};

// b_0 = 0 < b_1 < ... < b_m = F; segment i covers [b_i, b_{i+1}).
struct Segments {
  std::vector<std::size_t> boundaries;

  std::size_t num_frames() const { return boundaries.empty() ? 0 : boundaries.back(); }
  std::size_t count() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
  std::size_t start(std::size_t i) const { return boundaries[i]; }
  std::size_t end(std::size_t i) const { return boundaries[i + 1]; }
  std::size_t length(std::size_t i) const { return end(i) - start(i); }
  void validate() const;

  friend bool operator==(const Segments&, const Segments&) = default;
};

// Half-open frame interval [start, end).
struct Shot {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Shot&, const Shot&) = default;
};

struct Summary {
  std::vector<Shot> shots;  // sorted, non-overlapping
  std::size_t num_frames = 0;

  std::size_t total_length() const;
  void validate() const;

  friend bool operator==(const Summary&, const Summary&) = default;
};

enum class Aggregation { mean, max };

std::string_view to_string(Aggregation aggregation);
Aggregation parse_aggregation(std::string_view text);

inline constexpr double kDefaultBudget = 0.15;

// floor(budget * F), tolerant of binary rounding in the product.
std::size_t budget_frames(double budget, std::size_t num_frames);

struct KtsSolution {
  Segments segments;
  double cost = 0.0;       // within-segment kernel scatter of the chosen split
  double objective = 0.0;  // cost + penalty term
};

// Kernel temporal segmentation with a linear kernel. For every number of
// change points m < max_segments the optimal split is found by dynamic
// programming; the returned one minimizes cost + penalty*m*(log(F/m)+1).
KtsSolution kts_segment_detailed(const FrameFeatureSeq& features,
                                 std::size_t max_segments, double penalty);

Segments kts_segment(const FrameFeatureSeq& features, std::size_t max_segments,
                     double penalty);

// Ranks segments by keyframe density (ties: earlier segment first) and takes
// them greedily while the budget allows, skipping segments that do not fit.
// Segments without keyframes are never selected.
Summary keyframes_to_keyshots(const Segments& segments,
                              std::span<const std::size_t> keyframes, double budget);

// Exact 0/1 knapsack over segments: value = mean importance * length,
// weight = length, capacity = floor(budget * F). Ties prefer earlier segments.
Summary importance_to_keyshots(std::span<const float> scores, const Segments& segments,
                               double budget);

struct OverlapScore {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
};

OverlapScore overlap_score(const Summary& pred, const Summary& ref);

double f_score(const Summary& pred, std::span<const Summary> refs,
               Aggregation aggregation = Aggregation::mean);

}  // namespace okfe
