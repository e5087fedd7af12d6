#include "okfe/summarize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "okfe/error.hpp"

namespace okfe {

void FrameFeatureSeq::validate() const {
  if (dim == 0) throw ValidationError("feature dimension must be >= 1");
  if (values.size() % dim != 0) {
    throw ValidationError("feature payload of " + std::to_string(values.size()) +
                          " values is not a multiple of dimension " +
                          std::to_string(dim));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("feature values must be finite");
  }
}

void Segments::validate() const {
  if (boundaries.size() < 2 || boundaries.front() != 0) {
    throw ValidationError("segments must start at 0 and contain at least one segment");
  }
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i] <= boundaries[i - 1]) {
      throw ValidationError("segment boundaries must be strictly increasing");
    }
  }
}

std::size_t Summary::total_length() const {
  std::size_t n = 0;
  for (const Shot& s : shots) n += s.length();
  return n;
}

void Summary::validate() const {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    const Shot& s = shots[i];
    if (s.end <= s.start) {
      throw ValidationError("shot " + std::to_string(i) + " is empty or reversed");
    }
    if (s.end > num_frames) {
      throw ValidationError("shot " + std::to_string(i) + " ends past frame count " +
                            std::to_string(num_frames));
    }
    if (i > 0 && s.start < prev_end) {
      throw ValidationError("shots must be sorted and non-overlapping");
    }
    prev_end = s.end;
  }
}

std::string_view to_string(Aggregation aggregation) {
  return aggregation == Aggregation::max ? "max" : "mean";
}

Aggregation parse_aggregation(std::string_view text) {
  if (text == "mean") return Aggregation::mean;
  if (text == "max") return Aggregation::max;
  throw ConfigError("aggregation must be 'mean' or 'max', got '" + std::string(text) + "'");
}

std::size_t budget_frames(double budget, std::size_t num_frames) {
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    throw ConfigError("budget must be a positive fraction");
  }
  const double raw = budget * static_cast<double>(num_frames);
  const auto frames = static_cast<std::size_t>(std::floor(raw + 1e-9));
  return std::min(frames, num_frames);
}

// ---------------------------------------------------------------------------

namespace {

// Prefix sums of the Gram matrix g(i, j) = <x_i, x_j> so any segment's
// scatter is O(1).
class GramPrefix {
 public:
  explicit GramPrefix(const FrameFeatureSeq& features)
      : n_(features.num_frames()), block_((n_ + 1) * (n_ + 1), 0.0), diag_(n_ + 1, 0.0) {
    std::vector<double> gram(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto xi = features.frame(i);
      for (std::size_t j = i; j < n_; ++j) {
        const auto xj = features.frame(j);
        double dot = 0.0;
        for (std::size_t k = 0; k < features.dim; ++k) {
          dot += static_cast<double>(xi[k]) * static_cast<double>(xj[k]);
        }
        gram[i * n_ + j] = dot;
        gram[j * n_ + i] = dot;
      }
    }
    for (std::size_t i = 0; i < n_; ++i) {
      diag_[i + 1] = diag_[i] + gram[i * n_ + i];
      for (std::size_t j = 0; j < n_; ++j) {
        block_[(i + 1) * (n_ + 1) + (j + 1)] = gram[i * n_ + j] +
                                               block_[i * (n_ + 1) + (j + 1)] +
                                               block_[(i + 1) * (n_ + 1) + j] -
                                               block_[i * (n_ + 1) + j];
      }
    }
  }

  // sum_{i in [s,e)} g(i,i) - (1/(e-s)) sum_{i,j in [s,e)} g(i,j)
  double cost(std::size_t s, std::size_t e) const {
    const std::size_t w = n_ + 1;
    const double block = block_[e * w + e] - block_[s * w + e] - block_[e * w + s] +
                         block_[s * w + s];
    return (diag_[e] - diag_[s]) - block / static_cast<double>(e - s);
  }

 private:
  std::size_t n_;
  std::vector<double> block_;
  std::vector<double> diag_;
};

double change_point_penalty(double penalty, std::size_t change_points, std::size_t frames) {
  if (change_points == 0) return 0.0;
  const double m = static_cast<double>(change_points);
  return penalty * m * (std::log(static_cast<double>(frames) / m) + 1.0);
}

}  // namespace

KtsSolution kts_segment_detailed(const FrameFeatureSeq& features, std::size_t max_segments,
                                 double penalty) {
  features.validate();
  const std::size_t n = features.num_frames();
  if (n == 0) throw ConfigError("kts_segment: empty feature sequence");
  if (max_segments < 1 || max_segments > n) {
    throw ConfigError("kts_segment: max_segments " + std::to_string(max_segments) +
                      " must lie in [1, " + std::to_string(n) + "]");
  }
  if (!(penalty >= 0.0)) throw ConfigError("kts_segment: penalty must be >= 0");

  const GramPrefix gram(features);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::size_t w = n + 1;
  // best[m][e]: minimal cost of splitting [0, e) into m segments.
  std::vector<double> best((max_segments + 1) * w, kInf);
  std::vector<std::size_t> from((max_segments + 1) * w, 0);
  for (std::size_t e = 1; e <= n; ++e) best[1 * w + e] = gram.cost(0, e);
  for (std::size_t m = 2; m <= max_segments; ++m) {
    for (std::size_t e = m; e <= n; ++e) {
      double best_value = kInf;
      std::size_t best_start = 0;
      for (std::size_t s = m - 1; s < e; ++s) {
        const double v = best[(m - 1) * w + s] + gram.cost(s, e);
        if (v < best_value) {
          best_value = v;
          best_start = s;
        }
      }
      best[m * w + e] = best_value;
      from[m * w + e] = best_start;
    }
  }

  std::size_t chosen = 1;
  double chosen_objective = best[1 * w + n];
  for (std::size_t m = 2; m <= max_segments; ++m) {
    const double objective = best[m * w + n] + change_point_penalty(penalty, m - 1, n);
    if (objective < chosen_objective) {
      chosen_objective = objective;
      chosen = m;
    }
  }

  KtsSolution sol;
  sol.cost = best[chosen * w + n];
  sol.objective = chosen_objective;
  std::vector<std::size_t> b{n};
  std::size_t e = n;
  for (std::size_t m = chosen; m > 1; --m) {
    e = from[m * w + e];
    b.push_back(e);
  }
  b.push_back(0);
  std::reverse(b.begin(), b.end());
  sol.segments.boundaries = std::move(b);
  sol.segments.validate();
  return sol;
}

Segments kts_segment(const FrameFeatureSeq& features, std::size_t max_segments,
                     double penalty) {
  return kts_segment_detailed(features, max_segments, penalty).segments;
}

namespace {

Summary finish_summary(const Segments& segments, std::vector<std::size_t> chosen) {
  std::sort(chosen.begin(), chosen.end());
  Summary out;
  out.num_frames = segments.num_frames();
  for (std::size_t i : chosen) out.shots.push_back({segments.start(i), segments.end(i)});
  return out;
}

}  // namespace

Summary keyframes_to_keyshots(const Segments& segments, std::span<const std::size_t> keyframes,
                              double budget) {
  segments.validate();
  const std::size_t n = segments.num_frames();
  const std::size_t capacity = budget_frames(budget, n);

  std::vector<std::size_t> counts(segments.count(), 0);
  for (std::size_t f : keyframes) {
    if (f >= n) {
      throw ConfigError("keyframe index " + std::to_string(f) + " outside " +
                        std::to_string(n) + " frames");
    }
    const auto it = std::upper_bound(segments.boundaries.begin(), segments.boundaries.end(), f);
    ++counts[static_cast<std::size_t>(it - segments.boundaries.begin()) - 1];
  }

  std::vector<std::size_t> order(segments.count());
  std::iota(order.begin(), order.end(), 0);
  // Compare count_a/len_a > count_b/len_b without division.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return counts[a] * segments.length(b) > counts[b] * segments.length(a);
  });

  std::vector<std::size_t> chosen;
  std::size_t used = 0;
  for (std::size_t i : order) {
    if (counts[i] == 0) break;
    if (used + segments.length(i) <= capacity) {
      chosen.push_back(i);
      used += segments.length(i);
    }
  }
  return finish_summary(segments, std::move(chosen));
}

Summary importance_to_keyshots(std::span<const float> scores, const Segments& segments,
                               double budget) {
  segments.validate();
  const std::size_t n = segments.num_frames();
  if (scores.size() != n) {
    throw ShapeError("importance scores have " + std::to_string(scores.size()) +
                     " entries for " + std::to_string(n) + " frames");
  }
  const std::size_t m = segments.count();
  if (budget >= 1.0) {
    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), 0);
    return finish_summary(segments, std::move(all));
  }
  const std::size_t capacity = budget_frames(budget, n);

  std::vector<double> value(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t f = segments.start(i); f < segments.end(i); ++f) value[i] += scores[f];
  }

  // table[i][c]: best value using the first i segments within capacity c.
  const std::size_t w = capacity + 1;
  std::vector<double> table((m + 1) * w, 0.0);
  for (std::size_t i = 1; i <= m; ++i) {
    const std::size_t len = segments.length(i - 1);
    for (std::size_t c = 0; c <= capacity; ++c) {
      double v = table[(i - 1) * w + c];
      if (len <= c) v = std::max(v, table[(i - 1) * w + c - len] + value[i - 1]);
      table[i * w + c] = v;
    }
  }
  // Walking back, a later segment is taken only when it strictly improves on
  // leaving it out, which leaves ties to earlier segments.
  std::vector<std::size_t> chosen;
  std::size_t c = capacity;
  for (std::size_t i = m; i > 0; --i) {
    if (table[i * w + c] != table[(i - 1) * w + c]) {
      chosen.push_back(i - 1);
      c -= segments.length(i - 1);
    }
  }
  return finish_summary(segments, std::move(chosen));
}

OverlapScore overlap_score(const Summary& pred, const Summary& ref) {
  if (pred.num_frames != ref.num_frames) {
    throw ShapeError("f_score: prediction covers " + std::to_string(pred.num_frames) +
                     " frames, reference " + std::to_string(ref.num_frames));
  }
  std::vector<char> mask(pred.num_frames, 0);
  for (const Shot& s : pred.shots) {
    for (std::size_t f = s.start; f < s.end; ++f) mask[f] = 1;
  }
  std::size_t pred_len = 0;
  for (char m : mask) pred_len += static_cast<std::size_t>(m);
  std::vector<char> ref_mask(ref.num_frames, 0);
  for (const Shot& s : ref.shots) {
    for (std::size_t f = s.start; f < s.end; ++f) ref_mask[f] = 1;
  }
  std::size_t ref_len = 0;
  std::size_t overlap = 0;
  for (std::size_t f = 0; f < ref_mask.size(); ++f) {
    ref_len += static_cast<std::size_t>(ref_mask[f]);
    overlap += static_cast<std::size_t>(ref_mask[f] & mask[f]);
  }
  OverlapScore out;
  if (pred_len == 0 || ref_len == 0) return out;
  out.precision = static_cast<double>(overlap) / static_cast<double>(pred_len);
  out.recall = static_cast<double>(overlap) / static_cast<double>(ref_len);
  if (out.precision + out.recall > 0.0) {
    out.f_score = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

double f_score(const Summary& pred, std::span<const Summary> refs, Aggregation aggregation) {
  if (refs.empty()) throw ConfigError("f_score: at least one reference summary is required");
  double acc = 0.0;
  for (const Summary& ref : refs) {
    const double f = overlap_score(pred, ref).f_score;
    acc = aggregation == Aggregation::max ? std::max(acc, f) : acc + f;
  }
  return aggregation == Aggregation::max ? acc : acc / static_cast<double>(refs.size());
}

}  // namespace okfe
