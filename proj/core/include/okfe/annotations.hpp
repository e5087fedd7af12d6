#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "okfe/summarize.hpp"

namespace okfe {

// Per-video annotation document. Only num_frames is required; every other
// field is validated against it when present. Schema: docs/annotation_schema.md
struct AnnotationDoc {
  std::size_t num_frames = 0;
  std::optional<std::vector<std::size_t>> keyframe_indices;
  std::optional<std::vector<float>> importance_scores;
  std::optional<std::vector<Summary>> reference_summaries;
  std::optional<std::string> class_label;

  void validate() const;
  friend bool operator==(const AnnotationDoc&, const AnnotationDoc&) = default;
};

AnnotationDoc read_annotations(std::string_view text);
std::string write_annotations(const AnnotationDoc& doc);

nlohmann::ordered_json summary_to_json(const Summary& summary);
// {"num_frames": F, "shots": [[start, end], ...]}
Summary summary_from_json(const nlohmann::json& j);
Summary read_summary(std::string_view text);
std::string write_summary(const Summary& summary);

}  // namespace okfe
