#include "okfe/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "okfe/error.hpp"

namespace okfe {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ValidationError("annotation field '" + field + "': " + what);
}

std::size_t as_index(const json& v, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(field, "expected a non-negative integer, got " + v.dump());
  }
  return v.get<std::size_t>();
}

Summary parse_shot_list(const json& shots, std::size_t num_frames, const std::string& field) {
  if (!shots.is_array()) fail(field, "expected an array of [start, end] pairs");
  Summary s;
  s.num_frames = num_frames;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    const json& pair = shots[i];
    const std::string where = field + "[" + std::to_string(i) + "]";
    if (!pair.is_array() || pair.size() != 2) fail(where, "expected [start, end]");
    s.shots.push_back({as_index(pair[0], where), as_index(pair[1], where)});
  }
  try {
    s.validate();
  } catch (const ValidationError& e) {
    fail(field, e.what());
  }
  return s;
}

}  // namespace

void AnnotationDoc::validate() const {
  if (keyframe_indices) {
    for (std::size_t i = 0; i < keyframe_indices->size(); ++i) {
      const std::size_t f = (*keyframe_indices)[i];
      if (f >= num_frames) {
        fail("keyframe_indices", "index " + std::to_string(f) + " outside " +
                                     std::to_string(num_frames) + " frames");
      }
      if (i > 0 && f <= (*keyframe_indices)[i - 1]) {
        fail("keyframe_indices", "indices must be sorted and unique");
      }
    }
  }
  if (importance_scores) {
    if (importance_scores->size() != num_frames) {
      fail("importance_scores", "has " + std::to_string(importance_scores->size()) +
                                    " entries, expected num_frames = " +
                                    std::to_string(num_frames));
    }
    for (float v : *importance_scores) {
      if (!std::isfinite(v)) fail("importance_scores", "values must be finite");
    }
  }
  if (reference_summaries) {
    for (const Summary& s : *reference_summaries) {
      if (s.num_frames != num_frames) fail("reference_summaries", "frame count mismatch");
      s.validate();
    }
  }
}

AnnotationDoc read_annotations(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("annotation JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("annotation JSON: top level must be an object");

  static const std::set<std::string> known{"num_frames", "keyframe_indices",
                                           "importance_scores", "reference_summaries",
                                           "class_label"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) fail(key, "unknown field");
  }
  if (!j.contains("num_frames")) fail("num_frames", "required field missing");

  AnnotationDoc doc;
  doc.num_frames = as_index(j["num_frames"], "num_frames");
  if (j.contains("keyframe_indices")) {
    const json& arr = j["keyframe_indices"];
    if (!arr.is_array()) fail("keyframe_indices", "expected an array");
    std::vector<std::size_t> idx;
    for (const json& v : arr) idx.push_back(as_index(v, "keyframe_indices"));
    doc.keyframe_indices = std::move(idx);
  }
  if (j.contains("importance_scores")) {
    const json& arr = j["importance_scores"];
    if (!arr.is_array()) fail("importance_scores", "expected an array");
    std::vector<float> scores;
    for (const json& v : arr) {
      if (!v.is_number()) fail("importance_scores", "expected numbers, got " + v.dump());
      scores.push_back(v.get<float>());
    }
    doc.importance_scores = std::move(scores);
  }
  if (j.contains("reference_summaries")) {
    const json& arr = j["reference_summaries"];
    if (!arr.is_array()) fail("reference_summaries", "expected an array of shot lists");
    std::vector<Summary> refs;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      refs.push_back(parse_shot_list(arr[i], doc.num_frames,
                                     "reference_summaries[" + std::to_string(i) + "]"));
    }
    doc.reference_summaries = std::move(refs);
  }
  if (j.contains("class_label")) {
    if (!j["class_label"].is_string()) fail("class_label", "expected a string");
    doc.class_label = j["class_label"].get<std::string>();
  }
  doc.validate();
  return doc;
}

std::string write_annotations(const AnnotationDoc& doc) {
  doc.validate();
  nlohmann::ordered_json j;
  j["num_frames"] = doc.num_frames;
  if (doc.keyframe_indices) j["keyframe_indices"] = *doc.keyframe_indices;
  if (doc.importance_scores) j["importance_scores"] = *doc.importance_scores;
  if (doc.reference_summaries) {
    nlohmann::ordered_json refs = nlohmann::ordered_json::array();
    for (const Summary& s : *doc.reference_summaries) refs.push_back(summary_to_json(s)["shots"]);
    j["reference_summaries"] = std::move(refs);
  }
  if (doc.class_label) j["class_label"] = *doc.class_label;
  return j.dump(2) + "\n";
}

nlohmann::ordered_json summary_to_json(const Summary& summary) {
  nlohmann::ordered_json j;
  j["num_frames"] = summary.num_frames;
  nlohmann::ordered_json shots = nlohmann::ordered_json::array();
  for (const Shot& s : summary.shots) shots.push_back({s.start, s.end});
  j["shots"] = std::move(shots);
  return j;
}

Summary summary_from_json(const json& j) {
  if (!j.is_object() || !j.contains("num_frames") || !j.contains("shots")) {
    throw ValidationError("summary JSON needs 'num_frames' and 'shots'");
  }
  for (const auto& [key, value] : j.items()) {
    if (key != "num_frames" && key != "shots") fail(key, "unknown summary field");
  }
  return parse_shot_list(j["shots"], as_index(j["num_frames"], "num_frames"), "shots");
}

Summary read_summary(std::string_view text) {
  try {
    return summary_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("summary JSON: ") + e.what());
  }
}

std::string write_summary(const Summary& summary) {
  summary.validate();
  return summary_to_json(summary).dump() + "\n";
}

}  // namespace okfe
