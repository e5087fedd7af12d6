#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "okfe/annotations.hpp"
#include "okfe/summarize.hpp"
#include "okfe/tensor.hpp"

namespace okfe::cli {

namespace fs = std::filesystem;

// On-disk video: <name>.frames.fts [F, C, H, W], optional <name>.json
// annotation and optional <name>.features.fts [F, d] descriptors.
inline constexpr const char* kFramesSuffix = ".frames.fts";
inline constexpr const char* kFeaturesSuffix = ".features.fts";

struct VideoFiles {
  std::string name;
  fs::path frames;
  fs::path annotation;  // may not exist
  fs::path features;    // may not exist
};

// A directory lists every *.frames.fts inside it (sorted by name); a file
// path names a single video.
std::vector<VideoFiles> find_videos(const fs::path& path);

struct LoadedVideo {
  std::string name;
  std::vector<Tensor> frames;
  std::optional<AnnotationDoc> annotation;
  FrameFeatureSeq features;  // computed from the frames when no file exists
};

LoadedVideo load_video(const VideoFiles& files, bool need_annotation);

Tensor features_to_tensor(const FrameFeatureSeq& f);
FrameFeatureSeq tensor_to_features(const Tensor& t);

}  // namespace okfe::cli
