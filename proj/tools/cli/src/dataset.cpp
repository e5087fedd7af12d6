#include "dataset.hpp"

#include <algorithm>

#include "okfe/error.hpp"
#include "okfe/fts.hpp"
#include "okfe/synth.hpp"

namespace okfe::cli {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

VideoFiles files_for(const fs::path& frames) {
  const std::string file = frames.filename().string();
  VideoFiles v;
  v.name = file.substr(0, file.size() - std::string(kFramesSuffix).size());
  v.frames = frames;
  v.annotation = frames.parent_path() / (v.name + ".json");
  v.features = frames.parent_path() / (v.name + kFeaturesSuffix);
  return v;
}

}  // namespace

std::vector<VideoFiles> find_videos(const fs::path& path) {
  std::vector<VideoFiles> out;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && ends_with(entry.path().filename().string(), kFramesSuffix)) {
        out.push_back(files_for(entry.path()));
      }
    }
    std::sort(out.begin(), out.end(),
              [](const VideoFiles& a, const VideoFiles& b) { return a.name < b.name; });
    if (out.empty()) throw FormatError(path.string() + ": no *" + kFramesSuffix + " files");
  } else if (fs::is_regular_file(path) && ends_with(path.filename().string(), kFramesSuffix)) {
    out.push_back(files_for(path));
  } else {
    throw Error(path.string() + ": not a directory or *" + kFramesSuffix + " file");
  }
  return out;
}

LoadedVideo load_video(const VideoFiles& files, bool need_annotation) {
  LoadedVideo v;
  v.name = files.name;
  const Tensor stacked = read_fts_file(files.frames);
  if (stacked.rank() != 4) {
    throw ShapeError(files.frames.string() + ": expected [F, C, H, W], got " +
                     to_string(stacked.shape()));
  }
  v.frames = unstack(stacked);
  if (fs::exists(files.annotation)) {
    try {
      v.annotation = read_annotations(read_text_file(files.annotation));
    } catch (const FormatError& e) {
      throw ValidationError(files.annotation.string() + ": " + e.what());
    }
    if (v.annotation->num_frames != v.frames.size()) {
      throw ValidationError(files.annotation.string() + ": num_frames " +
                            std::to_string(v.annotation->num_frames) + " but the video has " +
                            std::to_string(v.frames.size()) + " frames");
    }
  } else if (need_annotation) {
    throw Error(files.annotation.string() + ": annotation file missing");
  }
  if (fs::exists(files.features)) {
    v.features = tensor_to_features(read_fts_file(files.features));
    if (v.features.num_frames() != v.frames.size()) {
      throw ShapeError(files.features.string() + ": " + std::to_string(v.features.num_frames()) +
                       " rows for " + std::to_string(v.frames.size()) + " frames");
    }
  } else {
    v.features = frame_descriptors(v.frames);
  }
  return v;
}

Tensor features_to_tensor(const FrameFeatureSeq& f) {
  return Tensor(Shape{f.num_frames(), f.dim}, f.values);
}

FrameFeatureSeq tensor_to_features(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("features: expected [F, d], got " + to_string(t.shape()));
  FrameFeatureSeq f{t.shape()[1], std::vector<float>(t.values().begin(), t.values().end())};
  f.validate();
  return f;
}

}  // namespace okfe::cli
