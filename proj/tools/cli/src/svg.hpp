#pragma once

#include <optional>
#include <string>
#include <vector>

#include "okfe/summarize.hpp"

namespace okfe::cli {

struct TimelineRow {
  std::string label;
  Summary summary;
};

// Per-frame score curve drawn under the bars, keyframes as tick marks.
struct ScoreOverlay {
  std::vector<float> scores;
  std::vector<std::size_t> keyframes;
};

struct TimelinePlot {
  std::string title;
  std::vector<TimelineRow> rows;  // drawn top to bottom
  std::optional<ScoreOverlay> overlay;
};

inline constexpr double kPlotLeft = 120.0;
inline constexpr double kPlotWidth = 640.0;

// One horizontal bar per row with a filled block per shot. Block x-extents
// are kPlotLeft + kPlotWidth * frame / num_frames. Identical input gives
// identical bytes. Throws ShapeError when rows disagree on the frame count.
std::string render_timeline_svg(const TimelinePlot& plot);

}  // namespace okfe::cli
