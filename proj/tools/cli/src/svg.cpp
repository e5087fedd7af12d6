#include "svg.hpp"

#include <algorithm>
#include <cstdio>

#include "okfe/error.hpp"

namespace okfe::cli {

namespace {

constexpr double kTop = 36.0;
constexpr double kRowHeight = 18.0;
constexpr double kRowGap = 10.0;
constexpr double kCurveHeight = 80.0;

// Fixed-precision formatting, independent of the global locale.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_timeline_svg(const TimelinePlot& plot) {
  std::size_t frames = 0;
  for (const auto& row : plot.rows) {
    if (frames == 0) frames = row.summary.num_frames;
    if (row.summary.num_frames != frames) {
      throw ShapeError("plot: row '" + row.label + "' has " +
                       std::to_string(row.summary.num_frames) + " frames, expected " +
                       std::to_string(frames));
    }
    row.summary.validate();
  }
  if (plot.overlay) {
    if (frames == 0) frames = plot.overlay->scores.size();
    if (plot.overlay->scores.size() != frames) {
      throw ShapeError("plot: score curve has " + std::to_string(plot.overlay->scores.size()) +
                       " frames, expected " + std::to_string(frames));
    }
  }
  if (frames == 0) throw ShapeError("plot: nothing to draw");

  const double scale = kPlotWidth / static_cast<double>(frames);
  const double bars_bottom = kTop + static_cast<double>(plot.rows.size()) * (kRowHeight + kRowGap);
  const double height = bars_bottom + (plot.overlay ? kCurveHeight + 2 * kRowGap : 0.0) + 10.0;
  const double width = kPlotLeft + kPlotWidth + 20.0;

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
       num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kPlotLeft) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" +
       escape(plot.title) + " (" + std::to_string(frames) + " frames)</text>\n";

  double y = kTop;
  for (const auto& row : plot.rows) {
    s += "<g class=\"row\" data-label=\"" + escape(row.label) + "\">\n";
    s += "<text x=\"" + num(kPlotLeft - 8) + "\" y=\"" + num(y + 13) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" +
         escape(row.label) + "</text>\n";
    s += "<rect class=\"track\" x=\"" + num(kPlotLeft) + "\" y=\"" + num(y) + "\" width=\"" +
         num(kPlotWidth) + "\" height=\"" + num(kRowHeight) + "\" fill=\"#e6e6e6\"/>\n";
    for (const Shot& shot : row.summary.shots) {
      s += "<rect class=\"shot\" x=\"" + num(kPlotLeft + shot.start * scale) + "\" y=\"" +
           num(y) + "\" width=\"" + num(shot.length() * scale) + "\" height=\"" +
           num(kRowHeight) + "\" fill=\"black\"/>\n";
    }
    s += "</g>\n";
    y += kRowHeight + kRowGap;
  }

  if (plot.overlay) {
    const auto& sc = plot.overlay->scores;
    const auto [lo_it, hi_it] = std::minmax_element(sc.begin(), sc.end());
    const double lo = *lo_it, hi = *hi_it;
    const double span = hi > lo ? hi - lo : 1.0;
    const double top = bars_bottom + kRowGap;
    s += "<g class=\"scores\">\n";
    s += "<text x=\"" + num(kPlotLeft - 8) + "\" y=\"" + num(top + kCurveHeight / 2) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">score</text>\n";
    s += "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1\" points=\"";
    for (std::size_t f = 0; f < sc.size(); ++f) {
      const double px = kPlotLeft + (static_cast<double>(f) + 0.5) * scale;
      const double py = top + kCurveHeight * (1.0 - (sc[f] - lo) / span);
      s += (f ? " " : "") + num(px) + "," + num(py);
    }
    s += "\"/>\n";
    for (std::size_t k : plot.overlay->keyframes) {
      const double px = kPlotLeft + (static_cast<double>(k) + 0.5) * scale;
      s += "<line class=\"keyframe\" x1=\"" + num(px) + "\" y1=\"" + num(top + kCurveHeight) +
           "\" x2=\"" + num(px) + "\" y2=\"" + num(top + kCurveHeight + 6) +
           "\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n";
    }
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace okfe::cli
