#include "okfe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "okfe/error.hpp"
#include "okfe/random.hpp"

namespace okfe {

void SynthConfig::validate() const {
  if (num_frames < 2) throw ConfigError("synth: num_frames must be >= 2");
  if (channels == 0 || height < 4 || width < 4) {
    throw ConfigError("synth: frames must have >= 1 channel and be at least 4x4");
  }
  if (num_events >= num_frames) throw ConfigError("synth: num_events must be < num_frames");
  if (!(noise_level >= 0.0)) throw ConfigError("synth: noise_level must be >= 0");
  if (!(motion >= 0.0)) throw ConfigError("synth: motion must be >= 0");
  if (num_events > 0 && kMinEventGap * (num_events + 1) + 2 > num_frames) {
    throw ConfigError("synth: " + std::to_string(num_events) + " events do not fit in " +
                      std::to_string(num_frames) + " frames with a gap of " +
                      std::to_string(kMinEventGap));
  }
}

namespace {

constexpr double kPopScale = 0.5;
constexpr double kSettle = 3.0;
constexpr double kRecolor = 0.15;
constexpr double kMaxBackground = 0.4;

struct Blob {
  std::vector<double> color;
  double row = 0.0;
  double col = 0.0;
  double v_row = 0.0;
  double v_col = 0.0;
  double radius = 0.0;
  std::size_t born = 0;
};

Blob random_blob(Rng& rng, const SynthConfig& cfg) {
  Blob b;
  for (std::size_t c = 0; c < cfg.channels; ++c) b.color.push_back(rng.uniform(0.55, 1.0));
  const double h = static_cast<double>(cfg.height);
  const double w = static_cast<double>(cfg.width);
  b.radius = rng.uniform(0.14, 0.2) * std::min(h, w);
  b.row = rng.uniform(b.radius, h - b.radius);
  b.col = rng.uniform(b.radius, w - b.radius);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double speed = cfg.motion * rng.uniform(0.5, 1.0);
  b.v_row = speed * std::sin(angle);
  b.v_col = speed * std::cos(angle);
  return b;
}

void move(Blob& b, const SynthConfig& cfg) {
  const double h = static_cast<double>(cfg.height);
  const double w = static_cast<double>(cfg.width);
  b.row += b.v_row;
  b.col += b.v_col;
  if (b.row < b.radius || b.row > h - b.radius) {
    b.v_row = -b.v_row;
    b.row = std::clamp(b.row, b.radius, h - b.radius);
  }
  if (b.col < b.radius || b.col > w - b.radius) {
    b.v_col = -b.v_col;
    b.col = std::clamp(b.col, b.radius, w - b.radius);
  }
}

std::vector<std::size_t> place_events(Rng& rng, const SynthConfig& cfg) {
  const std::size_t e = cfg.num_events;
  std::vector<std::size_t> events;
  if (e == 0) return events;
  // Last event leaves room for a short reference shot after it.
  const std::size_t slack = cfg.num_frames - 2 - kMinEventGap * (e + 1);
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < e; ++i) offsets.push_back(rng.below(slack + 1));
  std::sort(offsets.begin(), offsets.end());
  for (std::size_t i = 0; i < e; ++i) events.push_back(kMinEventGap * (i + 1) + offsets[i]);
  return events;
}

Summary reference_shots(const std::vector<std::size_t>& events, std::size_t num_frames) {
  Summary s;
  s.num_frames = num_frames;
  if (events.empty()) return s;
  const std::size_t len =
      std::max<std::size_t>(1, budget_frames(kDefaultBudget, num_frames) / events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    std::size_t start = events[i] - std::min(events[i], (len - 1) / 2);
    std::size_t end = std::min(start + len, num_frames);
    if (!s.shots.empty()) start = std::max(start, s.shots.back().end);
    if (i + 1 < events.size()) end = std::min(end, events[i + 1]);
    if (end > start) s.shots.push_back({start, end});
  }
  return s;
}

}  // namespace

FrameFeatureSeq frame_descriptors(const std::vector<Tensor>& frames) {
  constexpr std::size_t kGrid = 4;
  FrameFeatureSeq out;
  if (frames.empty()) return out;
  const std::size_t c_n = frames[0].channels();
  const std::size_t h = frames[0].height();
  const std::size_t w = frames[0].width();
  out.dim = c_n + kGrid * kGrid;
  for (const Tensor& f : frames) {
    if (f.shape() != frames[0].shape()) throw ShapeError("frame_descriptors: mixed frame shapes");
    for (std::size_t c = 0; c < c_n; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < f.plane_size(); ++i) sum += f.data()[c * f.plane_size() + i];
      out.values.push_back(static_cast<float>(sum / static_cast<double>(f.plane_size())));
    }
    for (std::size_t gr = 0; gr < kGrid; ++gr) {
      for (std::size_t gc = 0; gc < kGrid; ++gc) {
        const std::size_t r0 = gr * h / kGrid, r1 = (gr + 1) * h / kGrid;
        const std::size_t c0 = gc * w / kGrid, c1 = (gc + 1) * w / kGrid;
        double sum = 0.0;
        for (std::size_t c = 0; c < c_n; ++c) {
          for (std::size_t r = r0; r < r1; ++r) {
            for (std::size_t col = c0; col < c1; ++col) sum += f.at(c, r, col);
          }
        }
        const double count = static_cast<double>(c_n * (r1 - r0) * (c1 - c0));
        out.values.push_back(static_cast<float>(sum / count));
      }
    }
  }
  return out;
}

SynthVideo synth_video(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthVideo v;
  v.events = place_events(rng, cfg);
  v.gt.num_frames = cfg.num_frames;
  v.gt.keyframe_indices = v.events;
  v.reference = reference_shots(v.events, cfg.num_frames);

  const std::size_t h = cfg.height, w = cfg.width, c_n = cfg.channels;
  std::vector<double> bg;
  for (std::size_t c = 0; c < c_n; ++c) bg.push_back(rng.uniform(0.0, kMaxBackground));
  const double tex_freq = rng.uniform(0.2, 0.4);
  const double tex_speed = rng.uniform(0.05, 0.15);
  std::vector<Blob> blobs{random_blob(rng, cfg)};
  Rng noise_rng(derive_seed(cfg.seed, 1));

  std::size_t next_event = 0;
  for (std::size_t t = 0; t < cfg.num_frames; ++t) {
    if (next_event < v.events.size() && v.events[next_event] == t) {
      blobs.push_back(random_blob(rng, cfg));
      blobs.back().born = t;
      for (double& b : bg) {
        // Recolor by at least kRecolor per channel, reflected back into range.
        const double step = rng.uniform(kRecolor, 2.0 * kRecolor);
        b = b + step <= kMaxBackground ? b + step : b - step;
      }
      ++next_event;
    }
    Tensor frame(Shape{c_n, h, w});
    const double phase = tex_speed * static_cast<double>(t);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        const double tex = 0.04 * std::sin(tex_freq * (static_cast<double>(r) + 0.5 * col) + phase);
        std::vector<double> px(bg);
        for (double& p : px) p += tex;
        for (const Blob& b : blobs) {
          // A new blob pops in oversized and settles to its radius.
          const double age = static_cast<double>(t - b.born);
          const double radius =
              b.born == 0 ? b.radius
                          : b.radius * (1.0 + kPopScale * std::max(0.0, 1.0 - age / kSettle));
          const double dr = static_cast<double>(r) + 0.5 - b.row;
          const double dc = static_cast<double>(col) + 0.5 - b.col;
          // Soft edge one pixel wide keeps sub-pixel motion smooth.
          const double cover =
              std::clamp(radius + 0.5 - std::sqrt(dr * dr + dc * dc), 0.0, 1.0);
          if (cover <= 0.0) continue;
          for (std::size_t c = 0; c < c_n; ++c) px[c] += cover * (b.color[c] - px[c]);
        }
        for (std::size_t c = 0; c < c_n; ++c) {
          double value = px[c];
          if (cfg.noise_level > 0.0) value += cfg.noise_level * noise_rng.normal();
          frame.at(c, r, col) = static_cast<float>(value);
        }
      }
    }
    v.frames.push_back(std::move(frame));
    for (Blob& b : blobs) move(b, cfg);
  }
  v.features = frame_descriptors(v.frames);
  return v;
}

std::vector<SynthVideo> synth_suite(const SynthConfig& base, std::size_t count) {
  std::vector<SynthVideo> out;
  for (std::size_t i = 0; i < count; ++i) {
    SynthConfig cfg = base;
    cfg.seed = derive_seed(base.seed, i);
    out.push_back(synth_video(cfg));
  }
  return out;
}

TrainingSample to_training_sample(const SynthVideo& video) {
  return {video.frames, video.gt};
}

EvaluationVideo to_evaluation_video(const SynthVideo& video) {
  return {video.frames, video.gt, {video.reference}, video.features};
}

void ClassificationSynthConfig::validate() const {
  if (num_classes == 0) throw ConfigError("synth: num_classes must be >= 1");
  if (visual_dim == 0) throw ConfigError("synth: visual_dim must be >= 1");
  if (!(spread >= 0.0)) throw ConfigError("synth: spread must be >= 0");
}

ClassificationSet synth_classification(const ClassificationSynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ClassificationSet set;
  std::vector<std::vector<double>> centroids(cfg.num_classes);
  for (auto& c : centroids) {
    for (std::size_t i = 0; i < cfg.visual_dim; ++i) c.push_back(rng.normal());
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(kWordVectorDim));
  for (std::size_t k = 0; k < cfg.num_classes; ++k) {
    SemanticVector sv;
    sv.class_id = k;
    for (std::size_t i = 0; i < kWordVectorDim; ++i) {
      sv.values.push_back(static_cast<float>(scale * rng.normal()));
    }
    set.table.labels.push_back("class" + std::to_string(k));
    set.table.vectors.push_back(std::move(sv));
  }
  for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
      LabeledFeature lf;
      lf.label = k;
      for (double m : centroids[k]) {
        lf.feature.values.push_back(static_cast<float>(m + cfg.spread * rng.normal()));
      }
      set.samples.push_back(std::move(lf));
    }
  }
  return set;
}

}  // namespace okfe
