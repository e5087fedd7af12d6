#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "okfe/error.hpp"
#include "okfe/fts.hpp"
#include "okfe/model_io.hpp"
#include "okfe/parallel.hpp"
#include "okfe/random.hpp"
#include "okfe/recognizer.hpp"
#include "okfe/synth.hpp"
#include "okfe/training.hpp"
#include "svg.hpp"

namespace okfe::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Parsed flags of every subcommand. Only the fields a command reads matter.
struct RunConfig {
  // common
  std::uint64_t seed = 0;
  std::string config;
  std::size_t jobs = 1;
  double budget = kDefaultBudget;
  std::string aggregation = "mean";
  double alpha = 0.6;
  double beta = 0.42;
  int max_iter = 10;

  // paths
  std::string data, eval, out, model, plugin, pred, ref, features, labels, vectors, records,
      reference, scores, metrics, json_out, log;
  std::vector<std::string> methods;

  // synth
  std::string kind = "video";
  std::size_t count = 20;
  std::size_t frames = 64;
  std::size_t events = 3;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  double noise = 0.02;
  double motion = 0.05;
  std::size_t classes = 5;
  std::size_t per_class = 20;
  std::size_t visual_dim = 8;
  double spread = 0.15;

  // training
  int epochs = 30;
  double lr = 1e-4;
  double classifier_lr = 0.01;
  double momentum = 0.9;
  double decay = 0.96;
  int decay_every = 10;
  double tau = 1.0;
  double sigma = 1.0;
  double threshold_init = 0.1;
  std::size_t backbone_layers = 2;
  std::size_t backbone_channels = 16;
  std::string first_frame = "never";
  std::string grid;

  // summaries
  std::size_t max_segments = 24;
  double kts_penalty = 0.01;

  // extraction ablation
  std::string sample;
  bool exclude_keyframes = false;

  // recognizer
  int stability = 3;
  bool single_pass = false;

  std::string title = "summary timeline";
};

struct Context {
  RunConfig& cfg;
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------
// helpers

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required flag --") + flag);
}

SummaryProtocol protocol_of(const RunConfig& c) {
  SummaryProtocol p;
  p.budget = c.budget;
  p.max_segments = c.max_segments;
  p.kts_penalty = c.kts_penalty;
  p.aggregation = parse_aggregation(c.aggregation);
  return p;
}

LossConfig loss_of(const RunConfig& c) {
  LossConfig l{c.alpha, c.beta, c.tau, c.sigma};
  l.validate();
  return l;
}

OptimizerConfig opt_of(const RunConfig& c, double lr) {
  OptimizerConfig o{lr, c.momentum, c.decay, c.decay_every, c.epochs};
  o.validate();
  return o;
}

IttsConfig itts_of(const RunConfig& c) {
  IttsConfig i{c.max_iter, c.stability};
  i.validate();
  return i;
}

FirstFramePolicy first_frame_of(const std::string& s) {
  if (s == "never") return FirstFramePolicy::never_keyframe;
  if (s == "always") return FirstFramePolicy::always_keyframe;
  throw ConfigError("--first-frame must be never or always, got '" + s + "'");
}

std::vector<LoadedVideo> load_all(const std::string& path, bool need_annotation,
                                  std::size_t jobs) {
  const auto files = find_videos(path);
  std::vector<LoadedVideo> videos(files.size());
  parallel_for(files.size(), jobs,
               [&](std::size_t i) { videos[i] = load_video(files[i], need_annotation); });
  return videos;
}

GroundTruthKeyframes gt_of(const LoadedVideo& v) {
  if (!v.annotation || !v.annotation->keyframe_indices) {
    throw ValidationError(v.name + ": annotation lacks keyframe_indices");
  }
  return {*v.annotation->keyframe_indices, v.frames.size()};
}

EvaluationVideo eval_video_of(const LoadedVideo& v) {
  EvaluationVideo e;
  e.frames = v.frames;
  if (v.annotation) {
    if (v.annotation->keyframe_indices) e.gt = gt_of(v);
    if (v.annotation->reference_summaries) e.references = *v.annotation->reference_summaries;
  }
  e.features = v.features;
  return e;
}

fs::path out_dir(const RunConfig& c) {
  require(c.out, "out");
  fs::create_directories(c.out);
  return c.out;
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

struct Sampling {
  double fraction = 0.0;
};

Sampling parse_sample(const std::string& text) {
  const std::string prefix = "random:";
  if (text.rfind(prefix, 0) != 0) {
    throw ConfigError("--sample expects random:<fraction>, got '" + text + "'");
  }
  std::size_t used = 0;
  double f = 0;
  try {
    f = std::stod(text.substr(prefix.size()), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() - prefix.size() || !(f > 0.0 && f <= 1.0)) {
    throw ConfigError("--sample fraction must be in (0, 1], got '" + text + "'");
  }
  return {f};
}

// floor(fraction * F) frames drawn without replacement, returned sorted.
std::vector<std::size_t> sample_frames(std::size_t num_frames, double fraction,
                                       const std::vector<std::size_t>& excluded, Rng& rng) {
  std::set<std::size_t> skip(excluded.begin(), excluded.end());
  std::vector<std::size_t> pool;
  for (std::size_t f = 0; f < num_frames; ++f) {
    if (!skip.contains(f)) pool.push_back(f);
  }
  const std::size_t want = budget_frames(fraction, num_frames);
  rng.shuffle(pool.begin(), pool.end());
  pool.resize(std::min(want, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

Summary summary_or_reference(const fs::path& path) {
  const json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_object() && j.contains("shots")) return read_summary(read_text_file(path));
  const AnnotationDoc doc = read_annotations(read_text_file(path));
  if (!doc.reference_summaries || doc.reference_summaries->empty()) {
    throw ValidationError(path.string() + ": no reference_summaries");
  }
  return doc.reference_summaries->front();
}

// ---------------------------------------------------------------------------
// commands

int cmd_synth(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const fs::path dir = out_dir(c);
  if (c.kind == "classification") {
    ClassificationSynthConfig sc;
    sc.num_classes = c.classes;
    sc.samples_per_class = c.per_class;
    sc.visual_dim = c.visual_dim;
    sc.spread = c.spread;
    sc.seed = c.seed;
    const ClassificationSet set = synth_classification(sc);
    std::vector<float> values;
    ordered_json labels = ordered_json::array();
    for (const auto& s : set.samples) {
      values.insert(values.end(), s.feature.values.begin(), s.feature.values.end());
      labels.push_back(set.table.labels[s.label]);
    }
    write_fts_file(dir / "features.fts", Tensor(Shape{set.samples.size(), sc.visual_dim}, values));
    write_file_atomic(dir / "labels.json", dump(labels));
    write_file_atomic(dir / "vectors.txt", write_word_vectors(set.table));
    ctx.out << "wrote " << set.samples.size() << " samples, " << set.table.size()
            << " classes to " << dir.string() << "\n";
    return kOk;
  }
  if (c.kind != "video") throw ConfigError("--kind must be video or classification");
  SynthConfig sc;
  sc.num_frames = c.frames;
  sc.channels = c.channels;
  sc.height = c.height;
  sc.width = c.width;
  sc.num_events = c.events;
  sc.noise_level = c.noise;
  sc.motion = c.motion;
  sc.seed = c.seed;
  sc.validate();
  parallel_for(c.count, c.jobs, [&](std::size_t i) {
    SynthConfig vc = sc;
    vc.seed = derive_seed(c.seed, i);
    const SynthVideo v = synth_video(vc);
    char name[32];
    std::snprintf(name, sizeof name, "video_%03zu", i);
    write_fts_file(dir / (std::string(name) + kFramesSuffix), stack(v.frames));
    write_fts_file(dir / (std::string(name) + kFeaturesSuffix), features_to_tensor(v.features));
    AnnotationDoc doc;
    doc.num_frames = v.frames.size();
    doc.keyframe_indices = v.gt.keyframe_indices;
    doc.reference_summaries = std::vector<Summary>{v.reference};
    write_file_atomic(dir / (std::string(name) + ".json"), write_annotations(doc));
  });
  ctx.out << "wrote " << c.count << " videos to " << dir.string() << "\n";
  return kOk;
}

int cmd_train(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.data, "data");
  require(c.out, "out");
  const auto videos = load_all(c.data, true, c.jobs);
  std::vector<TrainingSample> samples;
  for (const auto& v : videos) samples.push_back({v.frames, gt_of(v)});
  const Shape& shape = videos.front().frames.front().shape();
  OkfemConfig mc;
  mc.channels = shape[0];
  mc.height = shape[1];
  mc.width = shape[2];
  mc.backbone_layers = c.backbone_layers;
  mc.backbone_channels = c.backbone_channels;
  mc.first_frame_policy = first_frame_of(c.first_frame);
  mc.threshold_init = c.threshold_init;
  const OptimizerConfig opt = opt_of(c, c.lr);
  const LossConfig loss = loss_of(c);
  const OkfemModel init = make_model(mc, c.seed);
  ordered_json log = ordered_json::array();
  const TrainResult result = train(init, samples, opt, loss, derive_seed(c.seed, 1),
                                   [&](const EpochMetrics& m) {
                                     ctx.out << "epoch " << m.epoch << " loss "
                                             << fmt("%.6f", m.mean_loss) << " keyframe_ratio "
                                             << fmt("%.4f", m.keyframe_ratio) << "\n";
                                     ctx.out.flush();
                                     log.push_back({{"epoch", m.epoch},
                                                    {"mean_loss", m.mean_loss},
                                                    {"keyframe_ratio", m.keyframe_ratio}});
                                   },
                                   c.jobs);
  save_model(c.out, result.model);
  if (!c.metrics.empty()) write_file_atomic(c.metrics, dump(log));
  ctx.out << "saved model to " << c.out << "\n";
  return kOk;
}

ordered_json record_index(const std::string& name, const ExtractionResult& ex) {
  ordered_json idx;
  idx["video"] = name;
  idx["num_frames"] = ex.num_frames;
  ordered_json frames = ordered_json::array(), scores = ordered_json::array();
  bool forced = false;
  for (const auto& r : ex.keyframes) {
    frames.push_back(r.frame_index);
    scores.push_back(r.score);
    forced = forced || r.forced;
  }
  idx["keyframe_indices"] = frames;
  idx["keyframe_scores"] = scores;
  idx["first_frame_forced"] = forced;
  idx["keyframe_ratio"] = ex.keyframe_ratio();
  idx["frame_scores"] = ex.scores;
  return idx;
}

void write_records(const fs::path& dir, const std::string& name, const ExtractionResult& ex,
                   const Shape& frame_shape) {
  const Shape map{1, frame_shape[1], frame_shape[2]};
  Tensor fm(Shape{0, map[0], map[1], map[2]}), fa(Shape{0, frame_shape[0], frame_shape[1], frame_shape[2]});
  if (!ex.keyframes.empty()) {
    std::vector<Tensor> a, b;
    for (const auto& r : ex.keyframes) {
      a.push_back(r.k_fm);
      b.push_back(r.k_fa);
    }
    fm = stack(a);
    fa = stack(b);
  }
  write_fts_file(dir / (name + ".kfm.fts"), fm);
  write_fts_file(dir / (name + ".kfa.fts"), fa);
}

int cmd_extract(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.data, "data");
  require(c.model, "model");
  std::optional<Sampling> sampling;
  if (!c.sample.empty()) sampling = parse_sample(c.sample);
  if (c.exclude_keyframes && !sampling) {
    throw ConfigError("--exclude-keyframes only applies with --sample");
  }
  const fs::path dir = out_dir(c);
  const OkfemModel model = load_model(c.model);
  const auto files = find_videos(c.data);
  std::vector<double> ratios(files.size());
  std::vector<std::string> lines(files.size());
  parallel_for(files.size(), c.jobs, [&](std::size_t i) {
    const LoadedVideo v = load_video(files[i], false);
    const ExtractionResult ex = extract_keyframes(v.frames, model);
    write_records(dir, v.name, ex, v.frames.front().shape());
    write_file_atomic(dir / (v.name + ".keyframes.json"), dump(record_index(v.name, ex)));
    ratios[i] = ex.keyframe_ratio();
    lines[i] = v.name + " keyframes " + std::to_string(ex.keyframes.size()) + "/" +
               std::to_string(ex.num_frames) + " ratio " + fmt("%.4f", ratios[i]);
    if (sampling) {
      std::vector<std::size_t> excluded;
      if (c.exclude_keyframes) {
        for (const auto& r : ex.keyframes) excluded.push_back(static_cast<std::size_t>(r.frame_index));
      }
      Rng rng(derive_seed(c.seed, i));
      const auto picked = sample_frames(v.frames.size(), sampling->fraction, excluded, rng);
      std::vector<Tensor> chosen;
      for (std::size_t f : picked) chosen.push_back(v.frames[f]);
      const Shape& fs = v.frames.front().shape();
      write_fts_file(dir / (v.name + ".sample.fts"),
                     chosen.empty() ? Tensor(Shape{0, fs[0], fs[1], fs[2]}) : stack(chosen));
      ordered_json s;
      s["video"] = v.name;
      s["num_frames"] = v.frames.size();
      s["fraction"] = sampling->fraction;
      s["exclude_keyframes"] = c.exclude_keyframes;
      s["frame_indices"] = picked;
      write_file_atomic(dir / (v.name + ".sample.json"), dump(s));
      lines[i] += " sampled " + std::to_string(picked.size());
    }
  });
  for (const auto& l : lines) ctx.out << l << "\n";
  const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / ratios.size();
  ctx.out << "mean keyframe ratio " << fmt("%.4f", mean) << "\n";
  return kOk;
}

int cmd_summarize(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.data, "data");
  require(c.model, "model");
  const fs::path dir = out_dir(c);
  const OkfemModel model = load_model(c.model);
  const SummaryProtocol proto = protocol_of(c);
  const auto files = find_videos(c.data);
  std::vector<std::string> lines(files.size());
  parallel_for(files.size(), c.jobs, [&](std::size_t i) {
    const LoadedVideo v = load_video(files[i], false);
    EvaluationVideo ev = eval_video_of(v);
    ev.references.clear();
    const VideoEvaluation res = evaluate_video(model, ev, proto);
    write_file_atomic(dir / (v.name + ".summary.json"), write_summary(res.summary));
    lines[i] = v.name + " shots " + std::to_string(res.summary.shots.size()) + " frames " +
               std::to_string(res.summary.total_length()) + "/" +
               std::to_string(res.summary.num_frames) + " keyframes " +
               std::to_string(res.keyframes.size());
  });
  for (const auto& l : lines) ctx.out << l << "\n";
  return kOk;
}

int cmd_eval_summary(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.pred, "pred");
  require(c.ref, "ref");
  const Aggregation agg = parse_aggregation(c.aggregation);
  auto refs_of = [](const fs::path& p) {
    const json j = json::parse(read_text_file(p), nullptr, false);
    if (j.is_object() && j.contains("shots")) return std::vector<Summary>{read_summary(read_text_file(p))};
    const AnnotationDoc doc = read_annotations(read_text_file(p));
    if (!doc.reference_summaries || doc.reference_summaries->empty()) {
      throw ValidationError(p.string() + ": no reference_summaries");
    }
    return *doc.reference_summaries;
  };
  if (!fs::is_directory(c.pred)) {
    const Summary pred = summary_or_reference(c.pred);
    ctx.out << fmt("%.4f", f_score(pred, refs_of(c.ref), agg)) << "\n";
    return kOk;
  }
  const std::string suffix = ".summary.json";
  std::vector<std::pair<std::string, fs::path>> preds;
  for (const auto& e : fs::directory_iterator(c.pred)) {
    const std::string f = e.path().filename().string();
    if (f.size() > suffix.size() && f.ends_with(suffix)) {
      preds.emplace_back(f.substr(0, f.size() - suffix.size()), e.path());
    }
  }
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw FormatError(c.pred + ": no *.summary.json files");
  ordered_json table = ordered_json::array();
  double total = 0;
  for (const auto& [name, path] : preds) {
    const fs::path ref = fs::path(c.ref) / (name + ".json");
    if (!fs::exists(ref)) throw Error(ref.string() + ": reference annotation missing");
    const double f = f_score(read_summary(read_text_file(path)), refs_of(ref), agg);
    total += f;
    table.push_back({{"video", name}, {"f_score", f}});
    ctx.out << name << "\t" << fmt("%.4f", f) << "\n";
  }
  const double mean = total / static_cast<double>(preds.size());
  ctx.out << "mean\t" << fmt("%.4f", mean) << "\n";
  if (!c.json_out.empty()) {
    ordered_json j{{"aggregation", c.aggregation}, {"mean_f_score", mean}, {"videos", table}};
    write_file_atomic(c.json_out, dump(j));
  }
  return kOk;
}

std::vector<std::pair<double, double>> parse_grid(const std::string& text) {
  if (text.empty()) return default_alpha_beta_grid();
  std::vector<std::pair<double, double>> grid;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    const std::size_t colon = item.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(item);
      std::size_t u1 = 0, u2 = 0;
      const double a = std::stod(item.substr(0, colon), &u1);
      const double b = std::stod(item.substr(colon + 1), &u2);
      if (u1 != colon || u2 != item.size() - colon - 1) throw std::invalid_argument(item);
      grid.emplace_back(a, b);
    } catch (const std::exception&) {
      throw ConfigError("--grid expects alpha:beta pairs separated by commas, got '" + item + "'");
    }
    pos = end + 1;
  }
  return grid;
}

int cmd_sweep(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.data, "data");
  require(c.eval, "eval");
  const auto grid = parse_grid(c.grid);
  const auto train_videos = load_all(c.data, true, c.jobs);
  const auto eval_videos = load_all(c.eval, true, c.jobs);
  std::vector<TrainingSample> train_set;
  for (const auto& v : train_videos) train_set.push_back({v.frames, gt_of(v)});
  std::vector<EvaluationVideo> eval_set;
  for (const auto& v : eval_videos) eval_set.push_back(eval_video_of(v));

  SweepSetup setup;
  const Shape& shape = train_videos.front().frames.front().shape();
  setup.model_config.channels = shape[0];
  setup.model_config.height = shape[1];
  setup.model_config.width = shape[2];
  setup.model_config.backbone_layers = c.backbone_layers;
  setup.model_config.backbone_channels = c.backbone_channels;
  setup.model_config.first_frame_policy = first_frame_of(c.first_frame);
  setup.model_config.threshold_init = c.threshold_init;
  setup.opt = opt_of(c, c.lr);
  setup.loss = loss_of(c);
  setup.protocol = protocol_of(c);
  setup.seed = c.seed;
  setup.jobs = c.jobs;
  const auto results = sweep_alpha_beta(grid, train_set, eval_set, setup);
  const std::string tsv = sweep_table_tsv(results);
  ctx.out << tsv;
  if (!c.out.empty()) write_file_atomic(c.out, tsv);
  if (!c.json_out.empty()) write_file_atomic(c.json_out, sweep_table_json(results));
  return kOk;
}

std::vector<std::string> read_label_list(const std::string& path) {
  const json j = json::parse(read_text_file(path), nullptr, false);
  if (!j.is_array()) throw ValidationError(path + ": expected a JSON array of class labels");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ValidationError(path + ": labels must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<VisualFeature> read_feature_rows(const std::string& path) {
  const Tensor t = read_fts_file(path);
  if (t.rank() != 2) throw ShapeError(path + ": expected [N, d], got " + to_string(t.shape()));
  std::vector<VisualFeature> rows;
  const std::size_t d = t.shape()[1];
  for (std::size_t i = 0; i < t.shape()[0]; ++i) {
    rows.push_back({std::vector<float>(t.values().begin() + i * d, t.values().begin() + (i + 1) * d)});
  }
  return rows;
}

// Rows from --features, or one pooled row per keyframe record prefix.
std::vector<std::pair<std::string, VisualFeature>> classify_inputs(const RunConfig& c) {
  std::vector<std::pair<std::string, VisualFeature>> out;
  if (!c.features.empty()) {
    const auto rows = read_feature_rows(c.features);
    for (std::size_t i = 0; i < rows.size(); ++i) out.emplace_back(std::to_string(i), rows[i]);
    return out;
  }
  require(c.records, "features or --records");
  const Tensor fm = read_fts_file(c.records + ".kfm.fts");
  const Tensor fa = read_fts_file(c.records + ".kfa.fts");
  if (fm.rank() != 4 || fa.rank() != 4 || fm.shape()[0] != fa.shape()[0]) {
    throw ShapeError(c.records + ": k_fm " + to_string(fm.shape()) + " and k_fa " +
                     to_string(fa.shape()) + " do not pair up");
  }
  const auto a = unstack(fm), b = unstack(fa);
  std::vector<KeyframeRecord> recs(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    recs[i].k_fm = a[i];
    recs[i].k_fa = b[i];
  }
  out.emplace_back(fs::path(c.records).filename().string(), pool_keyframes(recs));
  return out;
}

int cmd_train_classifier(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.features, "features");
  require(c.labels, "labels");
  require(c.vectors, "vectors");
  require(c.out, "out");
  const auto rows = read_feature_rows(c.features);
  const auto labels = read_label_list(c.labels);
  if (labels.size() != rows.size()) {
    throw ValidationError(c.labels + ": " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(rows.size()) + " feature rows");
  }
  const WordVectorTable table = read_word_vectors(read_text_file(c.vectors));
  std::vector<LabeledFeature> data;
  for (std::size_t i = 0; i < rows.size(); ++i) data.push_back({rows[i], table.class_of(labels[i])});
  const PluginParams init = make_plugin(rows.front().values.size(), table.size(), c.seed);
  const IttsTrainResult r =
      itts_train(init, data, table, itts_of(c), opt_of(c, c.classifier_lr), derive_seed(c.seed, 1));
  save_plugin(c.out, {r.params, table.labels});
  if (!c.log.empty()) {
    ordered_json log = ordered_json::array();
    for (const auto& e : r.log) {
      log.push_back({{"epoch", e.epoch}, {"sample", e.sample}, {"iterations", e.iterations},
                     {"converged", e.converged}, {"labels", e.labels}});
    }
    write_file_atomic(c.log, dump(log));
  }
  const auto report = evaluate_recognizer(r.params, data, table, itts_of(c), !c.single_pass);
  ctx.out << "converged fraction " << fmt("%.4f", r.converged_fraction()) << "\n"
          << "training accuracy " << fmt("%.4f", report.accuracy) << "\n"
          << "saved classifier to " << c.out << "\n";
  return kOk;
}

int cmd_classify(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.plugin, "plugin");
  require(c.vectors, "vectors");
  const PluginBundle bundle = load_plugin(c.plugin);
  const WordVectorTable full = read_word_vectors(read_text_file(c.vectors));
  // Class vectors in the plugin's class order.
  WordVectorTable table;
  for (std::size_t k = 0; k < bundle.labels.size(); ++k) {
    table.labels.push_back(bundle.labels[k]);
    table.vectors.push_back({full.at(full.class_of(bundle.labels[k])).values, k});
  }
  const auto inputs = classify_inputs(c);
  const IttsConfig itts = itts_of(c);
  std::vector<PredictionRecord> preds(inputs.size());
  parallel_for(inputs.size(), c.jobs, [&](std::size_t i) {
    preds[i] = c.single_pass ? single_pass_test(bundle.params, inputs[i].second, table)
                             : itts_test(bundle.params, inputs[i].second, table, itts);
  });
  std::optional<std::vector<std::string>> truth;
  if (!c.labels.empty()) {
    truth = read_label_list(c.labels);
    if (truth->size() != inputs.size()) throw ValidationError(c.labels + ": label count mismatch");
  }
  ordered_json out = ordered_json::array();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string& label = bundle.labels[preds[i].label];
    int iterations = 0;
    for (const auto& r : preds[i].runs) iterations = std::max(iterations, r.iterations);
    ctx.out << inputs[i].first << "\t" << label << "\n";
    out.push_back({{"input", inputs[i].first}, {"label", label},
                   {"converged", preds[i].converged}, {"max_iterations_used", iterations}});
    if (truth) correct += (*truth)[i] == label ? 1 : 0;
  }
  if (truth) {
    ctx.out << "accuracy " << fmt("%.4f", static_cast<double>(correct) / inputs.size()) << "\n";
  }
  if (!c.out.empty()) write_file_atomic(c.out, dump(out));
  return kOk;
}

int cmd_plot(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  require(c.out, "out");
  TimelinePlot plot;
  plot.title = c.title;
  for (const std::string& m : c.methods) {
    const std::size_t eq = m.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--method expects NAME=PATH, got '" + m + "'");
    }
    plot.rows.push_back({m.substr(0, eq), read_summary(read_text_file(m.substr(eq + 1)))});
  }
  if (!c.reference.empty()) plot.rows.push_back({"reference", summary_or_reference(c.reference)});
  if (!c.scores.empty()) {
    const json j = json::parse(read_text_file(c.scores), nullptr, false);
    if (!j.is_object() || !j.contains("frame_scores") || !j.contains("keyframe_indices")) {
      throw ValidationError(c.scores + ": expected an extract index with frame_scores");
    }
    plot.overlay = ScoreOverlay{j["frame_scores"].get<std::vector<float>>(),
                                j["keyframe_indices"].get<std::vector<std::size_t>>()};
  }
  if (plot.rows.empty() && !plot.overlay) {
    throw ConfigError("plot needs at least one --method, --reference or --scores");
  }
  write_file_atomic(c.out, render_timeline_svg(plot));
  ctx.out << "wrote " << c.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// argument parsing

void add_common(CLI::App* app, RunConfig& c) {
  app->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  app->add_option("--config", c.config, "Flat JSON file of option values; flags win");
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--budget", c.budget, "Summary length as a fraction of the video")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app->add_option("--aggregation", c.aggregation, "F-score over several references")
      ->check(CLI::IsMember({"mean", "max"}))->capture_default_str();
  app->add_option("--alpha", c.alpha, "Selection error weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app->add_option("--beta", c.beta, "Score reward weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app->add_option("--max-iter", c.max_iter, "Iteration cap of the iterative classifier")
      ->check(CLI::PositiveNumber)->capture_default_str();
}

void add_training(CLI::App* app, RunConfig& c, double& lr) {
  app->add_option("--epochs", c.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--lr", lr, "Learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  app->add_option("--momentum", c.momentum, "SGD momentum")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app->add_option("--decay", c.decay, "Learning rate decay factor")->capture_default_str();
  app->add_option("--decay-every", c.decay_every, "Epochs between decays")
      ->check(CLI::PositiveNumber)->capture_default_str();
}

void add_model(CLI::App* app, RunConfig& c) {
  app->add_option("--tau", c.tau, "Surrogate gate temperature")->capture_default_str();
  app->add_option("--sigma", c.sigma, "Score reward scale")->capture_default_str();
  app->add_option("--threshold-init", c.threshold_init, "Initial sum of the threshold map")
      ->capture_default_str();
  app->add_option("--backbone-layers", c.backbone_layers, "Plain conv layers before the deformable layer")
      ->capture_default_str();
  app->add_option("--backbone-channels", c.backbone_channels, "Channels of the conv layers")
      ->capture_default_str();
  app->add_option("--first-frame", c.first_frame, "First frame policy")
      ->check(CLI::IsMember({"never", "always"}))->capture_default_str();
}

void add_protocol(CLI::App* app, RunConfig& c) {
  app->add_option("--max-segments", c.max_segments, "Upper bound on segments per video")
      ->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--kts-penalty", c.kts_penalty, "Change point penalty")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
}

struct Command {
  CLI::App* app;
  int (*fn)(Context&);
};

std::map<std::string, Command> build(CLI::App& root, RunConfig& c) {
  std::map<std::string, Command> cmds;
  auto add = [&](const char* name, const char* help, int (*fn)(Context&)) {
    CLI::App* sub = root.add_subcommand(name, help);
    add_common(sub, c);
    cmds[name] = {sub, fn};
    return sub;
  };

  auto* synth = add("synth", "Write a synthetic video suite or classification set", cmd_synth);
  synth->add_option("--out", c.out, "Output directory");
  synth->add_option("--kind", c.kind, "What to generate")
      ->check(CLI::IsMember({"video", "classification"}))->capture_default_str();
  synth->add_option("--count", c.count, "Number of videos")->capture_default_str();
  synth->add_option("--frames", c.frames, "Frames per video")->capture_default_str();
  synth->add_option("--events", c.events, "Planted events per video")->capture_default_str();
  synth->add_option("--channels", c.channels, "Frame channels")->capture_default_str();
  synth->add_option("--height", c.height, "Frame height")->capture_default_str();
  synth->add_option("--width", c.width, "Frame width")->capture_default_str();
  synth->add_option("--noise", c.noise, "Gaussian noise level")->capture_default_str();
  synth->add_option("--motion", c.motion, "Peak blob speed in pixels per frame")->capture_default_str();
  synth->add_option("--classes", c.classes, "Classes (classification kind)")->capture_default_str();
  synth->add_option("--per-class", c.per_class, "Samples per class (classification kind)")
      ->capture_default_str();
  synth->add_option("--visual-dim", c.visual_dim, "Feature size (classification kind)")
      ->capture_default_str();
  synth->add_option("--spread", c.spread, "Within-class spread (classification kind)")
      ->capture_default_str();

  auto* tr = add("train", "Train the keyframe extractor", cmd_train);
  tr->add_option("--data", c.data, "Training video directory");
  tr->add_option("--out", c.out, "Model file to write");
  tr->add_option("--metrics", c.metrics, "Per-epoch metrics JSON");
  add_training(tr, c, c.lr);
  add_model(tr, c);

  auto* ex = add("extract", "Stream videos through a model and write keyframe records", cmd_extract);
  ex->add_option("--data", c.data, "Video directory or *.frames.fts file");
  ex->add_option("--model", c.model, "Model file");
  ex->add_option("--out", c.out, "Output directory");
  ex->add_option("--sample", c.sample, "Also draw random frames, e.g. random:0.30");
  ex->add_flag("--exclude-keyframes", c.exclude_keyframes, "Random frames avoid extracted keyframes");

  auto* sw = add("sweep", "Train and evaluate over a grid of alpha/beta pairs", cmd_sweep);
  sw->add_option("--data", c.data, "Training video directory");
  sw->add_option("--eval", c.eval, "Evaluation video directory");
  sw->add_option("--grid", c.grid, "alpha:beta pairs, comma separated (default: the ten-pair grid)");
  sw->add_option("--out", c.out, "TSV table to write");
  sw->add_option("--json", c.json_out, "JSON table to write");
  add_training(sw, c, c.lr);
  add_model(sw, c);
  add_protocol(sw, c);

  auto* su = add("summarize", "Build key-shot summaries from extracted keyframes", cmd_summarize);
  su->add_option("--data", c.data, "Video directory or *.frames.fts file");
  su->add_option("--model", c.model, "Model file");
  su->add_option("--out", c.out, "Output directory for *.summary.json");
  add_protocol(su, c);

  auto* es = add("eval-summary", "F-score of summaries against references", cmd_eval_summary);
  es->add_option("--pred", c.pred, "Summary JSON or directory of *.summary.json");
  es->add_option("--ref", c.ref, "Reference summary / annotation JSON, or their directory");
  es->add_option("--json", c.json_out, "Per-video scores as JSON");

  auto* tc = add("train-classifier", "Train the iterative word-vector classifier", cmd_train_classifier);
  tc->add_option("--features", c.features, "Visual features [N, d] as FTS1");
  tc->add_option("--labels", c.labels, "JSON array with one class label per row");
  tc->add_option("--vectors", c.vectors, "Word vector text file");
  tc->add_option("--out", c.out, "Classifier file to write");
  tc->add_option("--stability", c.stability, "Identical labels in a row that stop iterating")
      ->check(CLI::PositiveNumber)->capture_default_str();
  tc->add_option("--log", c.log, "Per-sample training log JSON");
  tc->add_flag("--single-pass", c.single_pass, "Report accuracy with one pass per class vector");
  add_training(tc, c, c.classifier_lr);

  auto* cl = add("classify", "Classify pooled keyframe features", cmd_classify);
  cl->add_option("--plugin", c.plugin, "Classifier file");
  cl->add_option("--vectors", c.vectors, "Word vector text file");
  cl->add_option("--features", c.features, "Visual features [N, d] as FTS1");
  cl->add_option("--records", c.records, "Keyframe record prefix written by extract (<dir>/<video>)");
  cl->add_option("--labels", c.labels, "Optional true labels for an accuracy line");
  cl->add_option("--out", c.out, "Predictions JSON");
  cl->add_option("--stability", c.stability, "Identical labels in a row that stop iterating")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cl->add_flag("--single-pass", c.single_pass, "One pass per class vector instead of iterating");

  auto* pl = add("plot", "Draw summaries as an SVG timeline", cmd_plot);
  pl->add_option("--method", c.methods, "NAME=summary.json, repeatable");
  pl->add_option("--reference", c.reference, "Reference summary or annotation JSON");
  pl->add_option("--scores", c.scores, "Extract index JSON for the score curve");
  pl->add_option("--out", c.out, "SVG file to write");
  pl->add_option("--title", c.title, "Plot title")->capture_default_str();
  return cmds;
}

bool user_gave(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::optional<std::string> config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

// Turns the flat JSON document into flags for `sub`, skipping options the
// user passed explicitly.
std::vector<std::string> config_args(const std::string& path, CLI::App* sub,
                                     const std::vector<std::string>& user) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a flat JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || flag == "--config" || flag == "--help") {
      throw ConfigError(path + ": unknown key '" + key + "' for " + sub->get_name());
    }
    if (user_gave(user, flag)) continue;
    auto scalar = [&](const json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number() || v.is_boolean()) return v.dump();
      throw ConfigError(path + ": key '" + key + "' must be a string, number or boolean");
    };
    if (opt->get_expected_max() == 0) {  // flag
      if (!value.is_boolean()) throw ConfigError(path + ": key '" + key + "' must be true or false");
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        out.push_back(flag);
        out.push_back(scalar(v));
      }
    } else {
      out.push_back(flag);
      out.push_back(scalar(value));
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App root("Online keyframe extraction, video summarization and keyframe recognition.",
                "okfe");
  root.require_subcommand(1);
  const auto cmds = build(root, cfg);

  std::vector<std::string> argv = args;
  try {
    if (!argv.empty() && cmds.contains(argv[0])) {
      if (const auto path = config_path(argv)) {
        const auto extra = config_args(*path, cmds.at(argv[0]).app, argv);
        argv.insert(argv.begin() + 1, extra.begin(), extra.end());
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    root.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << root.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    const int code = root.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (const auto& [name, cmd] : cmds) {
    if (!cmd.app->parsed()) continue;
    Context ctx{cfg, out, err};
    try {
      return cmd.fn(ctx);
    } catch (const NumericalError& e) {
      err << "numerical failure: " << e.what() << "\n";
      return kNumerical;
    } catch (const ConfigError& e) {
      err << "usage error: " << e.what() << "\n";
      return kUsage;
    } catch (const Error& e) {
      err << "data error: " << e.what() << "\n";
      return kData;
    } catch (const json::exception& e) {
      err << "data error: " << e.what() << "\n";
      return kData;
    } catch (const std::filesystem::filesystem_error& e) {
      err << "data error: " << e.what() << "\n";
      return kData;
    }
  }
  return kUsage;
}

}  // namespace okfe::cli
