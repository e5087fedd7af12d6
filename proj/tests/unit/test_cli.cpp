#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdlib>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "okfe/fts.hpp"
#include "okfe/summarize.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using okfe::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result okfe_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("okfe_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

// Small videos keep the command tests fast.
std::vector<std::string> small_synth(const std::string& out, int count, int seed) {
  return {"synth", "--out", out, "--count", std::to_string(count), "--seed",
          std::to_string(seed), "--frames", "24", "--events", "1", "--height", "16",
          "--width", "16"};
}

const std::vector<std::string> kCommands{"synth", "extract", "train", "sweep", "summarize",
                                         "eval-summary", "train-classifier", "classify", "plot"};

}  // namespace

TEST_CASE("help lists every subcommand and succeeds") {
  const Result top = okfe_run({"--help"});
  CHECK(top.code == 0);
  for (const auto& c : kCommands) {
    CHECK(top.out.find(c) != std::string::npos);
    const Result sub = okfe_run({c, "--help"});
    CHECK(sub.code == 0);
    for (const char* flag : {"--seed", "--config", "--jobs", "--budget", "--aggregation",
                             "--alpha", "--beta", "--max-iter"}) {
      CAPTURE(c);
      CHECK(sub.out.find(flag) != std::string::npos);
    }
  }
  CHECK(okfe_run({"summarize", "--help"}).out.find("0.15") != std::string::npos);
}

TEST_CASE("every flag named in the README is in some --help") {
  std::string help;
  for (const auto& c : kCommands) help += okfe_run({c, "--help"}).out;
  const std::string readme = slurp(OKFE_README);
  REQUIRE_FALSE(readme.empty());
  const std::regex flag(R"((--[a-z][a-z0-9-]*))");
  std::set<std::string> flags;
  for (auto it = std::sregex_iterator(readme.begin(), readme.end(), flag); it != std::sregex_iterator(); ++it) {
    flags.insert((*it)[1]);
  }
  CHECK(flags.size() > 20);
  // cmake and ctest flags from the build instructions
  const std::set<std::string> build_tools{"--help", "--output-on-failure", "--test-dir", "--build",
                                          "--install", "--prefix"};
  for (const auto& f : flags) {
    if (build_tools.contains(f)) continue;
    CAPTURE(f);
    CHECK(std::regex_search(help, std::regex(f + "\\b")));
  }
}

TEST_CASE("exit codes") {
  TempDir tmp("exit");
  REQUIRE(okfe_run(small_synth(tmp / "v", 2, 1)).code == 0);

  SUBCASE("usage") {
    CHECK(okfe_run({}).code == 1);
    CHECK(okfe_run({"nonsense"}).code == 1);
    CHECK(okfe_run({"train", "--no-such-flag"}).code == 1);
    CHECK(okfe_run({"train", "--alpha", "1.5"}).code == 1);
    CHECK(okfe_run({"train", "--out", tmp / "m"}).code == 1);  // missing --data
    CHECK(okfe_run({"summarize", "--aggregation", "median"}).code == 1);
    CHECK(okfe_run({"extract", "--data", tmp / "v", "--model", "x", "--out", tmp / "e",
                    "--sample", "random:1.5"})
              .code == 1);
    spit(tmp / "bad.json", R"({"alpha": 0.5, "colour": "red"})");
    const Result r = okfe_run({"train", "--config", tmp / "bad.json"});
    CHECK(r.code == 1);
    CHECK(r.err.find("colour") != std::string::npos);
    spit(tmp / "broken.json", "{");
    CHECK(okfe_run({"train", "--config", tmp / "broken.json"}).code == 1);
  }
  SUBCASE("data") {
    CHECK(okfe_run({"train", "--data", tmp / "missing", "--out", tmp / "m"}).code == 2);
    fs::create_directories(tmp / "bad");
    spit(tmp / "bad/video_000.frames.fts", "FTS2garbage");
    CHECK(okfe_run({"train", "--data", tmp / "bad", "--out", tmp / "m"}).code == 2);
    auto frames = slurp(tmp / "v/video_000.frames.fts");
    spit(tmp / "bad/video_000.frames.fts", frames.substr(0, frames.size() / 2));
    const Result trunc = okfe_run({"train", "--data", tmp / "bad", "--out", tmp / "m"});
    CHECK(trunc.code == 2);
    CHECK(trunc.err.find("video_000.frames.fts") != std::string::npos);
    spit(tmp / "bad/video_000.frames.fts", frames);
    spit(tmp / "bad/video_000.json", R"({"num_frames": 24, "keyframe_indices": [99]})");
    CHECK(okfe_run({"train", "--data", tmp / "bad", "--out", tmp / "m"}).code == 2);
    spit(tmp / "model.okm", "OKM1");
    CHECK(okfe_run({"extract", "--data", tmp / "v", "--model", tmp / "model.okm", "--out",
                    tmp / "e"})
              .code == 2);
    CHECK(okfe_run({"eval-summary", "--pred", tmp / "none.json", "--ref", tmp / "none.json"}).code == 2);
  }
  SUBCASE("numerical") {
    const Result r = okfe_run({"train", "--data", tmp / "v", "--out", tmp / "m", "--epochs", "5",
                               "--lr", "1e38"});
    CHECK(r.code == 3);
    CHECK(r.err.find("epoch") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp / "m"));
  }
}

TEST_CASE("pipeline outputs are deterministic") {
  TempDir tmp("det");
  for (const char* run_name : {"a", "b"}) {
    const std::string d = tmp / run_name;
    REQUIRE(okfe_run(small_synth(d + "/train", 3, 5)).code == 0);
    REQUIRE(okfe_run(small_synth(d + "/test", 2, 6)).code == 0);
    REQUIRE(okfe_run({"train", "--data", d + "/train", "--out", d + "/m.okm", "--epochs", "2",
                      "--seed", "9", "--metrics", d + "/metrics.json"})
                .code == 0);
    REQUIRE(okfe_run({"extract", "--data", d + "/test", "--model", d + "/m.okm", "--out",
                      d + "/ex", "--sample", "random:0.30", "--seed", "4"})
                .code == 0);
    REQUIRE(okfe_run({"summarize", "--data", d + "/test", "--model", d + "/m.okm", "--out",
                      d + "/su"})
                .code == 0);
    REQUIRE(okfe_run({"plot", "--method", "okfe=" + d + "/su/video_000.summary.json",
                      "--reference", d + "/test/video_000.json", "--scores",
                      d + "/ex/video_000.keyframes.json", "--out", d + "/plot.svg"})
                .code == 0);
  }
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path other = tmp.path / "b" / fs::relative(e.path(), tmp.path / "a");
    CAPTURE(other.string());
    REQUIRE(fs::exists(other));
    CHECK(slurp(e.path().string()) == slurp(other.string()));
    ++compared;
  }
  CHECK(compared > 20);
  CHECK(slurp(tmp / "a/plot.svg").rfind("<svg", 0) == 0);

  SUBCASE("thread count does not change the model") {
    REQUIRE(okfe_run({"train", "--data", tmp / "a/train", "--out", tmp / "m3.okm", "--epochs",
                      "2", "--seed", "9", "--jobs", "3"})
                .code == 0);
    CHECK(slurp(tmp / "m3.okm") == slurp(tmp / "a/m.okm"));
  }
  SUBCASE("different seed, different data") {
    REQUIRE(okfe_run(small_synth(tmp / "c", 1, 7)).code == 0);
    CHECK(slurp(tmp / "c/video_000.frames.fts") != slurp(tmp / "a/train/video_000.frames.fts"));
  }
}

TEST_CASE("config file values yield to flags") {
  TempDir tmp("cfg");
  spit(tmp / "c.json", R"({"count": 2, "frames": 24, "events": 1, "height": 16, "width": 16})");
  REQUIRE(okfe_run({"synth", "--config", tmp / "c.json", "--out", tmp / "x"}).code == 0);
  CHECK(fs::exists(tmp / "x/video_001.frames.fts"));
  CHECK_FALSE(fs::exists(tmp / "x/video_002.frames.fts"));
  REQUIRE(okfe_run({"synth", "--config", tmp / "c.json", "--count", "3", "--out", tmp / "y"}).code == 0);
  CHECK(fs::exists(tmp / "y/video_002.frames.fts"));
  CHECK(okfe::read_fts_file(tmp / "y/video_000.frames.fts").shape()[0] == 24);
}

TEST_CASE("random frame sampling") {
  TempDir tmp("sample");
  REQUIRE(okfe_run({"synth", "--out", tmp / "v", "--count", "2", "--seed", "3"}).code == 0);
  REQUIRE(okfe_run({"train", "--data", tmp / "v", "--out", tmp / "m.okm", "--epochs", "1"}).code == 0);
  REQUIRE(okfe_run({"extract", "--data", tmp / "v", "--model", tmp / "m.okm", "--out", tmp / "e",
                    "--sample", "random:0.30", "--exclude-keyframes"})
              .code == 0);
  for (const char* name : {"video_000", "video_001"}) {
    const auto s = nlohmann::json::parse(slurp(tmp / (std::string("e/") + name + ".sample.json")));
    const auto k = nlohmann::json::parse(slurp(tmp / (std::string("e/") + name + ".keyframes.json")));
    const auto picked = s["frame_indices"].get<std::vector<std::size_t>>();
    const auto keys = k["keyframe_indices"].get<std::vector<std::size_t>>();
    CHECK(picked.size() == 19);  // floor(0.30 * 64)
    CHECK(std::is_sorted(picked.begin(), picked.end()));
    CHECK(std::adjacent_find(picked.begin(), picked.end()) == picked.end());
    for (std::size_t f : picked) CHECK(std::find(keys.begin(), keys.end(), f) == keys.end());
    CHECK(okfe::read_fts_file(tmp / (std::string("e/") + name + ".sample.fts")).shape()[0] == 19);
  }
}

TEST_CASE("eval-summary and sweep") {
  TempDir tmp("eval");
  REQUIRE(okfe_run(small_synth(tmp / "v", 2, 2)).code == 0);
  const Result same = okfe_run({"eval-summary", "--pred", tmp / "v/video_000.json", "--ref",
                                tmp / "v/video_000.json"});
  CHECK(same.code == 0);
  CHECK(same.out == "1.0000\n");

  const Result sweep = okfe_run({"sweep", "--data", tmp / "v", "--eval", tmp / "v", "--epochs",
                                 "1", "--out", tmp / "t.tsv", "--json", tmp / "t.json"});
  REQUIRE(sweep.code == 0);
  std::istringstream lines(slurp(tmp / "t.tsv"));
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  REQUIRE(rows.size() == 11);
  CHECK(rows[0] == "alpha\tbeta\tf_score\tkeyframe_ratio");
  CHECK(rows[1].rfind("0.20\t0.80\t", 0) == 0);
  CHECK(rows[6].rfind("0.60\t0.42\t", 0) == 0);
  CHECK(nlohmann::json::parse(slurp(tmp / "t.json")).size() == 10);
  const Result two = okfe_run({"sweep", "--data", tmp / "v", "--eval", tmp / "v", "--epochs",
                               "1", "--grid", "0.6:0.42,0.5:0.5"});
  CHECK(two.code == 0);
  CHECK(std::count(two.out.begin(), two.out.end(), '\n') == 3);
  CHECK(okfe_run({"sweep", "--data", tmp / "v", "--eval", tmp / "v", "--grid", "0.6"}).code == 1);
}

TEST_CASE("classifier commands") {
  TempDir tmp("cls");
  REQUIRE(okfe_run({"synth", "--kind", "classification", "--out", tmp / "c", "--classes", "3",
                    "--per-class", "6", "--seed", "2"})
              .code == 0);
  const Result tr = okfe_run({"train-classifier", "--features", tmp / "c/features.fts", "--labels",
                              tmp / "c/labels.json", "--vectors", tmp / "c/vectors.txt", "--out",
                              tmp / "p.okp", "--epochs", "5", "--log", tmp / "log.json"});
  REQUIRE(tr.code == 0);
  CHECK(tr.out.find("converged fraction") != std::string::npos);
  for (const auto& e : nlohmann::json::parse(slurp(tmp / "log.json"))) {
    CHECK(e["iterations"].get<int>() <= 10);
  }
  const Result cl = okfe_run({"classify", "--plugin", tmp / "p.okp", "--vectors",
                              tmp / "c/vectors.txt", "--features", tmp / "c/features.fts",
                              "--labels", tmp / "c/labels.json", "--out", tmp / "pred.json"});
  REQUIRE(cl.code == 0);
  CHECK(cl.out.find("accuracy") != std::string::npos);
  CHECK(nlohmann::json::parse(slurp(tmp / "pred.json")).size() == 18);
  CHECK(okfe_run({"classify", "--plugin", tmp / "c/labels.json", "--vectors",
                  tmp / "c/vectors.txt", "--features", tmp / "c/features.fts"})
            .code == 2);
}

TEST_CASE("timeline svg") {
  using okfe::Summary;
  using namespace okfe::cli;
  TimelinePlot plot;
  plot.title = "t";
  plot.rows = {{"first", Summary{{{0, 10}, {50, 60}}, 100}},
               {"second", Summary{{{20, 45}}, 100}},
               {"reference", Summary{{{5, 15}}, 100}}};
  const std::string svg = render_timeline_svg(plot);
  CHECK(svg == render_timeline_svg(plot));

  const std::regex rect(R"re(<rect class="shot" x="([0-9.]+)" y="([0-9.]+)" width="([0-9.]+)")re");
  std::vector<std::array<double, 3>> shots;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), rect); it != std::sregex_iterator(); ++it) {
    shots.push_back({std::stod((*it)[1]), std::stod((*it)[2]), std::stod((*it)[3])});
  }
  REQUIRE(shots.size() == 4);
  const double scale = kPlotWidth / 100.0;
  const std::vector<std::pair<int, int>> expected{{0, 10}, {50, 60}, {20, 45}, {5, 15}};
  for (std::size_t i = 0; i < shots.size(); ++i) {
    CHECK(shots[i][0] == doctest::Approx(kPlotLeft + expected[i].first * scale).epsilon(1e-6));
    CHECK(shots[i][2] == doctest::Approx((expected[i].second - expected[i].first) * scale).epsilon(1e-6));
  }
  CHECK(shots[0][1] == shots[1][1]);
  CHECK(shots[2][1] > shots[0][1]);
  CHECK(shots[3][1] > shots[2][1]);
  CHECK(svg.find("data-label=\"reference\"") != std::string::npos);

  TimelinePlot empty;
  empty.rows = {{"none", Summary{{}, 40}}};
  const std::string e = render_timeline_svg(empty);
  CHECK(e.find("class=\"shot\"") == std::string::npos);
  CHECK(e.find("class=\"track\"") != std::string::npos);

  TimelinePlot bad = plot;
  bad.rows[1].summary.num_frames = 90;
  bad.rows[1].summary.shots = {};
  CHECK_THROWS_AS(render_timeline_svg(bad), okfe::ShapeError);

  TimelinePlot curve = empty;
  curve.overlay = ScoreOverlay{std::vector<float>(40, 0.0f), {3, 7}};
  const std::string c = render_timeline_svg(curve);
  CHECK(c.find("<polyline") != std::string::npos);
  std::size_t ticks = 0;
  for (std::size_t p = c.find("class=\"keyframe\""); p != std::string::npos;
       p = c.find("class=\"keyframe\"", p + 1)) {
    ++ticks;
  }
  CHECK(ticks == 2);
}

TEST_CASE("binary entry point") {
  CHECK(std::system((std::string(OKFE_BIN) + " --help > /dev/null").c_str()) == 0);
  const int status = std::system((std::string(OKFE_BIN) + " train --alpha 7 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(status) == 1);
}
