#include "gdmd/io.hpp"
#include "gdmd/pipeline.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <unistd.h>

using namespace gdmd;
namespace fs = std::filesystem;
namespace pl = gdmd::pipeline;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("gdmd_pipeline_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct EnvVar {
  std::string name;
  EnvVar(const char* n, const char* value) : name(n) { ::setenv(n, value, 1); }
  ~EnvVar() { ::unsetenv(name.c_str()); }
};

fs::path write_config(const fs::path& dir, const pl::json& cfg) {
  const fs::path p = dir / "config.json";
  io::write_text(p, cfg.dump());
  return p;
}

pl::json parse_error(const std::string& err) {
  REQUIRE(!err.empty());
  return pl::json::parse(err.substr(0, err.find('\n')));
}

std::vector<std::string> write_cohort(const fs::path& dir, int subjects, int n, int t) {
  std::vector<std::string> paths;
  for (int s = 0; s < subjects; ++s) {
    BoldSeries x;
    x.data = testutil::random_matrix(n, t, 100 + static_cast<std::uint64_t>(s));
    for (int k = 0; k < t; ++k)
      for (int i = 0; i < n; ++i) x.data(i, k) += 2.0 * std::sin(0.07 * k * (1 + i % 3));
    x.roi_labels = BoldSeries::default_labels(n);
    const fs::path p = dir / ("sub" + std::to_string(s) + ".csv");
    io::write_bold_csv(p, x);
    paths.push_back(p.string());
  }
  return paths;
}

}  // namespace

TEST_CASE("config: defaults are canonical and survive a round trip") {
  const pl::json cfg = pl::canonicalize(pl::json::object());
  CHECK(cfg.at("seed") == 0);
  CHECK(cfg.at("dnfc").at("window") == 30);
  CHECK(cfg.at("graph_dmd").at("drop_conjugates") == true);
  CHECK(pl::validate(cfg, pl::config_schema()).empty());
  const pl::json again = pl::canonicalize(pl::json::parse(pl::serialize(cfg)));
  CHECK(pl::serialize(again) == pl::serialize(cfg));

  TempDir tmp("cfg");
  const auto path = write_config(tmp.path, {{"dnfc", {{"window", 12}}}});
  const pl::json loaded = pl::load_config(path);
  CHECK(loaded.at("dnfc").at("window") == 12);
  CHECK(loaded.at("dnfc").at("stride") == 1);
}

TEST_CASE("config: unknown keys and wrong types are rejected") {
  auto code_of = [](const pl::json& raw) {
    try {
      pl::canonicalize(raw);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of({{"bogus", 1}}) == ErrorCode::Config);
  CHECK(code_of({{"dnfc", {{"window", "thirty"}}}}) == ErrorCode::Config);
  CHECK(code_of({{"graph_dmd", {{"amplitudes", "median"}}}}) == ErrorCode::Config);
  CHECK(code_of({{"workers", 0}}) == ErrorCode::Config);

  TempDir tmp("unknown");
  std::ostringstream err;
  CHECK(pl::run("simulate", write_config(tmp.path, {{"bogus", 1}}), tmp.path / "out", err) == 2);
  const auto e = parse_error(err.str());
  CHECK(e.at("stage") == "config");
  CHECK(e.at("code") == "Config");
}

TEST_CASE("config: environment overrides") {
  pl::json cfg = pl::canonicalize(pl::json::object());
  {
    EnvVar seed("GDMD_SEED", "7"), workers("GDMD_WORKERS", "3");
    pl::apply_env_overrides(cfg);
  }
  CHECK(cfg.at("seed") == 7);
  CHECK(cfg.at("workers") == 3);
  for (const char* bad : {"x7", "7x", "", "-1"}) {
    EnvVar seed("GDMD_SEED", bad);
    CHECK_THROWS_AS(pl::apply_env_overrides(cfg), Error);
  }
  EnvVar workers("GDMD_WORKERS", "0");
  CHECK_THROWS_AS(pl::apply_env_overrides(cfg), Error);
}

TEST_CASE("stage seeds differ per stream and follow the root seed") {
  const pl::json a = pl::canonicalize({{"seed", 1}}), b = pl::canonicalize({{"seed", 2}});
  CHECK(pl::stage_seed(a, pl::Stream::Ica) != pl::stage_seed(a, pl::Stream::Cluster));
  CHECK(pl::stage_seed(a, pl::Stream::Ica) != pl::stage_seed(b, pl::Stream::Ica));
  CHECK(pl::stage_seed(a, pl::Stream::Ica) == derive_seed(1, 2));
}

TEST_CASE("render: symmetric input gives a symmetric image and limits are recorded") {
  const Mat a = testutil::random_matrix(5, 5, 3);
  const Mat m = a + a.transpose();
  const std::string svg = pl::render_svg(m, -4.0, 4.0, 10, "test");
  std::map<std::pair<int, int>, std::string> fill;
  const std::regex rect(R"re(<rect x="(\d+)" y="(\d+)" width="10" height="10" fill="(#[0-9a-f]{6})"/>)re");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), rect); it != std::sregex_iterator(); ++it)
    fill[{std::stoi((*it)[2]) / 10, std::stoi((*it)[1]) / 10}] = (*it)[3];
  REQUIRE(fill.size() == 25);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(fill[{i, j}] == fill[{j, i}]);

  const auto open = svg.find("<metadata>"), close = svg.find("</metadata>");
  REQUIRE(open != std::string::npos);
  const auto meta = pl::json::parse(svg.substr(open + 10, close - open - 10));
  CHECK(meta.at("vmin") == -4.0);
  CHECK(meta.at("vmax") == 4.0);
  CHECK(meta.at("rows") == 5);

  const std::string eye = pl::render_svg(Mat::Identity(3, 3), -1.0, 1.0, 4, "eye");
  CHECK(eye.find("fill=\"#b2182b\"") != std::string::npos);  // +1 at the top of the palette
  CHECK(eye.find("fill=\"#ffffff\"") != std::string::npos);  // 0 maps to white
  CHECK_THROWS_AS(pl::render_svg(m, 1.0, 1.0, 4, "flat"), Error);
}

TEST_CASE("render command writes an svg for a csv matrix") {
  TempDir tmp("render");
  io::write_matrix_csv(tmp.path / "m.csv", Mat::Identity(4, 4));
  std::ostringstream err;
  const auto cfg = write_config(tmp.path, {{"input", {{"matrix", (tmp.path / "m.csv").string()}}}});
  REQUIRE(pl::run("render", cfg, tmp.path / "out", err) == 0);
  const std::string svg = io::read_text(tmp.path / "out" / "m.svg");
  CHECK(svg.find("\"vmax\":1.0") != std::string::npos);
}

TEST_CASE("decompose: identity deep path matches the linear path") {
  TempDir tmp("deep");
  const auto bold = write_cohort(tmp.path, 2, 5, 90);
  const pl::json base{{"input", {{"bold", bold}}},
                      {"dnfc", {{"window", 12}, {"stride", 2}}},
                      {"graph_dmd", {{"window", 16}, {"step", 8}}}};
  pl::json deep = base;
  deep["decompose"] = {{"path", "deep"}, {"model", "identity"}};
  std::ostringstream err;
  io::write_text(tmp.path / "lin.json", base.dump());
  io::write_text(tmp.path / "deep.json", deep.dump());
  REQUIRE(pl::run("decompose", tmp.path / "lin.json", tmp.path / "lin", err) == 0);
  REQUIRE(pl::run("decompose", tmp.path / "deep.json", tmp.path / "deep", err) == 0);
  for (const std::string id : {"sub0", "sub1"}) {
    const auto a = io::read_modes(tmp.path / "lin" / "subjects" / id / "modes");
    const auto b = io::read_modes(tmp.path / "deep" / "subjects" / id / "modes");
    REQUIRE(a.size() == b.size());
    REQUIRE(!a.empty());
    for (std::size_t p = 0; p < a.size(); ++p) {
      CHECK(std::abs(a[p].lambda - b[p].lambda) < 1e-8);
      CHECK((a[p].phi - b[p].phi).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  CHECK(fs::exists(tmp.path / "deep" / "atlas" / "atlas.json"));
  CHECK(fs::exists(tmp.path / "deep" / "silhouette.csv"));
  for (const auto& entry : fs::directory_iterator(tmp.path / "lin" / "subjects" / "sub0" / "modes"))
    if (entry.path().extension() == ".json" && entry.path().filename() != "index.json")
      CHECK(pl::validate(pl::json::parse(io::read_text(entry.path())), pl::mode_schema()).empty());
}

TEST_CASE("decompose: a single subject gets modes but no atlas") {
  TempDir tmp("single");
  const auto bold = write_cohort(tmp.path, 1, 5, 60);
  std::ostringstream err;
  const auto cfg = write_config(tmp.path, {{"input", {{"bold", bold}}}, {"dnfc", {{"window", 12}}}, {"graph_dmd", {{"window", 0}}}});
  REQUIRE(pl::run("decompose", cfg, tmp.path / "out", err) == 0);
  CHECK(fs::exists(tmp.path / "out" / "subjects" / "sub0" / "modes" / "mode_00000.json"));
  CHECK_FALSE(fs::exists(tmp.path / "out" / "atlas"));
  CHECK(pl::json::parse(io::read_text(tmp.path / "out" / "postprocess.json")).at("atlas").is_null());
}

TEST_CASE("simulate writes the comparison table") {
  TempDir tmp("sim");
  std::ostringstream err;
  const auto cfg = write_config(tmp.path, {{"simulate", {{"runs", 2}}}});
  REQUIRE(pl::run("simulate", cfg, tmp.path / "out", err) == 0);
  std::ifstream in(tmp.path / "out" / "comparison.csv");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "method,mean,std");
  CHECK(lines[1].rfind("PCA,", 0) == 0);
  CHECK(lines[2].rfind("ICA,", 0) == 0);
  CHECK(lines[3].rfind("GraphDMD,", 0) == 0);
  CHECK(fs::exists(tmp.path / "out" / "runs" / "run_001" / "truth.json"));
  CHECK(fs::exists(tmp.path / "out" / "config.json"));
}

TEST_CASE("regress writes a report that matches its schema") {
  TempDir tmp("regress");
  const int n = 5, e = edge_count(n), subjects = 15;
  ModeAtlas atlas;
  atlas.n = n;
  AtlasBin bin;
  bin.f_lo = 0.0;
  bin.f_hi = 0.01;
  bin.centroids.push_back(testutil::random_unit(2 * e, 1));
  io::ScoreTable table;
  table.columns = {"age", "score"};
  table.values.resize(subjects, 2);
  for (int s = 0; s < subjects; ++s) {
    const Vec v = (bin.centroids[0] + 0.3 * testutil::random_vector(2 * e, 10 + s)).normalized();
    bin.aligned.push_back({v});
    atlas.subjects.push_back("s" + std::to_string(s));
    table.subjects.push_back(atlas.subjects.back());
    table.values(s, 0) = s;
    table.values(s, 1) = v(0) + 0.1 * v(1);
  }
  atlas.bins.push_back(bin);
  io::write_atlas(tmp.path / "atlas", atlas);
  io::write_score_table(tmp.path / "scores.csv", table);
  const auto cfg = write_config(
      tmp.path, {{"input", {{"atlas", (tmp.path / "atlas").string()}, {"scores", (tmp.path / "scores.csv").string()}}},
                 {"regress", {{"confounds", {"age"}}, {"folds", 3}, {"repeats", 2}, {"inner_folds", 2},
                              {"lambdas", {0.01, 0.1}}, {"l1_ratios", {0.5}}}}});
  std::ostringstream err;
  REQUIRE(pl::run("regress", cfg, tmp.path / "out", err) == 0);
  const auto report = pl::json::parse(io::read_text(tmp.path / "out" / "report.json"));
  const auto schema = pl::json::parse(io::read_text(fs::path(GDMD_SCHEMA_DIR) / "report.schema.json"));
  CHECK(pl::validate(report, schema).empty());
  CHECK(report.at("measures").size() == 1);
  CHECK(report.at("measures").at(0).at("name") == "score");
  CHECK(report.at("measures").at(0).at("multi_band").at("repeat_r").size() == 2);
  CHECK(fs::exists(tmp.path / "out" / "report.csv"));
}

TEST_CASE("stage failures are reported as JSON with exit code 1") {
  TempDir tmp("fail");
  std::ostringstream err;
  const auto cfg = write_config(tmp.path, {{"input", {{"bold", {(tmp.path / "missing.csv").string()}}}}});
  CHECK(pl::run("dnfc", cfg, tmp.path / "out", err) == 1);
  const auto e = parse_error(err.str());
  CHECK(e.at("stage") == "dnfc");
  CHECK(e.at("code") == "Io");

  std::ostringstream err2;
  CHECK(pl::run("render", write_config(tmp.path, pl::json::object()), tmp.path / "out2", err2) == 2);
  CHECK(parse_error(err2.str()).at("stage") == "render");
}
