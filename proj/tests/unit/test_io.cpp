#include <doctest.h>

#include "helpers.hpp"

#include "gdmd/io.hpp"

#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace gdmd;
namespace fs = std::filesystem;
using testutil::random_matrix;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("gdmd_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(io::format_double(v)) == v);
}

TEST_CASE("matrix csv round trip") {
  TempDir d;
  const Mat m = random_matrix(4, 7, 1);
  io::write_matrix_csv(d.path / "m.csv", m);
  CHECK(io::read_matrix_csv(d.path / "m.csv") == m);
}

TEST_CASE("bold csv and binary round trips") {
  TempDir d;
  auto x = testutil::make_series(random_matrix(5, 20, 2), 0.72);
  x.roi_labels = {"a", "b", "c", "d", "e"};
  io::write_bold_csv(d.path / "x.csv", x);
  const auto c = io::read_bold(d.path / "x.csv", 0.72);
  CHECK(c.data == x.data);
  CHECK(c.roi_labels == x.roi_labels);
  CHECK(c.dt == 0.72);

  io::write_bold_binary(d.path / "x.bin", x);
  const auto b = io::read_bold(d.path / "x.bin", 0.72);
  CHECK(b.data == x.data);
  CHECK(fs::file_size(d.path / "x.bin") == 16 + 5 * 20 * 8);

  // Headerless CSV is accepted too.
  io::write_text(d.path / "plain.csv", "r0,1,2,3\nr1,4,5,6.5\n");
  const auto p = io::read_bold_csv(d.path / "plain.csv", 1.0);
  CHECK(p.rois() == 2);
  CHECK(p.data(1, 2) == 6.5);
  CHECK(p.roi_labels[0] == "r0");

  io::write_text(d.path / "bad.bin", "NOTBOLD!xxxxxxxx");
  CHECK_THROWS_AS(io::read_bold_binary(d.path / "bad.bin", 1.0), Error);
  io::write_text(d.path / "ragged.csv", "r0,1,2\nr1,4\n");
  CHECK_THROWS_AS(io::read_bold_csv(d.path / "ragged.csv", 1.0), Error);
  CHECK_THROWS_AS(io::read_bold(d.path / "missing.csv", 1.0), Error);
}

TEST_CASE("graph sequence round trip") {
  TempDir d;
  const auto x = testutil::make_series(random_matrix(4, 30, 3), 2.0);
  const auto gs = sliding_window_correlation(x, WindowSpec{10, 5});
  io::write_graph_sequence(d.path / "g", gs);
  const auto back = io::read_graph_sequence(d.path / "g");
  CHECK(back.n == gs.n);
  CHECK(back.dt_eff == gs.dt_eff);
  REQUIRE(back.size() == gs.size());
  for (std::size_t k = 0; k < gs.size(); ++k) CHECK(back.graphs[k] == gs.graphs[k]);
}

TEST_CASE("mode round trip") {
  TempDir d;
  GraphSequence gs;
  gs.n = 4;
  for (int k = 0; k < 12; ++k) {
    Mat g = Mat::Identity(4, 4) + std::cos(0.7 * k) * Mat::Ones(4, 4);
    g(0, 1) = g(1, 0) = 0.3 * std::sin(0.7 * k);
    gs.graphs.push_back(g);
  }
  auto modes = graph_dmd(gs);
  modes[0].window_index = 3;
  io::write_modes(d.path / "modes", modes);
  const auto back = io::read_modes(d.path / "modes");
  REQUIRE(back.size() == modes.size());
  for (std::size_t p = 0; p < modes.size(); ++p) {
    CHECK(back[p].phi == modes[p].phi);
    CHECK(back[p].lambda == modes[p].lambda);
    CHECK(back[p].amplitude == modes[p].amplitude);
    CHECK(back[p].freq_hz == modes[p].freq_hz);
    CHECK(back[p].growth == modes[p].growth);
    CHECK(back[p].window_index == modes[p].window_index);
  }
}

TEST_CASE("model checkpoint round trip") {
  TempDir d;
  TrainConfig cfg;
  cfg.hidden = {5, 4};
  cfg.latent = 3;
  cfg.seed = 99;
  cfg.beta = 0.25;
  const auto m = KoopmanModel::create(7, cfg.hidden, cfg.latent, cfg.seed);
  io::save_model(d.path / "m.ckpt", m, cfg);
  TrainConfig read_cfg;
  const auto back = io::load_model(d.path / "m.ckpt", &read_cfg);
  CHECK(back.parameters() == m.parameters());
  CHECK(back.window == 7);
  CHECK(back.latent == 3);
  CHECK(read_cfg.seed == 99);
  CHECK(read_cfg.beta == 0.25);
  CHECK(read_cfg.hidden == cfg.hidden);
  const Vec x = testutil::random_vector(7, 4);
  CHECK(encode_node(back, x) == encode_node(m, x));

  // Same inputs give byte-identical files.
  io::save_model(d.path / "m2.ckpt", m, cfg);
  CHECK(io::read_text(d.path / "m.ckpt") == io::read_text(d.path / "m2.ckpt"));

  std::string bytes = io::read_text(d.path / "m.ckpt");
  bytes.resize(bytes.size() - 8);
  io::write_text(d.path / "short.ckpt", bytes);
  CHECK_THROWS_AS(io::load_model(d.path / "short.ckpt"), Error);
}

TEST_CASE("atlas round trip") {
  TempDir d;
  const int n = 4, dim = 2 * edge_count(n);
  ModeAtlas atlas;
  atlas.n = n;
  atlas.subjects = {"s0", "s1"};
  AtlasBin bin;
  bin.f_lo = 0.0;
  bin.f_hi = 0.01;
  bin.centroids = {testutil::random_unit(dim, 5)};
  bin.aligned = {{testutil::random_unit(dim, 6)}, {std::nullopt}};
  atlas.bins = {bin};
  io::write_atlas(d.path / "atlas", atlas);
  const auto back = io::read_atlas(d.path / "atlas");
  CHECK(back.n == n);
  CHECK(back.subjects == atlas.subjects);
  REQUIRE(back.bins.size() == 1);
  CHECK(back.bins[0].f_hi == 0.01);
  CHECK((back.bins[0].centroids[0] - bin.centroids[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*back.bins[0].aligned[0][0] - *bin.aligned[0][0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(back.bins[0].aligned[1][0].has_value());
}

TEST_CASE("score table") {
  TempDir d;
  io::write_text(d.path / "s.csv", "subject_id,age,score\nA,30,1.5\nB,41,-0.25\n");
  const auto t = io::read_score_table(d.path / "s.csv");
  CHECK(t.subjects == std::vector<std::string>{"A", "B"});
  CHECK(t.column("score")(1) == -0.25);
  CHECK(t.columns_of({"age"}).col(0)(0) == 30.0);
  CHECK_THROWS_AS(t.column("missing"), Error);
  io::write_score_table(d.path / "copy.csv", t);
  const auto back = io::read_score_table(d.path / "copy.csv");
  CHECK(back.values == t.values);
  CHECK(back.columns == t.columns);
}

TEST_CASE("training log columns") {
  TempDir d;
  std::vector<EpochLog> log(2);
  log[1].epoch = 1;
  log[1].train.total = 0.5;
  io::write_training_log(d.path / "log.csv", log);
  const auto text = io::read_text(d.path / "log.csv");
  CHECK(text.rfind("epoch,L,L_recon,L_lkis,L_reg,val_L,val_L_recon,val_L_lkis,val_L_reg\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
