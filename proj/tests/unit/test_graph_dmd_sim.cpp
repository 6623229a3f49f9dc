#include <doctest.h>

#include "helpers.hpp"

#include <algorithm>
#include <numbers>
#include <numeric>

using namespace gdmd;
using testutil::random_matrix;

namespace {

Mat random_symmetric(int n, std::uint64_t seed) {
  const Mat a = random_matrix(n, n, seed);
  return 0.5 * (a + a.transpose());
}

// G_k = stat + sum_p cos(2 pi f_p k dt) C_p + sin(2 pi f_p k dt) S_p: an exact
// linear system with eigenvalues 1 and exp(+-2 pi i f_p dt).
GraphSequence oscillating(const Mat& stat, const std::vector<std::pair<Mat, Mat>>& modes,
                          const std::vector<double>& freq, int steps, double dt) {
  GraphSequence gs;
  gs.n = static_cast<int>(stat.rows());
  gs.dt_eff = dt;
  for (int k = 0; k < steps; ++k) {
    Mat g = stat;
    for (std::size_t p = 0; p < modes.size(); ++p) {
      const double th = 2 * std::numbers::pi * freq[p] * k * dt;
      g += std::cos(th) * modes[p].first + std::sin(th) * modes[p].second;
    }
    gs.graphs.push_back(g);
  }
  return gs;
}

std::pair<Mat, Mat> pair_of(int n, std::uint64_t seed, double scale = 1.0) {
  return {scale * random_symmetric(n, seed), scale * random_symmetric(n, seed + 7777)};
}

const DynamicMode& slowest(const std::vector<DynamicMode>& modes) {
  return *std::min_element(modes.begin(), modes.end(),
                           [](const DynamicMode& a, const DynamicMode& b) { return a.freq_hz < b.freq_hz; });
}

}  // namespace

TEST_CASE("constant graph sequence yields one static mode") {
  const Mat g = random_symmetric(5, 1);
  GraphSequence gs;
  gs.n = 5;
  gs.dt_eff = 0.5;
  for (int k = 0; k < 6; ++k) gs.graphs.push_back(g);
  const auto modes = graph_dmd(gs);
  REQUIRE(modes.size() == 1);
  CHECK(std::abs(modes[0].lambda - Complex(1.0)) < 1e-10);
  CHECK(modes[0].omega == doctest::Approx(0.0).epsilon(1e-12));
  const CMat scaled = modes[0].phi * modes[0].amplitude;
  CHECK((scaled.real() - g).norm() < 1e-8 * g.norm());
  CHECK(scaled.imag().norm() < 1e-8 * g.norm());
}

TEST_CASE("graph_dmd modes are symmetric and sorted by weight") {
  const int n = 8;
  const auto gs = oscillating(random_symmetric(n, 2), {pair_of(n, 3), pair_of(n, 4)},
                              {0.05, 0.13}, 40, 1.0);
  const auto modes = graph_dmd(gs);
  REQUIRE(modes.size() == 5);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& m : modes) {
    CHECK((m.phi - m.phi.transpose()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(m.phi.norm() > 0.0);
    CHECK(m.growth == doctest::Approx(std::abs(m.lambda)));
    CHECK(m.freq_hz == doctest::Approx(std::abs(std::arg(m.lambda)) / (2 * std::numbers::pi * gs.dt_eff)));
    const double w = std::abs(m.amplitude) * m.phi.norm();
    CHECK(w <= prev + 1e-12);
    prev = w;
  }
  GraphDmdOptions opts;
  opts.drop_conjugates = true;
  CHECK(graph_dmd(gs, opts).size() == 3);
}

TEST_CASE("full-rank node-space projection matches the vectorized path") {
  const int n = 6;
  const auto gs = oscillating(random_symmetric(n, 5), {pair_of(n, 6), pair_of(n, 7)},
                              {0.07, 0.19}, 30, 1.0);
  const auto plain = graph_dmd(gs);
  GraphDmdOptions opts;
  opts.projection = Projection::node_space(n);
  const auto proj = graph_dmd(gs, opts);
  REQUIRE(plain.size() == proj.size());
  for (const auto& a : plain) {
    bool found = false;
    for (const auto& b : proj) {
      if (std::abs(a.lambda - b.lambda) > 1e-8) continue;
      const CMat pa = phase_align(CMat(a.phi * a.amplitude));
      const CMat pb = phase_align(CMat(b.phi * b.amplitude));
      if ((pa - pb).cwiseAbs().maxCoeff() < 1e-8) found = true;
    }
    CHECK(found);
  }
}

TEST_CASE("low-rank node-space projection keeps n x n structure") {
  const int n = 10;
  const auto gs = oscillating(random_symmetric(n, 8), {pair_of(n, 9)}, {0.1}, 25, 1.0);
  GraphDmdOptions opts;
  opts.projection = Projection::node_space(4);
  const auto modes = graph_dmd(gs, opts);
  REQUIRE(!modes.empty());
  for (const auto& m : modes) {
    CHECK(m.phi.rows() == n);
    CHECK((m.phi - m.phi.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  }
  opts.projection = Projection::node_space(n + 1);
  CHECK_THROWS_AS(graph_dmd(gs, opts), Error);
}

TEST_CASE("window counts") {
  CHECK(window_count(64, 64, 4) == 1);
  CHECK(window_count(128, 64, 4) == 17);
  CHECK(window_count(63, 64, 4) == 0);
  for (int len = 64; len < 100; ++len)
    for (int step = 1; step < 9; ++step) CHECK(window_count(len, 64, step) == (len - 64) / step + 1);

  const int n = 4;
  const auto gs = oscillating(random_symmetric(n, 10), {pair_of(n, 11)}, {0.1}, 80, 1.0);
  const auto set = windowed_graph_dmd(gs);
  CHECK(set.windows.size() == 5);
  for (std::size_t w = 0; w < set.windows.size(); ++w)
    for (const auto& m : set.windows[w]) {
      REQUIRE(m.window_index.has_value());
      CHECK(*m.window_index == static_cast<int>(w));
    }
  GraphSequence short_gs = gs;
  short_gs.graphs.resize(10);
  CHECK_THROWS_AS(windowed_graph_dmd(short_gs), Error);
}

TEST_CASE("windowed frequencies follow a mid-sequence switch") {
  const int n = 6;
  const Mat stat = random_symmetric(n, 12);
  const auto osc = pair_of(n, 13);
  const double fa = 0.04, fb = 0.15;
  auto gs = oscillating(stat, {osc}, {fa}, 128, 1.0);
  const auto late = oscillating(stat, {osc}, {fb}, 128, 1.0);
  gs.graphs.insert(gs.graphs.end(), late.graphs.begin(), late.graphs.end());
  const auto set = windowed_graph_dmd(gs);
  const double resolution = 1.0 / 64;
  auto oscillatory_freq = [&](std::size_t w) {
    double best = 0.0;
    for (const auto& m : set.windows[w]) best = std::max(best, m.freq_hz);
    return best;
  };
  CHECK(std::abs(oscillatory_freq(0) - fa) < resolution);
  CHECK(std::abs(oscillatory_freq(set.windows.size() - 1) - fb) < resolution);
}

TEST_CASE("growth filter drops unstable modes") {
  const int n = 4;
  GraphSequence gs;
  gs.n = n;
  const Mat a = random_symmetric(n, 14), b = random_symmetric(n, 15);
  for (int k = 0; k < 70; ++k) gs.graphs.push_back(a + std::pow(0.5, k) * b);
  const auto set = windowed_graph_dmd(gs);
  CHECK(set.filtered > 0);
  for (const auto& m : set.flatten()) CHECK(m.growth >= 0.8);
}

TEST_CASE("phase_align postconditions") {
  const CMat phi = random_symmetric(5, 16).cast<Complex>() + Complex(0, 1) * random_symmetric(5, 17).cast<Complex>();
  const CMat a = phase_align(phi);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::Index r = 0, c = 0;
  a.cwiseAbs().maxCoeff(&r, &c);
  CHECK(std::abs(a(r, c).imag()) < 1e-12);
  CHECK(a(r, c).real() > 0.0);
  for (double th : {0.3, 1.7, -2.9}) {
    const CMat rotated = phase_align(CMat(phi * std::polar(2.5, th)));
    CHECK((rotated - a).cwiseAbs().maxCoeff() < 1e-10);
  }
  const Mat real = random_symmetric(4, 18).cwiseAbs();
  const CMat ra = phase_align(CMat(real.cast<Complex>() * 3.0));
  CHECK((ra.real() - real / real.norm()).cwiseAbs().maxCoeff() < 1e-12);

  DynamicMode m;
  m.phi = phi;
  m.amplitude = Complex(0.4, -1.1);
  m.lambda = Complex(0.9, 0.1);
  const DynamicMode am = phase_align(m);
  CHECK((am.phi * am.amplitude - phi * m.amplitude).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(am.lambda == m.lambda);
}

TEST_CASE("static mode captures the static component") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const int n = 10;
    const Mat g = random_symmetric(n, 300 + seed);
    const double scale = 0.25 * g.norm() / random_symmetric(n, 400).norm();
    const auto gs = oscillating(g, {pair_of(n, 400 + seed, scale), pair_of(n, 500 + seed, scale)}, {0.08, 0.21}, 40, 1.0);
    const auto modes = graph_dmd(gs);
    const auto& m = slowest(modes);
    CHECK(m.freq_hz < 1e-8);
    CHECK(std::abs(edge_pearson(phase_align(m.phi).real(), g)) >= 0.99);
  }
}

// ---- simulation ---------------------------------------------------------

TEST_CASE("make_modes block templates") {
  SimulationSpec spec;
  spec.modes = {{{16, 8, 4}, 1.0, 0.0, 0.0, 1.0}};
  CHECK(make_modes(spec)[0].sum() == 336);
  spec.modes = {{{32}, 1.0, 0.0, 0.0, 1.0}};
  CHECK(make_modes(spec)[0] == Mat::Ones(32, 32));
  spec.modes = {{{16, 17}, 1.0, 0.0, 0.0, 1.0}};
  try {
    make_modes(spec);
    FAIL("expected BlocksExceedN");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BlocksExceedN);
  }

  const auto t = make_modes(SimulationSpec::standard());
  REQUIRE(t.size() == 3);
  // Direct formula over the 496 upper-triangle entries: block k has b(b-1)/2 ones.
  auto oracle = [](double b1, double b2) {
    const double e = 496.0;
    const double p1 = b1 * (b1 - 1) / 2 / e, p2 = b2 * (b2 - 1) / 2 / e;
    const double both = std::min(p1, p2);  // nested blocks from node 0
    return (both - p1 * p2) / std::sqrt(p1 * (1 - p1) * p2 * (1 - p2));
  };
  CHECK(edge_pearson(t[0], t[1]) == doctest::Approx(oracle(16, 8)).epsilon(1e-12));
  CHECK(edge_pearson(t[0], t[2]) == doctest::Approx(oracle(16, 4)).epsilon(1e-12));
  CHECK(edge_pearson(t[1], t[2]) == doctest::Approx(oracle(8, 4)).epsilon(1e-12));
}

TEST_CASE("simulate_sequence shape and determinism") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto sim = simulate_sequence(SimulationSpec::standard(seed));
    CHECK(sim.sequence.size() == 30);
    for (const auto& g : sim.sequence.graphs) {
      CHECK(g.rows() == 32);
      CHECK(g == g.transpose());
    }
    const auto again = simulate_sequence(SimulationSpec::standard(seed));
    CHECK(again.freq_hz == sim.freq_hz);
    CHECK(again.sequence.graphs.back() == sim.sequence.graphs.back());
  }
}

TEST_CASE("zero-frequency simulation is a pure envelope") {
  SimulationSpec spec;
  spec.n = 8;
  spec.steps = 10;
  spec.modes = {{{4}, 0.9, 0.0, 0.0, 1.0}, {{6}, 1.1, 0.0, 0.0, 2.0}};
  const auto sim = simulate_sequence(spec);
  for (int k = 0; k < 10; ++k) {
    const Mat expect = std::pow(0.9, k) * sim.truth[0] + 2.0 * std::pow(1.1, k) * sim.truth[1];
    CHECK((sim.sequence.graphs[static_cast<std::size_t>(k)] - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single-template simulation") {
  SimulationSpec spec;
  spec.modes = {{{12}, 0.97, 0.0, 0.0, 1.0}};
  const auto still = graph_dmd(simulate_sequence(spec).sequence);
  REQUIRE(still.size() == 1);
  CHECK(std::abs(still[0].lambda - Complex(0.97)) < 1e-6);
  CHECK(edge_pearson(phase_align(still[0].phi).real(), make_modes(spec)[0]) == doctest::Approx(1.0));

  // A single real template spans one dimension, so the cosine envelope is
  // fitted by one real eigenvalue; the spatial pattern is still exact.
  spec.modes = {{{12}, 0.97, 1.3, 0.0, 1.0}};
  const auto osc = graph_dmd(simulate_sequence(spec).sequence);
  REQUIRE(osc.size() == 1);
  CHECK(std::abs(osc[0].lambda.imag()) < 1e-12);
  CHECK(edge_pearson(phase_align(osc[0].phi).real(), make_modes(spec)[0]) == doctest::Approx(1.0));
}

TEST_CASE("periodic single mode with unit growth") {
  SimulationSpec spec;
  spec.steps = 40;
  spec.modes = {{{8}, 1.0, 1.0, 0.0, 1.0}};  // period 1 / (1 * 0.1) = 10 steps
  const auto sim = simulate_sequence(spec);
  for (int k = 0; k + 10 < 40; ++k)
    CHECK((sim.sequence.graphs[static_cast<std::size_t>(k)] - sim.sequence.graphs[static_cast<std::size_t>(k + 10)])
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("recovery scores are permutation, sign and phase invariant") {
  const auto t = make_modes(SimulationSpec::standard());
  auto same = recovery_scores(t, t);
  for (double s : same) CHECK(s == doctest::Approx(1.0));
  std::vector<Mat> shuffled{-t[2], t[0], -3.0 * t[1]};
  for (double s : recovery_scores(shuffled, t)) CHECK(s == doctest::Approx(1.0));

  std::vector<DynamicMode> est;
  for (std::size_t p = 0; p < t.size(); ++p) {
    DynamicMode m;
    m.phi = t[2 - p].cast<Complex>() * std::polar(1.0, 0.7 * p + 0.2);
    est.push_back(m);
  }
  for (double s : mode_recovery_score(est, t)) CHECK(s == doctest::Approx(1.0));
  CHECK(recovery_scores({}, t) == std::vector<double>(3, 0.0));
}

TEST_CASE("assignment matches brute force") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int r = 3 + static_cast<int>(seed % 3), c = 5;
    const Mat cost = random_matrix(r, c, 600 + seed);
    const auto match = min_cost_assignment(cost);
    double got = 0.0;
    for (int i = 0; i < r; ++i) got += cost(i, match[static_cast<std::size_t>(i)]);
    std::vector<int> cols(c);
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (int i = 0; i < r; ++i) s += cost(i, cols[static_cast<std::size_t>(i)]);
      best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));

    const auto tall = min_cost_assignment(cost.transpose());
    int matched = 0;
    double tall_cost = 0.0;
    for (std::size_t i = 0; i < tall.size(); ++i)
      if (tall[i] >= 0) {
        ++matched;
        tall_cost += cost(tall[i], static_cast<Eigen::Index>(i));
      }
    CHECK(matched == r);
    CHECK(tall_cost == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("nonlinear benchmark properties") {
  NonlinearSpec spec;
  spec.seed = 3;
  const auto a = nonlinear_benchmark(spec);
  const auto b = nonlinear_benchmark(spec);
  CHECK(a.observed.data == b.observed.data);
  CHECK(a.raw.size() == static_cast<std::size_t>(spec.steps));
  CHECK(a.observed.rois() == spec.n());

  // The undistorted graphs follow an exact sparse linear system.
  CHECK(relative_koopman_residual(a.clean, 1e-10) < 1e-8);
  // Undoing the distortion recovers a better-conditioned latent space.
  BoldSeries inv = a.observed;
  inv.data = a.observed.data.array().atanh() / spec.gamma;
  const auto inv_graphs = sliding_window_correlation(inv, a.windows);
  CHECK(relative_koopman_residual(a.raw, 1e-6) > relative_koopman_residual(inv_graphs, 1e-6));

  // Vanishing gain: tanh(g v)/g ~ v, so correlation graphs converge.
  NonlinearSpec soft = spec;
  soft.gamma = 1e-4;
  const auto s = nonlinear_benchmark(soft);
  for (std::size_t k = 0; k < s.raw.size(); ++k)
    CHECK((s.raw.graphs[k] - s.clean.graphs[k]).cwiseAbs().maxCoeff() < 1e-6);
  const auto clean_scores = complex_recovery_scores(graph_dmd(s.clean), s.truth);
  const auto raw_scores = complex_recovery_scores(graph_dmd(s.raw), s.truth);
  CHECK(mean(clean_scores) == doctest::Approx(mean(raw_scores)).epsilon(1e-3));
  CHECK(mean(clean_scores) > 0.999);
}
