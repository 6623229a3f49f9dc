#include <doctest.h>

#include "helpers.hpp"

#include <algorithm>
#include <numeric>

using namespace gdmd;
using testutil::random_unit;

namespace {

DynamicMode mode_at(double freq, const CMat& phi, int window = 0) {
  DynamicMode m;
  m.phi = phi;
  m.freq_hz = freq;
  m.window_index = window;
  return m;
}

CMat random_phi(int n, std::uint64_t seed) {
  const Mat re = testutil::random_matrix(n, n, seed), im = testutil::random_matrix(n, n, seed + 1000);
  CMat phi(n, n);
  phi.real() = re + re.transpose();
  phi.imag() = im + im.transpose();
  return phi;
}

// Three well-separated directions with small perturbations.
std::vector<Vec> clustered(int per_cluster, int dim, double noise, std::uint64_t seed,
                           std::vector<int>* truth = nullptr) {
  std::vector<Vec> centers;
  for (int c = 0; c < 3; ++c) {
    Vec v = Vec::Zero(dim);
    v(c) = 1.0;
    centers.push_back(v);
  }
  std::vector<Vec> out;
  for (int i = 0; i < per_cluster * 3; ++i) {
    const int c = i % 3;
    out.push_back((centers[static_cast<std::size_t>(c)] + noise * testutil::random_vector(dim, seed + static_cast<std::uint64_t>(i))).normalized());
    if (truth) truth->push_back(c);
  }
  return out;
}

// Labels agree up to a relabeling.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

}  // namespace

TEST_CASE("mode vector layout and invariances") {
  const int n = 6;
  const CMat phi = random_phi(n, 1);
  const Vec v = mode_vector(phi);
  CHECK(v.size() == 2 * edge_count(n));
  CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-14));
  for (double th : {0.4, 2.2, -1.0}) CHECK((mode_vector(CMat(phi * std::polar(3.0, th))) - v).norm() < 1e-12);
  CMat diag_changed = phi;
  diag_changed.diagonal().setConstant(Complex(50.0, 0.0));
  CHECK((mode_vector(diag_changed) - v).norm() < 1e-12);
  CMat off = phi;
  off.diagonal().setZero();
  const CMat aligned = phase_align(off);
  const CMat back = mode_from_vector(v, n);
  CHECK(back.diagonal().isZero());
  CHECK((back - back.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mode_vector(back) - v).norm() < 1e-12);
  // Off-diagonal entries of the round trip are proportional to the aligned phi.
  const Complex ratio = back(0, 1) / aligned(0, 1);
  CHECK((back - aligned * ratio).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(mode_from_vector(Vec::Zero(7), n), Error);
}

TEST_CASE("frequency binning") {
  const CMat phi = random_phi(4, 2);
  std::vector<DynamicMode> modes{mode_at(0.0, phi), mode_at(0.01, phi, 1), mode_at(0.0399, phi, 2),
                                 mode_at(0.05, phi, 3), mode_at(0.16, phi, 4), mode_at(0.3, phi, 5)};
  const auto b = bin_by_frequency(modes, default_bin_edges());
  REQUIRE(b.bins.size() == 5);
  CHECK(b.bins[0].members.size() == 1);
  CHECK(b.bins[1].members.size() == 2);
  CHECK(b.bins[1].windows == std::vector<int>{1, 2});
  CHECK(b.bins[2].members.size() == 1);
  CHECK(b.bins[3].members.empty());
  CHECK(b.bins[4].members.empty());
  CHECK(b.dropped == 2);
  CHECK(b.bins[2].f_lo == 0.04);
  CHECK(b.bins[2].f_hi == 0.08);
  CHECK(default_bin_edges() == std::vector<double>{0.0, 0.01, 0.04, 0.08, 0.12, 0.16});
  CHECK_THROWS_AS(bin_by_frequency(modes, {0.0, 0.1, 0.05}), Error);
  CHECK_THROWS_AS(bin_by_frequency(modes, {0.01, 0.1}), Error);
}

TEST_CASE("spherical k-means separates clear clusters") {
  std::vector<int> truth;
  const auto v = clustered(10, 6, 0.05, 3, &truth);
  const auto res = spherical_kmeans(v, 3);
  CHECK(same_partition(res.labels, truth));
  for (const auto& c : res.centroids) CHECK(c.norm() == doctest::Approx(1.0).epsilon(1e-14));
  // Objective is the sum of cosines to the assigned centroid.
  double obj = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) obj += v[i].dot(res.centroids[static_cast<std::size_t>(res.labels[i])]);
  CHECK(res.objective == doctest::Approx(obj).epsilon(1e-12));
  for (std::size_t i = 1; i < res.history.size(); ++i) CHECK(res.history[i] >= res.history[i - 1] - 1e-12);

  const auto again = spherical_kmeans(v, 3);
  CHECK(again.labels == res.labels);
  CHECK(again.objective == res.objective);
  CHECK_THROWS_AS(spherical_kmeans(v, 0), Error);
  CHECK_THROWS_AS(spherical_kmeans(v, 31), Error);
}

TEST_CASE("k-means iterations never decrease the objective") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<Vec> v;
    for (int i = 0; i < 40; ++i) v.push_back(random_unit(5, 100 * seed + static_cast<std::uint64_t>(i)));
    std::vector<Vec> init{v[0], v[1], v[2], v[3]};
    const auto res = spherical_kmeans_from(v, init);
    for (std::size_t i = 1; i < res.history.size(); ++i) CHECK(res.history[i] >= res.history[i - 1] - 1e-12);
    const auto eu = kmeans(v, 4, KMeansOptions{3, 300, seed});
    for (std::size_t i = 1; i < eu.history.size(); ++i) CHECK(eu.history[i] >= eu.history[i - 1] - 1e-12);
  }
}

TEST_CASE("spherical beats euclidean k-means on scale-mixed directions") {
  // Same direction, very different magnitudes: only angular clustering groups them.
  std::vector<Vec> raw;
  std::vector<int> truth;
  for (int i = 0; i < 30; ++i) {
    const int c = i % 3;
    Vec d = Vec::Zero(4);
    d(c) = 1.0;
    d += 0.05 * testutil::random_vector(4, 900 + static_cast<std::uint64_t>(i));
    raw.push_back(d * (i % 2 == 0 ? 0.1 : 10.0));
    truth.push_back(c);
  }
  std::vector<Vec> unit;
  for (const auto& r : raw) unit.push_back(r.normalized());
  CHECK(same_partition(spherical_kmeans(unit, 3).labels, truth));
  CHECK_FALSE(same_partition(kmeans(raw, 3).labels, truth));
}

TEST_CASE("silhouette against a direct computation") {
  std::vector<int> truth;
  const auto v = clustered(4, 5, 0.3, 7, &truth);
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::vector<double> total(3, 0.0);
    std::vector<int> count(3, 0);
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (i == j) continue;
      total[static_cast<std::size_t>(truth[j])] += 1.0 - v[i].dot(v[j]) / (v[i].norm() * v[j].norm());
      ++count[static_cast<std::size_t>(truth[j])];
    }
    const auto own = static_cast<std::size_t>(truth[i]);
    const double a = total[own] / count[own];
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < 3; ++c)
      if (c != own) b = std::min(b, total[c] / count[c]);
    sum += (b - a) / std::max(a, b);
  }
  CHECK(silhouette(v, truth) == doctest::Approx(sum / v.size()).epsilon(1e-12));

  std::vector<int> single = truth;
  single[0] = 3;  // lone point scores zero
  const double s = silhouette(v, single);
  CHECK(s <= 1.0);
  CHECK(s >= -1.0);
  CHECK_THROWS_AS(silhouette(v, std::vector<int>(v.size(), 0)), Error);
}

TEST_CASE("silhouette sweep prefers the true cluster count") {
  const auto v = clustered(8, 6, 0.05, 11);
  const auto sweep = silhouette_sweep(v, 2, 5);
  REQUIRE(sweep.size() == 4);
  CHECK(std::max_element(sweep.begin(), sweep.end()) - sweep.begin() == 1);
}

TEST_CASE("representatives per bin") {
  ModeBin first;
  first.f_hi = 0.01;
  first.members = {random_unit(6, 1), random_unit(6, 2)};
  ModeBin second;
  second.f_lo = 0.01;
  second.f_hi = 0.04;
  second.members = clustered(5, 6, 0.05, 20);
  ModeBin sparse;
  sparse.f_lo = 0.04;
  sparse.f_hi = 0.08;
  sparse.members = {random_unit(6, 3), random_unit(6, 4)};
  ModeBin empty;
  const auto reps = representatives({first, second, sparse, empty}, 3);
  REQUIRE(reps.size() == 4);
  REQUIRE(reps[0].modes.size() == 1);
  CHECK((reps[0].modes[0] - (first.members[0] + first.members[1]).normalized()).norm() < 1e-14);
  CHECK(reps[1].modes.size() == 3);
  CHECK(reps[2].modes.size() == 2);
  CHECK(reps[3].modes.empty());
}

TEST_CASE("subject alignment is order invariant") {
  const int n = 5, dim = 2 * edge_count(n);
  std::vector<Vec> base;
  for (int c = 0; c < 3; ++c) base.push_back(random_unit(dim, 30 + static_cast<std::uint64_t>(c)));
  const Vec stat = random_unit(dim, 40);
  std::vector<std::vector<BinRepresentatives>> subjects;
  for (std::uint64_t s = 0; s < 4; ++s) {
    BinRepresentatives b0{0.0, 0.01, {(stat + 0.05 * testutil::random_vector(dim, 50 + s)).normalized()}};
    BinRepresentatives b1{0.01, 0.04, {}};
    for (std::size_t c = 0; c < 3; ++c)
      b1.modes.push_back((base[(c + s) % 3] + 0.05 * testutil::random_vector(dim, 60 + 10 * s + c)).normalized());
    subjects.push_back({b0, b1});
  }
  const auto atlas = align_subjects(subjects, n, 3, {}, {"a", "b", "c", "d"});
  REQUIRE(atlas.bins.size() == 2);
  CHECK(atlas.subjects == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(atlas.bins[0].centroids.size() == 1);
  CHECK(atlas.bins[1].centroids.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t s = 0; s < 4; ++s) {
      REQUIRE(atlas.bins[1].aligned[s][c].has_value());
      CHECK(atlas.bins[1].aligned[s][c]->dot(atlas.bins[1].centroids[c]) > 0.9);
    }
  }

  // Reverse subject order and shuffle representatives within subjects.
  auto reordered = subjects;
  std::reverse(reordered.begin(), reordered.end());
  for (auto& subj : reordered) std::reverse(subj[1].modes.begin(), subj[1].modes.end());
  const auto other = align_subjects(reordered, n, 3, {}, {"d", "c", "b", "a"});
  for (std::size_t b = 0; b < 2; ++b) {
    REQUIRE(other.bins[b].centroids.size() == atlas.bins[b].centroids.size());
    for (std::size_t c = 0; c < atlas.bins[b].centroids.size(); ++c) {
      CHECK((other.bins[b].centroids[c] - atlas.bins[b].centroids[c]).norm() < 1e-10);
      for (std::size_t s = 0; s < 4; ++s)
        CHECK((*other.bins[b].aligned[3 - s][c] - *atlas.bins[b].aligned[s][c]).norm() < 1e-12);
    }
  }
}
