#include "gdmd/modes_post.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gdmd {

Vec mode_vector(const CMat& phi) {
  // Align on the off-diagonal part so the vector ignores the diagonal entirely.
  CMat off = phi;
  off.diagonal().setZero();
  if (!(off.norm() > 0.0))
    throw Error(ErrorCode::InvalidArgument, "mode_vector: mode has no off-diagonal energy");
  const CVec u = upper_triangle(phase_align(off));
  Vec v(2 * u.size());
  v.head(u.size()) = u.real();
  v.tail(u.size()) = u.imag();
  const double nrm = v.norm();
  if (!(nrm > 0.0))
    throw Error(ErrorCode::InvalidArgument, "mode_vector: mode has no off-diagonal energy");
  return v / nrm;
}

Vec mode_vector(const DynamicMode& mode) { return mode_vector(mode.phi); }

CMat mode_from_vector(const Vec& v, int n) {
  const int e = edge_count(n);
  if (v.size() != 2 * e) throw Error(ErrorCode::ShapeMismatch, "mode_from_vector: length is not 2E");
  CMat out = CMat::Zero(n, n);
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j, ++idx) out(i, j) = out(j, i) = Complex(v(idx), v(e + idx));
  return out;
}

std::vector<double> default_bin_edges() { return {0.0, 0.01, 0.04, 0.08, 0.12, 0.16}; }

Binning bin_by_frequency(const std::vector<DynamicMode>& modes, const std::vector<double>& edges) {
  if (edges.size() < 2 || edges.front() != 0.0)
    throw Error(ErrorCode::InvalidArgument, "bin_by_frequency: edges must start at 0 with >= 2 entries");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      throw Error(ErrorCode::InvalidArgument, "bin_by_frequency: edges must increase strictly");

  Binning out;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) out.bins.push_back({edges[i], edges[i + 1], {}, {}, {}});
  for (const auto& m : modes) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), m.freq_hz);
    if (it == edges.end() || it == edges.begin()) {
      ++out.dropped;
      continue;
    }
    auto& bin = out.bins[static_cast<std::size_t>(it - edges.begin() - 1)];
    bin.members.push_back(mode_vector(m));
    bin.windows.push_back(m.window_index.value_or(-1));
    bin.freq_hz.push_back(m.freq_hz);
  }
  return out;
}

Binning bin_by_frequency(const WindowedModeSet& modes, const std::vector<double>& edges) {
  return bin_by_frequency(modes.flatten(), edges);
}

namespace {

void check_vectors(const std::vector<Vec>& v, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "kmeans: k must be >= 1");
  if (static_cast<int>(v.size()) < k)
    throw Error(ErrorCode::InvalidArgument, "kmeans: fewer vectors than clusters");
  for (const auto& x : v)
    if (x.size() != v.front().size())
      throw Error(ErrorCode::ShapeMismatch, "kmeans: vectors differ in length");
}

Mat as_rows(const std::vector<Vec>& v) {
  Mat m(static_cast<Eigen::Index>(v.size()), v.front().size());
  for (std::size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
  return m;
}

/// Similarity used for assignment: cosine for spherical, -squared distance
/// for plain k-means. Larger is closer in both cases.
struct Geometry {
  bool spherical = true;

  Vec similarities(const Mat& x, const Vec& c) const {
    if (spherical) return x * c;
    return -(x.rowwise() - c.transpose()).rowwise().squaredNorm();
  }
};

/// Greedy farthest-point seeding from a random first index.
std::vector<Vec> farthest_point_seeds(const Mat& x, int k, std::mt19937_64& rng, const Geometry& geo) {
  const Eigen::Index n = x.rows();
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Vec> seeds{x.row(pick(rng)).transpose()};
  Vec best = geo.similarities(x, seeds.back());
  while (static_cast<int>(seeds.size()) < k) {
    Eigen::Index far = 0;
    best.minCoeff(&far);
    seeds.push_back(x.row(far).transpose());
    best = best.cwiseMax(geo.similarities(x, seeds.back()));
  }
  return seeds;
}

KMeansResult lloyd(const Mat& x, std::vector<Vec> centroids, int max_iter, const Geometry& geo) {
  const Eigen::Index n = x.rows();
  const int k = static_cast<int>(centroids.size());
  KMeansResult res;
  res.labels.assign(static_cast<std::size_t>(n), -1);

  for (int it = 0; it < max_iter; ++it) {
    // Assignment step.
    Mat sim(n, k);
    for (int c = 0; c < k; ++c) sim.col(c) = geo.similarities(x, centroids[static_cast<std::size_t>(c)]);
    std::vector<int> labels(static_cast<std::size_t>(n));
    Vec own(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      own(i) = sim.row(i).maxCoeff(&arg);
      labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }

    // Re-seed empty clusters from the point farthest from its own centroid.
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++count[static_cast<std::size_t>(l)];
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double worst = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        if (count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] < 2) continue;
        if (own(i) < worst) {
          worst = own(i);
          far = i;
        }
      }
      if (far < 0) throw Error(ErrorCode::DegenerateCluster, "kmeans: cannot re-seed an empty cluster");
      --count[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = c;
      count[static_cast<std::size_t>(c)] = 1;
      own(far) = std::numeric_limits<double>::infinity();
      ++res.reseeds;
    }

    // Update step.
    for (int c = 0; c < k; ++c) {
      Vec acc = Vec::Zero(x.cols());
      for (Eigen::Index i = 0; i < n; ++i)
        if (labels[static_cast<std::size_t>(i)] == c) acc += x.row(i).transpose();
      if (geo.spherical) {
        const double nrm = acc.norm();
        if (nrm > 0.0) centroids[static_cast<std::size_t>(c)] = acc / nrm;
      } else {
        centroids[static_cast<std::size_t>(c)] = acc / count[static_cast<std::size_t>(c)];
      }
    }

    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec& c = centroids[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      obj += geo.spherical ? x.row(i).dot(c) : -(x.row(i).transpose() - c).squaredNorm();
    }
    res.history.push_back(obj);
    const bool stable = labels == res.labels;
    res.labels = std::move(labels);
    res.objective = obj;
    if (stable) break;
  }
  res.centroids = std::move(centroids);
  return res;
}

KMeansResult best_of_restarts(const std::vector<Vec>& vectors, int k, const KMeansOptions& opts,
                              const Geometry& geo) {
  check_vectors(vectors, k);
  if (opts.restarts < 1 || opts.max_iter < 1)
    throw Error(ErrorCode::InvalidArgument, "kmeans: restarts and max_iter must be >= 1");
  const Mat x = as_rows(vectors);
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < opts.restarts; ++r) {
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
    KMeansResult res = lloyd(x, farthest_point_seeds(x, k, rng, geo), opts.max_iter, geo);
    if (!have || res.objective > best.objective + 1e-12 * std::abs(best.objective)) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

}  // namespace

KMeansResult spherical_kmeans(const std::vector<Vec>& vectors, int k, const KMeansOptions& opts) {
  for (const auto& v : vectors)
    if (std::abs(v.norm() - 1.0) > 1e-8)
      throw Error(ErrorCode::InvalidArgument, "spherical_kmeans: inputs must have unit norm");
  return best_of_restarts(vectors, k, opts, Geometry{true});
}

KMeansResult spherical_kmeans_from(const std::vector<Vec>& vectors, std::vector<Vec> init, int max_iter) {
  check_vectors(vectors, static_cast<int>(init.size()));
  for (auto& c : init) c.normalize();
  return lloyd(as_rows(vectors), std::move(init), max_iter, Geometry{true});
}

KMeansResult kmeans(const std::vector<Vec>& vectors, int k, const KMeansOptions& opts) {
  return best_of_restarts(vectors, k, opts, Geometry{false});
}

double silhouette(const std::vector<Vec>& vectors, const std::vector<int>& labels, Metric metric) {
  const std::size_t n = vectors.size();
  if (labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "silhouette: label count differs");
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "silhouette: no points");
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  if (*std::min_element(labels.begin(), labels.end()) < 0)
    throw Error(ErrorCode::InvalidArgument, "silhouette: negative label");
  std::vector<int> size(static_cast<std::size_t>(k), 0);
  for (int l : labels) ++size[static_cast<std::size_t>(l)];
  int nonempty = 0;
  for (int s : size) nonempty += s > 0;
  if (nonempty < 2) throw Error(ErrorCode::InvalidArgument, "silhouette: need >= 2 clusters");

  Mat dist(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d;
      if (metric == Metric::Cosine) {
        const double den = vectors[i].norm() * vectors[j].norm();
        d = 1.0 - (den > 0.0 ? vectors[i].dot(vectors[j]) / den : 0.0);
      } else {
        d = (vectors[i] - vectors[j]).norm();
      }
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int own = labels[i];
    if (size[static_cast<std::size_t>(own)] < 2) continue;  // singleton: s(i) = 0
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[static_cast<std::size_t>(labels[j])] += dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const double a = sum[static_cast<std::size_t>(own)] / (size[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c)
      if (c != own && size[static_cast<std::size_t>(c)] > 0)
        b = std::min(b, sum[static_cast<std::size_t>(c)] / size[static_cast<std::size_t>(c)]);
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

std::vector<double> silhouette_sweep(const std::vector<Vec>& vectors, int k_min, int k_max,
                                     const KMeansOptions& opts) {
  if (k_min < 2 || k_max < k_min)
    throw Error(ErrorCode::InvalidArgument, "silhouette_sweep: need 2 <= k_min <= k_max");
  std::vector<double> out;
  for (int k = k_min; k <= k_max; ++k)
    out.push_back(silhouette(vectors, spherical_kmeans(vectors, k, opts).labels, Metric::Cosine));
  return out;
}

std::vector<BinRepresentatives> representatives(const std::vector<ModeBin>& bins, int k,
                                                const KMeansOptions& opts) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "representatives: k must be >= 1");
  std::vector<BinRepresentatives> out;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    BinRepresentatives rep{bins[b].f_lo, bins[b].f_hi, {}};
    const auto& members = bins[b].members;
    if (!members.empty()) {
      if (b == 0) {
        Vec acc = Vec::Zero(members.front().size());
        for (const auto& m : members) acc += m;
        rep.modes.push_back(acc.norm() > 0.0 ? Vec(acc.normalized()) : members.front());
      } else {
        const int kk = std::min<int>(k, static_cast<int>(members.size()));
        KMeansOptions o = opts;
        o.seed = derive_seed(opts.seed, b);
        rep.modes = spherical_kmeans(members, kk, o).centroids;
      }
    }
    out.push_back(std::move(rep));
  }
  return out;
}

namespace {

bool lex_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace

ModeAtlas align_subjects(const std::vector<std::vector<BinRepresentatives>>& per_subject, int n, int k,
                         const KMeansOptions& opts, std::vector<std::string> subject_ids) {
  if (per_subject.size() < 2) throw Error(ErrorCode::InvalidArgument, "align_subjects: need >= 2 subjects");
  const std::size_t nbins = per_subject.front().size();
  for (const auto& s : per_subject)
    if (s.size() != nbins) throw Error(ErrorCode::ShapeMismatch, "align_subjects: bin count differs");
  if (subject_ids.empty())
    for (std::size_t s = 0; s < per_subject.size(); ++s) subject_ids.push_back("subject_" + std::to_string(s));
  if (subject_ids.size() != per_subject.size())
    throw Error(ErrorCode::ShapeMismatch, "align_subjects: subject id count differs");

  ModeAtlas atlas;
  atlas.n = n;
  atlas.subjects = std::move(subject_ids);
  for (std::size_t b = 0; b < nbins; ++b) {
    AtlasBin ab;
    ab.f_lo = per_subject.front()[b].f_lo;
    ab.f_hi = per_subject.front()[b].f_hi;
    ab.aligned.assign(per_subject.size(), {});

    std::vector<Vec> pooled;
    for (const auto& s : per_subject)
      for (const auto& v : s[b].modes) pooled.push_back(v);
    if (pooled.empty()) {
      atlas.bins.push_back(std::move(ab));
      continue;
    }
    // Canonical order makes the pooled clustering independent of input order.
    std::stable_sort(pooled.begin(), pooled.end(), lex_less);
    const int kk = std::min<int>(b == 0 ? 1 : k, static_cast<int>(pooled.size()));
    KMeansOptions o = opts;
    o.seed = derive_seed(opts.seed, b);
    const KMeansResult km = spherical_kmeans(pooled, kk, o);

    // Number clusters by first appearance in the canonical pooled order.
    std::vector<int> rename(static_cast<std::size_t>(kk), -1);
    int next = 0;
    for (int l : km.labels)
      if (rename[static_cast<std::size_t>(l)] < 0) rename[static_cast<std::size_t>(l)] = next++;
    ab.centroids.resize(static_cast<std::size_t>(kk));
    for (int c = 0; c < kk; ++c)
      ab.centroids[static_cast<std::size_t>(rename[static_cast<std::size_t>(c)])] = km.centroids[static_cast<std::size_t>(c)];

    for (std::size_t s = 0; s < per_subject.size(); ++s) {
      std::vector<Vec> reps = per_subject[s][b].modes;
      std::stable_sort(reps.begin(), reps.end(), lex_less);
      struct Pair {
        double sim;
        int rep;
        int cluster;
      };
      std::vector<Pair> pairs;
      for (std::size_t r = 0; r < reps.size(); ++r)
        for (int c = 0; c < kk; ++c)
          pairs.push_back({reps[r].dot(ab.centroids[static_cast<std::size_t>(c)]), static_cast<int>(r), c});
      std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b2) { return a.sim > b2.sim; });
      std::vector<bool> rep_used(reps.size(), false), cl_used(static_cast<std::size_t>(kk), false);
      ab.aligned[s].assign(static_cast<std::size_t>(kk), std::nullopt);
      for (const auto& p : pairs) {
        if (rep_used[static_cast<std::size_t>(p.rep)] || cl_used[static_cast<std::size_t>(p.cluster)]) continue;
        rep_used[static_cast<std::size_t>(p.rep)] = true;
        cl_used[static_cast<std::size_t>(p.cluster)] = true;
        ab.aligned[s][static_cast<std::size_t>(p.cluster)] = reps[static_cast<std::size_t>(p.rep)];
      }
    }
    atlas.bins.push_back(std::move(ab));
  }
  return atlas;
}

}  // namespace gdmd
