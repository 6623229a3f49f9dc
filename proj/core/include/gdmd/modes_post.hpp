#pragma once

// Post-processing of windowed modes: frequency bins, spherical k-means,
// silhouette model selection, per-bin representatives and cross-subject
// alignment.

#include "gdmd/graph_dmd.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace gdmd {

/// Strict upper triangle of phi as [Re; Im], unit norm, phase-aligned on the
/// off-diagonal entries so the diagonal has no influence.
/// Length 2E with E = n(n-1)/2.
Vec mode_vector(const CMat& phi);
Vec mode_vector(const DynamicMode& mode);

/// Inverse layout: symmetric complex matrix with zero diagonal.
CMat mode_from_vector(const Vec& v, int n);

struct ModeBin {
  double f_lo = 0.0;
  double f_hi = 0.0;
  std::vector<Vec> members;    // unit-norm mode vectors
  std::vector<int> windows;    // source window index (-1 when absent)
  std::vector<double> freq_hz;
};

struct Binning {
  std::vector<ModeBin> bins;
  std::size_t dropped = 0;  // modes at or above the last edge
};

/// Half-open bins [edges[i], edges[i+1]). Edges must start at 0 and be
/// strictly increasing.
Binning bin_by_frequency(const std::vector<DynamicMode>& modes, const std::vector<double>& edges);
Binning bin_by_frequency(const WindowedModeSet& modes, const std::vector<double>& edges);

/// The default five bins: 0, 0.01, 0.04, 0.08, 0.12, 0.16 Hz.
std::vector<double> default_bin_edges();

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
  std::uint64_t seed = 0;
};

struct KMeansResult {
  std::vector<Vec> centroids;
  std::vector<int> labels;
  double objective = 0.0;          // spherical: sum of cosine to centroid; plain: -SSE
  std::vector<double> history;     // objective after every iteration of the kept restart
  int reseeds = 0;                 // empty clusters re-seeded from the farthest point
};

/// Spherical k-means on unit vectors. Each restart seeds with greedy
/// farthest-point selection from a seeded random start; the restart with the
/// largest total cosine similarity wins. Ties go to the lowest label.
KMeansResult spherical_kmeans(const std::vector<Vec>& vectors, int k, const KMeansOptions& opts = {});

/// Spherical k-means iterations from explicit initial centroids.
KMeansResult spherical_kmeans_from(const std::vector<Vec>& vectors, std::vector<Vec> init,
                                   int max_iter = 300);

/// Euclidean k-means with the same seeding scheme (comparison harness).
KMeansResult kmeans(const std::vector<Vec>& vectors, int k, const KMeansOptions& opts = {});

enum class Metric { Cosine, Euclidean };

/// Mean silhouette. Points in singleton clusters score 0. Needs >= 2
/// non-empty clusters.
double silhouette(const std::vector<Vec>& vectors, const std::vector<int>& labels,
                  Metric metric = Metric::Cosine);

/// Spherical k-means for each k in [k_min, k_max]; returns the mean
/// silhouette per k (index 0 is k_min).
std::vector<double> silhouette_sweep(const std::vector<Vec>& vectors, int k_min, int k_max,
                                     const KMeansOptions& opts = {});

struct BinRepresentatives {
  double f_lo = 0.0;
  double f_hi = 0.0;
  std::vector<Vec> modes;  // empty when the bin had no members
};

/// First bin: the normalized mean of its members. Other bins: spherical
/// k-means centroids with k' = min(k, member count).
std::vector<BinRepresentatives> representatives(const std::vector<ModeBin>& bins, int k = 3,
                                                const KMeansOptions& opts = {});

struct AtlasBin {
  double f_lo = 0.0;
  double f_hi = 0.0;
  std::vector<Vec> centroids;  // pooled clusters, canonical order
  /// aligned[s][c]: subject s's representative assigned to pooled cluster c.
  std::vector<std::vector<std::optional<Vec>>> aligned;
};

struct ModeAtlas {
  int n = 0;
  std::vector<std::string> subjects;
  std::vector<AtlasBin> bins;
};

/// Pools every subject's representatives per bin, clusters them (k = 1 for
/// the first bin, k otherwise), then assigns each subject's representatives
/// greedily by cosine similarity, one per pooled cluster. The result does not
/// depend on subject order or on the order of representatives within a
/// subject.
ModeAtlas align_subjects(const std::vector<std::vector<BinRepresentatives>>& per_subject, int n,
                         int k = 3, const KMeansOptions& opts = {},
                         std::vector<std::string> subject_ids = {});

}  // namespace gdmd
