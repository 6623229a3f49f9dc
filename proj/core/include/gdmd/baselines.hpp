#pragma once

// Reference decompositions compared against GraphDMD: static connectivity,
// PCA and FastICA over stacked graphs, and DMD on the raw signal.

#include "gdmd/dmd.hpp"
#include "gdmd/dnfc.hpp"

#include <cstdint>

namespace gdmd {

/// Full-series correlation matrix; constant rows follow the dnfc convention.
Mat sfc(const BoldSeries& x, Warnings* warnings = nullptr);

struct PcaResult {
  Mat components;          // k x d, orthonormal rows
  Mat scores;              // N x k
  Vec explained_variance;  // non-increasing
};

/// Top-k right singular vectors of the column-centered N x d matrix g.
PcaResult pca(const Mat& g, int k);

enum class IcaContrast { Cube, Logcosh };

struct IcaOptions {
  IcaContrast contrast = IcaContrast::Cube;
  int max_iter = 1000;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

struct IcaResult {
  Mat sources;    // N x k, unit variance, mutually uncorrelated
  Mat mixing;     // d x k; column j is the spatial map of source j
  Mat unmixing;   // k x d
  bool converged = false;
  int iterations = 0;
};

/// Symmetric FastICA on the N x d matrix g (rows are samples): PCA
/// whitening to k dimensions, fixed-point updates with the chosen contrast
/// and symmetric decorrelation. Stops when max |1 - |<w_new, w_old>|| < tol;
/// on max_iter the last iterate is returned with converged = false.
IcaResult fast_ica(const Mat& g, int k, const IcaOptions& opts = {});

/// exact_dmd on the n x t signal itself; modes are n-vectors.
DmdResult signal_dmd_baseline(const BoldSeries& x, const RankPolicy& policy = RankPolicy::energy());

}  // namespace gdmd
