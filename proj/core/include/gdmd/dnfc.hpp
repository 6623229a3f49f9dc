#pragma once

// Sliding-window functional connectivity: turns an n x t multivariate series
// into a sequence of n x n Pearson graphs, plus the graph <-> vector layouts
// every other module relies on.

#include "gdmd/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace gdmd {

/// n ROIs x t frames, dt seconds per frame.
struct BoldSeries {
  Mat data;
  double dt = 1.0;
  std::vector<std::string> roi_labels;

  Eigen::Index rois() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }

  /// Throws InvalidArgument on non-finite entries, n < 2, t < 2 or a label
  /// count that differs from n.
  void validate() const;

  /// Labels "roi_0", "roi_1", ... for series built in code.
  static std::vector<std::string> default_labels(Eigen::Index n);
};

struct WindowSpec {
  int length = 30;
  int stride = 1;

  void validate() const;
  /// Number of windows that fit in `frames`: floor((t - length)/stride) + 1.
  int count(Eigen::Index frames) const;
};

struct GraphSequence {
  std::vector<Mat> graphs;
  double dt_eff = 1.0;
  int n = 0;

  std::size_t size() const { return graphs.size(); }

  /// Stacked snapshot matrix g: column k is vectorize(graphs[k]).
  Mat stacked() const;
  /// Strict upper triangles as columns: E x K with E = n(n-1)/2.
  Mat edge_series() const;
};

/// Pearson correlation of two equal-length vectors (length >= 3).
/// Throws ZeroVariance if either input is constant.
double pearson(std::span<const double> u, std::span<const double> v);
double pearson(const Vec& u, const Vec& v);

/// Row-wise Pearson correlation matrix of `rows` (n x s). Constant rows get
/// correlation 0 with every other row (diagonal stays 1); each such row is
/// reported through `warnings`.
Mat correlation_matrix(const Mat& rows, Warnings* warnings = nullptr);

/// Graph k is built from frames [k*stride, k*stride + length).
GraphSequence sliding_window_correlation(const BoldSeries& x, const WindowSpec& w,
                                         Warnings* warnings = nullptr);

/// Column-major n^2 vectorization, the canonical layout for all modes.
Vec vectorize(const Mat& g);
Mat devectorize(const Vec& v, int n);
CVec vectorize(const CMat& g);
CMat devectorize(const CVec& v, int n);

/// Strict upper triangle, row by row: (0,1), (0,2), ..., (n-2,n-1).
int edge_count(int n);
Vec upper_triangle(const Mat& g);
CVec upper_triangle(const CMat& g);
/// Symmetric matrix from a strict upper triangle; diagonal set to `diag`.
Mat from_upper_triangle(const Vec& e, int n, double diag = 1.0);

/// Index of edge (i, j), i != j, in the upper-triangle ordering above.
int edge_index(int i, int j, int n);

}  // namespace gdmd
