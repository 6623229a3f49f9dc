#pragma once

#include "gdmd/gdmd.hpp"

#include <cmath>
#include <random>

namespace testutil {

using gdmd::Mat;
using gdmd::Vec;

inline Mat random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

inline Vec random_vector(int n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

inline Vec random_unit(int n, std::uint64_t seed) { return random_vector(n, seed).normalized(); }

/// Pearson straight from the textbook formula in long double.
inline double pearson_oracle(const double* u, const double* v, std::size_t n, std::size_t stride_u = 1,
                             std::size_t stride_v = 1) {
  long double mu = 0, mv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += u[i * stride_u];
    mv += v[i * stride_v];
  }
  mu /= n;
  mv /= n;
  long double suv = 0, suu = 0, svv = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const long double a = u[i * stride_u] - mu, b = v[i * stride_v] - mv;
    suv += a * b;
    suu += a * a;
    svv += b * b;
  }
  return static_cast<double>(suv / std::sqrt(suu * svv));
}

inline double pearson_oracle(const Vec& u, const Vec& v) {
  return pearson_oracle(u.data(), v.data(), static_cast<std::size_t>(u.size()));
}

inline gdmd::BoldSeries make_series(const Mat& data, double dt = 1.0) {
  gdmd::BoldSeries x;
  x.data = data;
  x.dt = dt;
  x.roi_labels = gdmd::BoldSeries::default_labels(data.rows());
  return x;
}

}  // namespace testutil
