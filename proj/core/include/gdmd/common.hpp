#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdmd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  ZeroVariance,
  WindowTooLong,
  RankDeficient,
  NotConverged,
  ZeroEigenvalue,
  TooFewSnapshots,
  SingularSystem,
  Diverged,
  BlocksExceedN,
  RankDeficientConfounds,
  DegenerateCluster,
  Io,
  Config,
};

/// Short stable identifier for an error code ("ZeroVariance", ...).
const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can report it in machine-readable form.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Non-fatal conditions (zero-variance windows, dropped modes, ...).
/// Functions that can degrade gracefully append here when given a sink.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string message) {
  if (sink) sink->push_back(std::move(message));
}

/// Independent child seed for stream `stream` of a root seed (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace gdmd
