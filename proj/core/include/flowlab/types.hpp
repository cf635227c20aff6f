#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned box, used both as the working region U and as histogram support.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vec& x) const {
    for (int i = 0; i < x.size(); ++i) {
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    }
    return true;
  }

  static Box cube(int dim, double lo_v, double hi_v) {
    Box b;
    b.lo = Vec::Constant(dim, lo_v);
    b.hi = Vec::Constant(dim, hi_v);
    return b;
  }
};

class FlowError : public std::runtime_error {
 public:
  explicit FlowError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Orbit left the working region. Escape is an error, never a silent clamp.
class EscapeError : public FlowError {
 public:
  EscapeError(const std::string& msg, double exit_time)
      : FlowError(msg), exit_time(exit_time) {}
  double exit_time;
};

/// Orbit passed too close to an equilibrium for the requested operation.
class SingularityError : public FlowError {
 public:
  SingularityError(const std::string& msg, double time)
      : FlowError(msg), time(time) {}
  double time;
};

/// Frame columns became numerically dependent.
class DegenerateFrameError : public FlowError {
 public:
  explicit DegenerateFrameError(const std::string& msg) : FlowError(msg) {}
};

/// Estimated bundles have no usable angle gap.
class NoDominationError : public FlowError {
 public:
  explicit NoDominationError(const std::string& msg) : FlowError(msg) {}
};

class PreconditionError : public FlowError {
 public:
  explicit PreconditionError(const std::string& msg) : FlowError(msg) {}
};

class ConfigError : public FlowError {
 public:
  explicit ConfigError(const std::string& msg) : FlowError(msg) {}
};

}  // namespace flowlab
