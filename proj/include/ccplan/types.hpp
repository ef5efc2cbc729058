#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccplan {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Invalid input or configuration (dimension mismatch, bad parameter ranges).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Controller/metric design failed (e.g. Riccati recursion produced non-finite
// matrices).
struct DesignError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where the computation cannot continue.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A requested quantile is +inf because the calibration set is too small.
struct InsufficientCalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometric quantity undefined at the query point (e.g. obstacle normal at
// the obstacle center).
struct DegenerateGeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// State/control sequences over a horizon N: states x_0..x_N, controls
// u_0..u_{N-1}.
struct Trajectory {
  std::vector<Vec> states;
  std::vector<Vec> controls;

  int horizon() const { return static_cast<int>(controls.size()); }

  void validate() const {
    if (controls.empty() || states.size() != controls.size() + 1) {
      throw ConfigError("Trajectory: states must have length horizon+1, horizon >= 1");
    }
  }
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace ccplan
