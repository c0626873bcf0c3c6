#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace decplan {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Stacked state (x, y, heading, steering angle per agent).
using StateVec = Eigen::VectorXd;
/// Stacked control (linear velocity, steering rate per agent).
using ControlVec = Eigen::VectorXd;

using StateSeq = std::vector<StateVec>;
using ControlSeq = std::vector<ControlVec>;

inline constexpr int kAgentStateDim = 4;
inline constexpr int kAgentControlDim = 2;

/// Raised when a state leaves the domain where the car model is defined.
class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on dimension or invariant violations of user-supplied data.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace decplan
