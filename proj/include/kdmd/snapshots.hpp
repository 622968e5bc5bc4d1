#pragma once

#include <optional>
#include <string>

#include "kdmd/field.hpp"
#include "kdmd/types.hpp"

namespace kdmd {

// Time-ordered flattened states sampled every `dt` seconds. Column k holds
// the state at time k*dt, so X = states[:, 0..T-1] and X' = states[:, 1..T].
struct SnapshotMatrix {
  Mat states;
  double dt = 1.0;
  std::optional<GridSpec> grid;  // absent for data not produced on a MAC grid
  std::string provenance;        // free-form structured text (JSON)

  Eigen::Index n() const { return states.rows(); }
  Eigen::Index frames() const { return states.cols(); }
  // Number of transitions, T.
  Eigen::Index transitions() const { return states.cols() - 1; }

  auto X() const { return states.leftCols(states.cols() - 1); }
  auto Xprime() const { return states.rightCols(states.cols() - 1); }

  void validate() const;
};

}  // namespace kdmd
