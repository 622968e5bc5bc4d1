#pragma once

#include <vector>

#include "kdmd/dmd.hpp"

namespace kdmd {

inline constexpr double kDefaultClusterThreshold = 0.01;

struct ModeAdjust {
  double weight = 1.0;
  double growth_scale = 1.0;  // multiplies Re(Omega)
  double freq_scale = 1.0;    // multiplies Im(Omega)
};

// Per-mode spectral edit. Empty vectors mean "all ones". Conjugate partners
// always carry identical values; the builders below keep that invariant.
struct EditSpec {
  std::vector<double> weights;
  std::vector<double> growth_scale;
  std::vector<double> freq_scale;
  double cluster_threshold = kDefaultClusterThreshold;

  static EditSpec identity(Eigen::Index r);
  // One adjustment for the low-frequency cluster, one for the rest.
  static EditSpec from_clusters(const ReducedModel& model, const ModeAdjust& low, const ModeAdjust& high,
                                double threshold = kDefaultClusterThreshold);

  // Sets mode i and its conjugate partner.
  void set_mode(const ReducedModel& model, int i, const ModeAdjust& adj);
  ModeAdjust mode(Eigen::Index i) const;

  // Dimensions, finiteness, nonnegative weights, and pair locking.
  void validate(const ReducedModel& model) const;
};

// Continuous-time rates, principal log(lambda) / dt.
CVec omega(const ReducedModel& model);

struct Clusters {
  std::vector<int> low;
  std::vector<int> high;
};

// Low cluster: |Im(Omega)| < threshold.
Clusters cluster_modes(const ReducedModel& model, double threshold = kDefaultClusterThreshold);

// New model with phi_i scaled by the weight and lambda_i rebuilt from the
// scaled rates. Frequency scaling is skipped for real eigenvalues so that
// negative real modes stay real.
ReducedModel apply_edit(const ReducedModel& model, const EditSpec& spec);

}  // namespace kdmd
