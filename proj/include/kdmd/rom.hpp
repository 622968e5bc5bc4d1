#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "kdmd/dmd.hpp"
#include "kdmd/field.hpp"

namespace kdmd {

struct EditSpec;

struct ReducedState {
  CVec z;
  std::int64_t frame = 0;
};

// Relative imaginary residue above which decode reports broken pairing.
inline constexpr double kImagResidueLimit = 1e-6;

// Smallest |lambda| that inverse stepping accepts by default.
inline constexpr double kInverseFloor = 1e-8;

struct DecodeInfo {
  double imag_residue = 0.0;  // ||Im(Phi z)|| / ||Phi z||
  bool pairing_broken = false;
};

// Per-frame inputs for a forced step.
struct ForcingInput {
  std::vector<Vec> q;  // one vector per control channel
  std::vector<Vec> f;  // full-space force vectors
};

// Reduced-space simulator bound to one immutable model. The pseudoinverse of
// the mode matrix is computed on first use and shared between copies.
class Rom {
 public:
  explicit Rom(ReducedModel model);
  explicit Rom(std::shared_ptr<const ReducedModel> model);

  const ReducedModel& model() const { return *model_; }
  std::shared_ptr<const ReducedModel> model_ptr() const { return model_; }
  const CMat& pinv() const;

  ReducedState encode(const StateVector& u, std::int64_t frame = 0) const;
  StateVector decode(const ReducedState& s, DecodeInfo* info = nullptr) const;
  StateVector decode(const CVec& z, DecodeInfo* info = nullptr) const;

  ReducedState step(const ReducedState& s) const;
  ReducedState step_k(const ReducedState& s, std::int64_t k) const;
  ReducedState eval_continuous(const ReducedState& s0, double t) const;
  ReducedState inverse_step(const ReducedState& s, double floor = kInverseFloor) const;
  // k steps backward through Lambda^-1.
  ReducedState inverse_step_k(const ReducedState& s, std::int64_t k, double floor = kInverseFloor) const;
  ReducedState step_forced(const ControlOperator& ctrl, const ReducedState& s, const ForcingInput& in,
                           double dt) const;

  // Modes whose eigenvalue is below the inverse-stepping floor.
  std::vector<int> modes_below_floor(double floor = kInverseFloor) const;

 private:
  struct Cache {
    std::once_flag once;
    CMat pinv;
  };
  std::shared_ptr<const ReducedModel> model_;
  std::shared_ptr<Cache> cache_;
};

// lambda^k by repeated squaring; throws SpectralError if some |lambda|^k overflows.
CVec eigen_power(const CVec& lambda, std::int64_t k);

struct RolloutOptions {
  std::int64_t stride = 1;                  // steps per output frame (uses step_k)
  const ControlOperator* control = nullptr;  // forced stepping when set (stride must be 1)
  std::vector<ForcingInput> inputs;          // per frame; missing entries mean unforced
  const EditSpec* edit = nullptr;
  // Optional visualization: advect this density with the decoded velocities.
  std::optional<Vec> density;
};

struct RolloutResult {
  std::vector<StateVector> frames;
  std::vector<Vec> density;  // filled only when RolloutOptions::density is set
  double max_imag_residue = 0.0;
};

// Steps `frames` times from z0 (frame 0 itself is not emitted) and decodes each frame.
RolloutResult rollout(const Rom& rom, const ReducedState& z0, int frames, const RolloutOptions& opts = {});

// Reduced state at frame `first` whose free rollout best matches `count`
// consecutive columns of `frames` in least squares (DMD mode amplitudes).
ReducedState fit_amplitudes(const Rom& rom, const Mat& frames, Eigen::Index first, Eigen::Index count);

// Relative L2 error aggregated over frames: sqrt(sum ||a_k - b_k||^2 / sum ||b_k||^2).
double relative_error(const std::vector<StateVector>& predicted, const Mat& truth, Eigen::Index first_col = 0);

}  // namespace kdmd
