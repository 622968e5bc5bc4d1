#pragma once

#include <memory>
#include <vector>

#include <Eigen/SparseCholesky>

#include "kdmd/field.hpp"
#include "kdmd/rom.hpp"

namespace kdmd {

struct UpresConfig {
  int split = 0;              // leading modes (ascending frequency) taken from the low-res input
  int factor = 2;             // downsample factor high -> low
  std::vector<double> blend;  // per-mode weight of the projected field; empty = 1 below split, 0 above
  bool project = true;
};

// Largest split <= s that does not separate a conjugate pair.
int round_split(const ReducedModel& model, int s);

// Minimum-norm correction onto {x : A x = L} with A A^T factorized once.
class Projector {
 public:
  Projector(const GridSpec& high, int factor);
  // Any full-row-rank constraint matrix; grids stay empty.
  explicit Projector(LinearMap A);

  const LinearMap& downsample() const { return A_; }
  const GridSpec& high() const { return high_; }
  const GridSpec& low() const { return low_; }

  StateVector project(const StateVector& H, const StateVector& L) const;

 private:
  using Gram = Eigen::SparseMatrix<double>;
  GridSpec high_;
  GridSpec low_;
  LinearMap A_;
  LinearMap At_;
  std::shared_ptr<Eigen::SimplicialLLT<Gram>> gram_;
};

Projector build_projector(const GridSpec& high, int factor);
StateVector constrained_project(const Projector& proj, const StateVector& H, const StateVector& L);

struct UpresStep {
  ReducedState R;
  StateVector H;
};

// Low-resolution-guided evolution on one model.
class Upscaler {
 public:
  Upscaler(const Rom& rom, UpresConfig cfg);

  const UpresConfig& config() const { return cfg_; }
  const Projector& projector() const { return proj_; }

  // Reduced coordinates of the low-res frame lifted to the high grid.
  ReducedState lift(const StateVector& L, std::int64_t frame = 0) const;
  // R_t = S_L P_t + S_H (Lambda R_{t-1}); H_t = decode(R_t).
  UpresStep step(const ReducedState& R_prev, const StateVector& L) const;
  StateVector blend(const StateVector& projected, const StateVector& direct) const;
  // step, then (when cfg.project) project onto the low-res constraint and blend.
  UpresStep step_full(const ReducedState& R_prev, const StateVector& L) const;

 private:
  const Rom& rom_;
  UpresConfig cfg_;
  Projector proj_;
  LinearMap inject_;
  Vec blend_;
};

UpresStep upres_step(const Upscaler& up, const ReducedState& R_prev, const StateVector& L);
StateVector blend_fields(const Upscaler& up, const StateVector& projected, const StateVector& direct);

}  // namespace kdmd
