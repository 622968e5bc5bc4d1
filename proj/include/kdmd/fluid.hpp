#pragma once

#include <string>
#include <vector>

#include "kdmd/field.hpp"
#include "kdmd/snapshots.hpp"

namespace kdmd {

// Disk in world coordinates.
struct Disk {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;

  bool contains(double x, double y) const {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius;
  }
};

// Constant-rate density and temperature source. Rates are per second.
struct Emitter {
  Disk region;
  double density_rate = 0.0;
  double temperature_rate = 0.0;
};

struct SimParams {
  double dt = 0.02;
  double buoyancy_alpha = 0.0;  // weight of density (sinks)
  double buoyancy_beta = 0.0;   // weight of temperature (rises)
  double vorticity_eps = 0.0;
  double cg_tol = 1e-6;
  int cg_max_iters = 1000;
  std::vector<Emitter> sources;

  void validate() const;
};

struct FluidState {
  MacField velocity;
  ScalarField density;
  ScalarField temperature;

  FluidState() = default;
  explicit FluidState(const GridSpec& g) : velocity(g), density(g), temperature(g) {}
};

enum class SceneKind { Plume, Buoyant };

// Everything needed to reproduce a training dataset.
struct SceneConfig {
  std::string name = "plume";
  SceneKind kind = SceneKind::Plume;
  GridSpec grid{64, 128, 1.0 / 64};
  SimParams params;
  int frames = 300;        // recorded snapshots (columns)
  int warmup_frames = 0;   // steps simulated before recording starts
  int record_every = 1;    // solver steps per recorded frame
  std::vector<Disk> obstacles;
  // Buoyant scene: cells inside any region start with density and temperature
  // one and an upward velocity, everything else moves downward.
  std::vector<Disk> regions;
  double region_up_velocity = 0.3;
  double outside_down_velocity = 0.1;

  void validate() const;
};

// Defaults used by the tools and the acceptance suite.
SceneConfig plume_scene(int nx, int ny);
SceneConfig buoyant_scene(int nx, int ny);

// MacCormack advection with the min/max limiter taken from the predictor's
// interpolation stencil.
ScalarField advect_maccormack(const MacField& vel, const ScalarField& q, double dt);
MacField advect_maccormack(const MacField& vel, const MacField& q, double dt);

struct ProjectionStats {
  int iterations = 0;
  double residual = 0.0;  // final max-norm residual relative to the initial one
};

// Pressure projection with MIC(0)-preconditioned CG. Throws NonConvergence
// when the relative max-norm residual stays above cg_tol.
MacField project_pressure(const MacField& vel, double cg_tol, int cg_max_iters,
                          ProjectionStats* stats = nullptr);

MacField add_body_forces(const MacField& vel, const ScalarField& density, const ScalarField& temperature,
                         const SimParams& params, double dt);

// Force-per-unit-field matrices of add_body_forces: the velocity increment is
// dt * (density_op * rho + temperature_op * T).
struct BuoyancyOperators {
  LinearMap density_op;      // n x cells
  LinearMap temperature_op;  // n x cells
};
BuoyancyOperators buoyancy_operators(const GridSpec& grid, double alpha, double beta);

// Cell-centered curl (central differences, zero on the outer ring).
ScalarField curl(const MacField& vel);

MacField vorticity_confinement(const MacField& vel, double eps, double dt);

void inject_sources(FluidState& state, const SimParams& params, double dt);

FluidState step(const FluidState& state, const SimParams& params);

FluidState initial_state(const SceneConfig& scene);

struct Dataset {
  SnapshotMatrix snapshots;
  Mat density;  // cells x frames, for visualization only
};

Dataset generate_dataset(const SceneConfig& scene);

}  // namespace kdmd
