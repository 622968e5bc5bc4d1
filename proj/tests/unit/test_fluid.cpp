#include <doctest.h>

#include "../support/fixtures.hpp"
#include "kdmd/error.hpp"
#include "kdmd/fluid.hpp"

using namespace kdmd;

TEST_CASE("pressure projection removes divergence") {
  GridSpec g(16, 16, 1.0 / 16);
  std::mt19937_64 rng(4);
  MacField f = unflatten(testing::gaussian(g.state_size(), 1, rng), g);
  apply_boundary_mask(f);
  const double before = max_abs_divergence(f);
  ProjectionStats st;
  const MacField p = project_pressure(f, 1e-8, 2000, &st);
  CHECK(max_abs_divergence(p) <= 1e-7 * before);
  CHECK(st.iterations > 0);
  // projecting again changes little
  const MacField q = project_pressure(p, 1e-8, 2000);
  CHECK((flatten(q) - flatten(p)).norm() <= 1e-6 * flatten(p).norm());
}

TEST_CASE("pressure projection with an open top") {
  GridSpec g(8, 8, 1.0 / 8, Boundary::Open);
  MacField f(g);
  for (int j = 1; j < 8; ++j)
    for (int i = 0; i < 8; ++i) f.v_at(i, j) = 1.0 + 0.1 * i;
  apply_boundary_mask(f);
  const MacField p = project_pressure(f, 1e-9, 2000);
  CHECK(max_abs_divergence(p) < 1e-6);
}

TEST_CASE("projection reports non-convergence") {
  GridSpec g(16, 16, 1.0 / 16);
  std::mt19937_64 rng(5);
  MacField f = unflatten(testing::gaussian(g.state_size(), 1, rng), g);
  apply_boundary_mask(f);
  CHECK_THROWS_AS(project_pressure(f, 1e-12, 1), NonConvergence);
}

TEST_CASE("advection keeps constants and is identity at rest") {
  GridSpec g(8, 8, 1.0 / 8);
  MacField vel(g);
  vel.u.setConstant(0.3);
  apply_boundary_mask(vel);
  ScalarField q(g);
  q.values.setConstant(2.5);
  const ScalarField a = advect_maccormack(vel, q, 0.05);
  CHECK((a.values.array() - 2.5).abs().maxCoeff() < 1e-12);

  MacField rest(g);
  std::mt19937_64 rng(6);
  q.values = testing::gaussian(g.cells(), 1, rng);
  CHECK((advect_maccormack(rest, q, 0.05).values - q.values).norm() < 1e-14);
}

TEST_CASE("MacCormack limiter bounds new extrema") {
  GridSpec g(16, 4, 1.0 / 16);
  MacField vel(g);
  vel.u.setConstant(0.5);
  ScalarField q(g);
  for (int j = 0; j < 4; ++j) q.at(8, j) = 1.0;
  const ScalarField a = advect_maccormack(vel, q, 0.02);
  CHECK(a.values.maxCoeff() <= 1.0 + 1e-12);
  CHECK(a.values.minCoeff() >= -1e-12);
}

TEST_CASE("buoyancy operators match add_body_forces") {
  GridSpec g(6, 6, 1.0 / 6);
  SimParams p;
  p.buoyancy_alpha = 0.3;
  p.buoyancy_beta = 0.7;
  std::mt19937_64 rng(7);
  ScalarField rho(g), T(g);
  rho.values = testing::gaussian(g.cells(), 1, rng);
  T.values = testing::gaussian(g.cells(), 1, rng);
  MacField zero(g);
  const Vec direct = flatten(add_body_forces(zero, rho, T, p, 0.1));
  const BuoyancyOperators ops = buoyancy_operators(g, p.buoyancy_alpha, p.buoyancy_beta);
  const Vec via = 0.1 * (ops.density_op * rho.values + ops.temperature_op * T.values);
  CHECK((direct - via).norm() < 1e-13);
}

TEST_CASE("curl of a rigid rotation") {
  GridSpec g(8, 8, 1.0 / 8);
  MacField f(g);
  // u = -(y - c), v = x - c has curl 2
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i <= 8; ++i) f.u_at(i, j) = -((j + 0.5) / 8.0 - 0.5);
  for (int j = 0; j <= 8; ++j)
    for (int i = 0; i < 8; ++i) f.v_at(i, j) = (i + 0.5) / 8.0 - 0.5;
  const ScalarField w = curl(f);
  CHECK(w.at(4, 4) == doctest::Approx(2.0));
}

TEST_CASE("datasets are deterministic and divergence free") {
  SceneConfig s = plume_scene(16, 32);
  s.frames = 6;
  s.warmup_frames = 2;
  const Dataset a = generate_dataset(s);
  const Dataset b = generate_dataset(s);
  CHECK(a.snapshots.states == b.snapshots.states);
  CHECK(a.snapshots.frames() == 6);
  CHECK(a.density.cols() == 6);
  CHECK(a.snapshots.dt == doctest::Approx(s.params.dt));
  for (Eigen::Index t = 0; t < a.snapshots.frames(); ++t)
    CHECK(max_abs_divergence(unflatten(a.snapshots.states.col(t), s.grid)) < 1e-3);
  CHECK(a.snapshots.states.col(5).norm() > 0.0);
}

TEST_CASE("obstacles become solid cells") {
  SceneConfig s = plume_scene(16, 32);
  s.obstacles.push_back(Disk{0.5, 1.0, 0.15});
  const FluidState st = initial_state(s);
  CHECK(st.velocity.grid.is_solid(8, 16));
  CHECK_FALSE(st.velocity.grid.is_solid(1, 1));
}

TEST_CASE("scene validation") {
  SceneConfig s = plume_scene(16, 32);
  s.frames = 1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = plume_scene(16, 32);
  s.params.dt = 0.0;
  CHECK_THROWS(s.validate());
}
