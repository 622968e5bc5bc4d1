#include <doctest.h>

#include "../support/fixtures.hpp"
#include "kdmd/error.hpp"
#include "kdmd/dmd.hpp"
#include "kdmd/fluid.hpp"

using namespace kdmd;
using namespace kdmd::testing;

TEST_CASE("exact DMD recovers a linear generator") {
  const LinearSystem sys = linear_system(80, 3, 40, 1);
  const ReducedModel m = exact_dmd(snapshots(sys.states, 0.1), 6);
  CHECK(eigenvalue_error(m.lambda, sys.eigenvalues) < 1e-9);
  CHECK(m.dt == 0.1);
  CHECK(m.provenance.residual < 1e-10);
  // each mode is an eigenvector of A
  for (Eigen::Index i = 0; i < m.r(); ++i)
    CHECK((sys.A.cast<cplx>() * m.phi.col(i) - m.lambda[i] * m.phi.col(i)).norm() < 1e-8);
}

TEST_CASE("modes come ordered with conjugate pairs adjacent") {
  const LinearSystem sys = linear_system(50, 4, 40, 2);
  const ReducedModel m = exact_dmd(snapshots(sys.states), 8);
  const auto partner = conjugate_partners(m.lambda);
  for (Eigen::Index i = 0; i + 1 < m.r(); i += 2) {
    CHECK(partner[static_cast<size_t>(i)] == i + 1);
    CHECK(m.lambda[i].imag() > 0.0);
    CHECK(m.lambda[i + 1] == std::conj(m.lambda[i]));
    CHECK(m.phi.col(i + 1) == m.phi.col(i).conjugate());
  }
  for (Eigen::Index i = 2; i < m.r(); ++i)
    CHECK(std::abs(std::arg(m.lambda[i])) >= std::abs(std::arg(m.lambda[i - 1])) - 1e-15);
}

TEST_CASE("rank larger than the data rank is refused") {
  const LinearSystem sys = linear_system(50, 2, 30, 3);
  CHECK_THROWS_AS(exact_dmd(snapshots(sys.states), 8), RankError);
  CHECK_THROWS(exact_dmd(snapshots(sys.states), 0));
}

TEST_CASE("one-step residual does not grow with rank on fluid data") {
  SceneConfig s = plume_scene(16, 32);
  s.frames = 60;
  s.warmup_frames = 5;
  const Dataset d = generate_dataset(s);
  double prev = 1e300;
  for (int r : {2, 6, 12, 24}) {
    const double res = exact_dmd(d.snapshots, r).provenance.residual;
    CHECK(res <= prev * 1.05);
    prev = res;
  }
}

TEST_CASE("randomized SVD option trains the same spectrum on exact low rank data") {
  const LinearSystem sys = linear_system(120, 3, 40, 4);
  ExactDmdOptions o;
  o.svd = SvdMode::Randomized;
  o.seed = 5;
  const ReducedModel m = exact_dmd(snapshots(sys.states), 6, o);
  CHECK(eigenvalue_error(m.lambda, sys.eigenvalues) < 1e-8);
  CHECK(m.provenance.svd == SvdMode::Randomized);
}

TEST_CASE("vandermonde and variable projection objective") {
  CVec a(2);
  a << cplx(0.9, 0.1), cplx(0.5, 0.0);
  const CMat V = vandermonde(a, 4);
  CHECK(V(0, 0) == cplx(1.0, 0.0));
  CHECK(std::abs(V(3, 0) - std::pow(a[0], 3)) < 1e-15);
  CMat B(2, 3);
  B << 1.0, 2.0, 3.0, -1.0, 0.5, 0.25;
  const CMat Y = V * B;
  CHECK(varpro_objective(a, Y) < 1e-24);
  CVec off = a;
  off[0] *= 0.95;
  CHECK(varpro_objective(off, Y) > 1e-6);
}

TEST_CASE("OptDMD on clean data keeps the exact spectrum and descends") {
  const LinearSystem sys = linear_system(60, 3, 40, 6);
  OptDmdReport rep;
  const ReducedModel m = optdmd(snapshots(sys.states), 6, std::nullopt, {}, &rep);
  CHECK(eigenvalue_error(m.lambda, sys.eigenvalues) < 1e-7);
  for (size_t i = 1; i < rep.objective.size(); ++i) CHECK(rep.objective[i] <= rep.objective[i - 1]);
  CHECK(m.provenance.method == DmdMethod::OptDmd);
}

TEST_CASE("OptDMD improves a perturbed starting guess") {
  const LinearSystem sys = linear_system(60, 2, 50, 7);
  CVec init = sys.eigenvalues;
  for (Eigen::Index i = 0; i < init.size(); ++i) init[i] *= 0.97;
  OptDmdReport rep;
  const ReducedModel m = optdmd(snapshots(sys.states), 4, init, {}, &rep);
  CHECK(eigenvalue_error(m.lambda, sys.eigenvalues) < 1e-6);
  CHECK(rep.objective.back() < rep.objective.front());
}

TEST_CASE("DMDc reduced channels are Phi^+ B") {
  const LinearSystem sys = linear_system(40, 2, 30, 8);
  const ReducedModel m = exact_dmd(snapshots(sys.states), 4);
  Mat Bd = Mat::Zero(40, 2);
  Bd.col(0) = sys.states.col(3);
  Bd.col(1) = sys.states.col(7);
  ControlChannel ch{"push", Bd.sparseView()};
  const ControlOperator op = fit_control(m, {ch});
  REQUIRE(op.reduced_b.size() == 1);
  CHECK(op.labels[0] == "push");
  // B lies in the mode span, so Phi * (Phi^+ B) = B
  CHECK((m.phi * op.reduced_b[0] - Bd.cast<cplx>()).norm() < 1e-9 * Bd.norm());
  ControlChannel bad{"bad", Mat::Zero(39, 1).sparseView()};
  CHECK_THROWS_AS(fit_control(m, {bad}), DimensionError);
}

TEST_CASE("modes of incompressible data satisfy the divergence constraint") {
  SceneConfig s = plume_scene(16, 32);
  s.frames = 40;
  s.warmup_frames = 5;
  s.params.cg_tol = 1e-10;
  const Dataset d = generate_dataset(s);
  const ReducedModel m = exact_dmd(d.snapshots, 10);
  const LinearMap C = divergence_operator(s.grid);
  double data_bound = 0.0;
  for (Eigen::Index t = 0; t < d.snapshots.frames(); ++t)
    data_bound = std::max(data_bound, (C * d.snapshots.states.col(t)).cwiseAbs().maxCoeff() /
                                          d.snapshots.states.col(t).norm());
  const Mat re = C * m.phi.real();
  CHECK(check_constraints(m, C) >= re.lpNorm<Eigen::Infinity>());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.r(); ++i)
    worst = std::max(worst, (C * m.phi.col(i).real()).cwiseAbs().maxCoeff() / m.phi.col(i).norm());
  CHECK(worst <= 100.0 * data_bound + 1e-12);
}
