#pragma once

// Shared generators for unit tests, golden files and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "kdmd/dmd.hpp"
#include "kdmd/fluid.hpp"

namespace kdmd::testing {

inline Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

inline Mat orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Mat> qr(gaussian(rows, cols, rng));
  return qr.householderQ() * Mat::Identity(rows, cols);
}

// x_{k+1} = A x_k with A = U K U^T of rank 2*pairs. K has the eigenvalues
// rho_j exp(+-i theta_j) in a random well-conditioned basis.
struct LinearSystem {
  Mat A;
  CVec eigenvalues;
  Mat states;  // n x frames
};

inline LinearSystem linear_system(Eigen::Index n, int pairs, Eigen::Index frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mod(0.9, 0.99);
  std::uniform_real_distribution<double> ang(0.05, 1.0);
  const int k = 2 * pairs;
  Mat blocks = Mat::Zero(k, k);
  LinearSystem sys;
  sys.eigenvalues.resize(k);
  for (int p = 0; p < pairs; ++p) {
    // Spread the angles so that pairs stay well separated.
    const double rho = mod(rng);
    const double th = 0.05 + (p + 0.5 * ang(rng)) * (std::numbers::pi - 0.2) / pairs;
    blocks.block(2 * p, 2 * p, 2, 2) << rho * std::cos(th), -rho * std::sin(th), rho * std::sin(th),
        rho * std::cos(th);
    sys.eigenvalues[2 * p] = std::polar(rho, th);
    sys.eigenvalues[2 * p + 1] = std::polar(rho, -th);
  }
  const Mat S = Mat::Identity(k, k) + 0.2 * gaussian(k, k, rng);
  const Mat K = S * blocks * S.inverse();
  const Mat U = orthonormal(n, k, rng);
  sys.A = U * K * U.transpose();
  sys.states.resize(n, frames);
  sys.states.col(0) = U * gaussian(k, 1, rng);
  for (Eigen::Index t = 1; t < frames; ++t) sys.states.col(t) = sys.A * sys.states.col(t - 1);
  return sys;
}

inline SnapshotMatrix snapshots(const Mat& states, double dt = 1.0) {
  SnapshotMatrix s;
  s.states = states;
  s.dt = dt;
  return s;
}

// Worst distance between each true eigenvalue and its greedily matched estimate.
inline double eigenvalue_error(const CVec& est, const CVec& truth) {
  std::vector<bool> used(static_cast<size_t>(est.size()), false);
  struct Pair {
    double d;
    Eigen::Index i, j;
  };
  std::vector<Pair> all;
  for (Eigen::Index i = 0; i < truth.size(); ++i)
    for (Eigen::Index j = 0; j < est.size(); ++j) all.push_back({std::abs(truth[i] - est[j]), i, j});
  std::sort(all.begin(), all.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<bool> done(static_cast<size_t>(truth.size()), false);
  double worst = 0.0;
  for (const Pair& p : all) {
    if (done[static_cast<size_t>(p.i)] || used[static_cast<size_t>(p.j)]) continue;
    done[static_cast<size_t>(p.i)] = true;
    used[static_cast<size_t>(p.j)] = true;
    worst = std::max(worst, p.d);
  }
  return worst;
}

// Deterministic model built from closed-form values; no RNG, so every
// platform produces the same bits.
inline ReducedModel golden_model() {
  ReducedModel m;
  m.grid = GridSpec(2, 3, 0.5);
  const Eigen::Index n = m.grid->state_size();
  const Eigen::Index r = 4;
  m.phi.resize(n, r);
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      m.phi(i, j) = {0.125 * static_cast<double>(i + 1) - 0.5 * static_cast<double>(j),
                     0.0625 * static_cast<double>((i * 3 + j) % 7) - 0.25};
  m.phi.col(1) = m.phi.col(0).conjugate();
  m.phi.col(3) = m.phi.col(2).conjugate();
  m.lambda.resize(r);
  m.lambda << cplx(0.75, 0.5), cplx(0.75, -0.5), cplx(-0.25, 0.875), cplx(-0.25, -0.875);
  m.sigma.resize(r);
  m.sigma << 8.0, 4.0, 2.0, 1.0 / 3.0;
  m.dt = 0.02;
  m.provenance.method = DmdMethod::OptDmd;
  m.provenance.svd = SvdMode::Randomized;
  m.provenance.seed = 42;
  m.provenance.residual = 0.1;
  m.provenance.lm_iterations = 7;
  return m;
}

inline Dataset golden_dataset() {
  Dataset d;
  GridSpec g(2, 2, 0.25);
  d.snapshots.grid = g;
  d.snapshots.dt = 0.04;
  d.snapshots.states.resize(g.state_size(), 3);
  for (Eigen::Index t = 0; t < 3; ++t)
    for (Eigen::Index i = 0; i < g.state_size(); ++i)
      d.snapshots.states(i, t) = 0.1 * static_cast<double>(i) - 0.3 * static_cast<double>(t) + 1.0 / 7.0;
  d.snapshots.provenance = R"({"solver":"golden"})";
  d.density.resize(g.cells(), 3);
  for (Eigen::Index t = 0; t < 3; ++t)
    for (Eigen::Index c = 0; c < g.cells(); ++c) d.density(c, t) = 0.5 * static_cast<double>(c + t);
  return d;
}

}  // namespace kdmd::testing
