#include "kdmd/dmd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kdmd/error.hpp"

namespace kdmd {

std::string to_string(DmdMethod m) { return m == DmdMethod::OptDmd ? "optdmd" : "exact"; }
std::string to_string(SvdMode m) { return m == SvdMode::Randomized ? "randomized" : "full"; }

DmdMethod dmd_method_from_string(const std::string& s) {
  if (s == "exact") return DmdMethod::Exact;
  if (s == "optdmd") return DmdMethod::OptDmd;
  throw InvalidArgument("unknown DMD method '" + s + "'");
}

SvdMode svd_mode_from_string(const std::string& s) {
  if (s == "full") return SvdMode::Full;
  if (s == "randomized") return SvdMode::Randomized;
  throw InvalidArgument("unknown SVD mode '" + s + "'");
}

void ReducedModel::validate() const {
  if (phi.cols() != lambda.size()) throw DimensionError("mode count and eigenvalue count differ");
  if (sigma.size() != lambda.size()) throw DimensionError("singular value count differs from rank");
  if (phi.cols() < 1 || phi.rows() < 1) throw DimensionError("empty model");
  if (!(dt > 0.0)) throw InvalidArgument("model dt must be positive");
  if (grid && grid->state_size() != phi.rows()) throw DimensionError("model grid does not match mode length");
  if (!phi.allFinite() || !lambda.allFinite() || !sigma.allFinite())
    throw InvalidArgument("model has non-finite entries");
}

std::vector<int> conjugate_partners(const CVec& lambda, double rel_tol) {
  const int r = static_cast<int>(lambda.size());
  std::vector<int> partner(static_cast<size_t>(r));
  std::iota(partner.begin(), partner.end(), 0);
  std::vector<bool> taken(static_cast<size_t>(r), false);
  for (int i = 0; i < r; ++i) {
    if (taken[static_cast<size_t>(i)]) continue;
    const cplx li = lambda[i];
    const double scale = std::max(1.0, std::abs(li));
    if (std::abs(li.imag()) <= rel_tol * scale) continue;
    int best = -1;
    double best_d = rel_tol * scale;
    // Adjacent slots first, then everything else.
    for (int pass = 0; pass < 2 && best < 0; ++pass)
      for (int j = 0; j < r; ++j) {
        if (j == i || taken[static_cast<size_t>(j)]) continue;
        if ((pass == 0) != (std::abs(j - i) == 1)) continue;
        const double d = std::abs(lambda[j] - std::conj(li));
        if (d <= best_d) {
          best = j;
          best_d = d;
        }
      }
    if (best >= 0) {
      partner[static_cast<size_t>(i)] = best;
      partner[static_cast<size_t>(best)] = i;
      taken[static_cast<size_t>(i)] = taken[static_cast<size_t>(best)] = true;
    }
  }
  return partner;
}

void canonicalize_modes(CMat& phi, CVec& lambda) {
  const Eigen::Index r = lambda.size();
  std::vector<Eigen::Index> order(static_cast<size_t>(r));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double fa = std::abs(std::arg(lambda[a]));
    const double fb = std::abs(std::arg(lambda[b]));
    if (fa != fb) return fa < fb;
    const double ma = std::abs(lambda[a]);
    const double mb = std::abs(lambda[b]);
    if (ma != mb) return ma > mb;
    return lambda[a].imag() > lambda[b].imag();
  });
  CMat p(phi.rows(), r);
  CVec l(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    p.col(k) = phi.col(order[static_cast<size_t>(k)]);
    l[k] = lambda[order[static_cast<size_t>(k)]];
    Eigen::Index imax = 0;
    p.col(k).cwiseAbs2().maxCoeff(&imax);
    const cplx ref = p(imax, k);
    if (std::abs(ref) > 0.0) p.col(k) *= std::conj(ref) / std::abs(ref);
  }
  phi = std::move(p);
  lambda = std::move(l);
}

namespace {

SvdResult reduce(const Mat& X, Eigen::Index r, const ExactDmdOptions& opts) {
  const Eigen::Index kmax = std::min(X.rows(), X.cols());
  if (r < 1 || r > kmax)
    throw RankError("rank " + std::to_string(r) + " outside [1, " + std::to_string(kmax) + "]");
  SvdResult svd;
  if (opts.svd == SvdMode::Randomized) {
    RandomizedSvdOptions ro = opts.randomized;
    ro.seed = opts.seed;
    // Shrink the oversampling when the matrix is too small for it.
    ro.oversample = std::min<Eigen::Index>(ro.oversample, kmax - r);
    svd = randomized_svd(X, r, ro);
  } else {
    svd = truncated_svd(X, r);
  }
  if (!(svd.S[r - 1] > 1e-14 * svd.S[0]))
    throw RankError("singular value " + std::to_string(r) + " is numerically zero; request a smaller rank");
  return svd;
}

bool any_unstable(const CVec& lambda) {
  return (lambda.array().abs() > kUnstableModulus).any();
}

// Enforces exact conjugate symmetry on a vector of eigenvalue updates.
void symmetrize(CVec& x, const std::vector<int>& partner, const std::vector<bool>& real) {
  for (size_t i = 0; i < partner.size(); ++i) {
    const auto p = static_cast<size_t>(partner[i]);
    const auto ii = static_cast<Eigen::Index>(i);
    if (p == i) {
      if (real[i]) x[ii] = x[ii].real();
    } else if (i < p) {
      const cplx avg = 0.5 * (x[ii] + std::conj(x[static_cast<Eigen::Index>(p)]));
      x[ii] = avg;
      x[static_cast<Eigen::Index>(p)] = std::conj(avg);
    }
  }
}

double min_separation(const CVec& a) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = i + 1; j < a.size(); ++j) m = std::min(m, std::abs(a[i] - a[j]));
  return m;
}

}  // namespace

double one_step_residual(const ReducedModel& model, const SnapshotMatrix& data) {
  const CMat P = pinv(model.phi);
  const Eigen::Index T = data.transitions();
  double err2 = 0.0;
  const double ref2 = data.Xprime().squaredNorm();
  constexpr Eigen::Index kBlock = 32;
  for (Eigen::Index c0 = 0; c0 < T; c0 += kBlock) {
    const Eigen::Index w = std::min(kBlock, T - c0);
    const CMat Z = P * data.states.middleCols(c0, w).cast<cplx>();
    const CMat pred = model.phi * (model.lambda.asDiagonal() * Z);
    err2 += (data.states.middleCols(c0 + 1, w) - pred.real()).squaredNorm();
  }
  return ref2 > 0.0 ? std::sqrt(err2 / ref2) : std::sqrt(err2);
}

ReducedModel exact_dmd(const SnapshotMatrix& data, Eigen::Index r, const ExactDmdOptions& opts) {
  data.validate();
  const SvdResult svd = reduce(data.X(), r, opts);
  const Vec sinv = svd.S.cwiseInverse();
  // X' V Sigma^-1, shared by the reduced operator and the exact modes.
  const Mat XpVS = data.Xprime() * svd.V * sinv.asDiagonal();
  const Mat Khat = svd.U.transpose() * XpVS;
  const EigResult eig = eig_small(Khat);

  ReducedModel m;
  m.lambda = eig.values;
  m.phi = XpVS.cast<cplx>() * eig.vectors;
  const double tiny = 1e-13 * std::sqrt(static_cast<double>(m.phi.rows()));
  for (Eigen::Index k = 0; k < r; ++k) {
    double nrm = m.phi.col(k).norm();
    if (nrm < tiny) {
      // Zero eigenvalue: fall back to the projected mode.
      m.phi.col(k) = svd.U.cast<cplx>() * eig.vectors.col(k);
      nrm = m.phi.col(k).norm();
    }
    m.phi.col(k) /= nrm;
  }
  canonicalize_modes(m.phi, m.lambda);
  m.sigma = svd.S;
  m.dt = data.dt;
  m.grid = data.grid;
  m.provenance.method = DmdMethod::Exact;
  m.provenance.svd = opts.svd;
  m.provenance.seed = opts.seed;
  m.provenance.unstable = any_unstable(m.lambda);
  m.provenance.residual = one_step_residual(m, data);
  return m;
}

CMat vandermonde(const CVec& alpha, Eigen::Index T) {
  if (T < 1) throw InvalidArgument("Vandermonde matrix needs at least one row");
  CMat V(T, alpha.size());
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    cplx p = 1.0;
    for (Eigen::Index i = 0; i < T; ++i) {
      V(i, j) = p;
      p *= alpha[j];
    }
  }
  return V;
}

double varpro_objective(const CVec& alpha, const CMat& Y) {
  const CMat V = vandermonde(alpha, Y.rows());
  const CMat B = lstsq(V, Y);
  return (Y - V * B).squaredNorm();
}

ReducedModel optdmd(const SnapshotMatrix& data, Eigen::Index r, const std::optional<CVec>& init, const LmConfig& lm,
                    OptDmdReport* report, const ExactDmdOptions& svd_opts) {
  data.validate();
  if (lm.max_iters < 0) throw InvalidArgument("max_iters must be nonnegative");
  // All snapshots enter the fit: states = U Sigma V^T, rows of conj(V) Sigma
  // are the reduced coordinates of each frame.
  const SvdResult svd = reduce(data.states, r, svd_opts);
  const CMat Y = (svd.V * svd.S.asDiagonal()).cast<cplx>().conjugate();
  const Eigen::Index m = Y.rows();

  CVec alpha;
  if (init) {
    if (init->size() != r) throw DimensionError("initial eigenvalue count differs from rank");
    alpha = *init;
  } else {
    alpha = exact_dmd(data, r, svd_opts).lambda;
  }
  const std::vector<int> partner = conjugate_partners(alpha);
  std::vector<bool> real(static_cast<size_t>(r));
  for (Eigen::Index k = 0; k < r; ++k) real[static_cast<size_t>(k)] = alpha[k].imag() == 0.0;
  symmetrize(alpha, partner, real);

  OptDmdReport rep;
  auto jitter = [&]() {
    if (rep.jittered) throw Error("OptDMD eigenvalues collapsed below 1e-12 separation twice");
    rep.jittered = true;
    for (Eigen::Index k = 0; k < r; ++k) alpha[k] *= 1.0 - 1e-9 * static_cast<double>(k + 1);
    symmetrize(alpha, partner, real);
  };
  if (min_separation(alpha) < 1e-12) jitter();

  double f = varpro_objective(alpha, Y);
  rep.objective.push_back(f);
  double mu = lm.initial_damping;
  for (int it = 0; it < lm.max_iters; ++it) {
    rep.iterations = it + 1;
    const CMat V = vandermonde(alpha, m);
    const CMat Vp = pinv(V);
    const CMat B = Vp * Y;
    const CMat R = Y - V * B;
    // Kaufman Jacobian: d R / d alpha_j ~ -P_perp dV_j B(j, :).
    CMat J(m * Y.cols(), r);
    for (Eigen::Index j = 0; j < r; ++j) {
      CVec d(m);
      d[0] = 0.0;
      cplx p = 1.0;
      for (Eigen::Index i = 1; i < m; ++i) {
        d[i] = static_cast<double>(i) * p;
        p *= alpha[j];
      }
      const CVec pd = d - V * (Vp * d);
      for (Eigen::Index c = 0; c < Y.cols(); ++c) J.col(j).segment(c * m, m) = -pd * B(j, c);
    }
    const CVec rvec = Eigen::Map<const CVec>(R.data(), R.size());
    const CMat JhJ = J.adjoint() * J;
    const CVec g = J.adjoint() * rvec;
    Vec D = JhJ.diagonal().real();
    for (Eigen::Index k = 0; k < r; ++k) D[k] = std::max(D[k], 1e-12 * (1.0 + D.maxCoeff()));

    bool accepted = false;
    double f_new = f;
    CVec alpha_new;
    for (int attempt = 0; attempt < 40; ++attempt) {
      CMat H = JhJ;
      H.diagonal() += (mu * D).cast<cplx>();
      CVec delta = H.ldlt().solve(-g);
      symmetrize(delta, partner, real);
      alpha_new = alpha + delta;
      f_new = alpha_new.allFinite() ? varpro_objective(alpha_new, Y) : std::numeric_limits<double>::infinity();
      if (f_new < f) {
        accepted = true;
        mu /= lm.damping_down;
        break;
      }
      mu *= lm.damping_up;
    }
    if (!accepted) {
      rep.converged = true;  // no descent direction left at any damping
      break;
    }
    const double rel = (f - f_new) / std::max(f, std::numeric_limits<double>::min());
    alpha = alpha_new;
    f = f_new;
    rep.objective.push_back(f);
    if (min_separation(alpha) < 1e-12) {
      jitter();
      f = varpro_objective(alpha, Y);
    }
    if (rel < lm.rel_tol) {
      rep.converged = true;
      break;
    }
  }
  if (lm.max_iters == 0) rep.converged = true;

  const CMat V = vandermonde(alpha, m);
  const CMat B = lstsq(V, Y);
  ReducedModel model;
  model.phi = svd.U.cast<cplx>() * B.transpose();
  for (Eigen::Index k = 0; k < r; ++k) {
    const double nrm = model.phi.col(k).norm();
    if (nrm > 0.0) model.phi.col(k) /= nrm;
  }
  for (size_t i = 0; i < partner.size(); ++i)
    if (static_cast<size_t>(partner[i]) > i)
      model.phi.col(partner[i]) = model.phi.col(static_cast<Eigen::Index>(i)).conjugate();
  model.lambda = alpha;
  canonicalize_modes(model.phi, model.lambda);
  model.sigma = svd.S;
  model.dt = data.dt;
  model.grid = data.grid;
  model.provenance.method = DmdMethod::OptDmd;
  model.provenance.svd = svd_opts.svd;
  model.provenance.seed = svd_opts.seed;
  model.provenance.unstable = any_unstable(model.lambda);
  model.provenance.lm_iterations = rep.iterations;
  model.provenance.lm_converged = rep.converged;
  model.provenance.residual = one_step_residual(model, data);
  if (report) *report = std::move(rep);
  return model;
}

ControlOperator fit_control(const ReducedModel& model, const std::vector<ControlChannel>& channels) {
  const CMat P = pinv(model.phi);
  const Mat Pre = P.real();
  const Mat Pim = P.imag();
  ControlOperator out;
  for (const ControlChannel& ch : channels) {
    if (ch.B.rows() != model.n())
      throw DimensionError("control channel '" + ch.label + "' has " + std::to_string(ch.B.rows()) +
                           " rows, model state has " + std::to_string(model.n()));
    CMat red(model.r(), ch.B.cols());
    red.real() = Pre * ch.B;
    red.imag() = Pim * ch.B;
    out.reduced_b.push_back(std::move(red));
    out.labels.push_back(ch.label);
  }
  return out;
}

double check_constraints(const ReducedModel& model, const LinearMap& C) {
  if (C.cols() != model.n()) throw DimensionError("constraint matrix columns differ from state size");
  if (C.rows() == 0 || C.nonZeros() == 0) return 0.0;
  const Mat re = C * model.phi.real();
  const Mat im = C * model.phi.imag();
  return std::max(re.lpNorm<Eigen::Infinity>(), im.lpNorm<Eigen::Infinity>());
}

}  // namespace kdmd
