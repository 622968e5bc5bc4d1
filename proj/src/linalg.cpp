#include "kdmd/linalg.hpp"

#include <random>
#include <string>

#include "kdmd/error.hpp"

namespace kdmd {

namespace {

void canonicalize_signs(SvdResult& s) {
  for (Eigen::Index k = 0; k < s.U.cols(); ++k) {
    Eigen::Index imax = 0;
    s.U.col(k).cwiseAbs().maxCoeff(&imax);
    if (s.U(imax, k) < 0.0) {
      s.U.col(k) *= -1.0;
      s.V.col(k) *= -1.0;
    }
  }
}

// Full thin SVD. Tall matrices are reduced by a Householder QR first so the
// dense SVD only sees the square triangular factor.
SvdResult thin_svd(const Mat& M) {
  const Eigen::Index m = M.rows();
  const Eigen::Index n = M.cols();
  SvdResult out;
  if (m > 2 * n) {
    Eigen::HouseholderQR<Mat> qr(M);
    const Mat R = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    Eigen::BDCSVD<Mat> svd(R, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = Mat::Zero(m, n);
    out.U.topRows(n) = svd.matrixU();
    out.U.applyOnTheLeft(qr.householderQ());
    out.S = svd.singularValues();
    out.V = svd.matrixV();
  } else if (n > 2 * m) {
    SvdResult t = thin_svd(M.transpose());
    out.U = std::move(t.V);
    out.S = std::move(t.S);
    out.V = std::move(t.U);
  } else {
    Eigen::BDCSVD<Mat> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.S = svd.singularValues();
    out.V = svd.matrixV();
  }
  return out;
}

void truncate(SvdResult& s, Eigen::Index r) {
  s.U.conservativeResize(Eigen::NoChange, r);
  s.V.conservativeResize(Eigen::NoChange, r);
  s.S.conservativeResize(r);
}

// Orthonormal basis for the columns of Y (thin Householder Q).
Mat orthonormalize(const Mat& Y) {
  Eigen::HouseholderQR<Mat> qr(Y);
  Mat Q = Mat::Identity(Y.rows(), Y.cols());
  Q.applyOnTheLeft(qr.householderQ());
  return Q;
}

template <typename MatT>
MatT pinv_impl(const MatT& M, double rel_tol) {
  using Svd = Eigen::BDCSVD<MatT>;
  const Eigen::Index m = M.rows();
  const Eigen::Index n = M.cols();
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw InvalidArgument("pinv tolerance must lie in (0, 1)");
  if (m == 0 || n == 0) return MatT::Zero(n, m);
  if (n > 2 * m) return pinv_impl<MatT>(M.adjoint(), rel_tol).adjoint();

  auto invert_core = [rel_tol](const Svd& svd) {
    const Vec& S = svd.singularValues();
    const double cutoff = S.size() ? rel_tol * S[0] : 0.0;
    Vec Sinv = Vec::Zero(S.size());
    for (Eigen::Index k = 0; k < S.size(); ++k)
      if (S[k] > cutoff && S[k] > 0.0) Sinv[k] = 1.0 / S[k];
    return MatT(svd.matrixV() * Sinv.asDiagonal() * svd.matrixU().adjoint());
  };

  if (m > 2 * n) {
    Eigen::HouseholderQR<MatT> qr(M);
    const MatT R = qr.matrixQR().topRows(n).template triangularView<Eigen::Upper>();
    Svd svd(R, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const MatT Z = invert_core(svd);  // n x n, pinv(M) = Z [I 0] Q^H
    MatT P = MatT::Zero(m, n);
    P.topRows(n) = Z.adjoint();
    P.applyOnTheLeft(qr.householderQ());
    return P.adjoint();
  }
  Svd svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return invert_core(svd);
}

}  // namespace

SvdResult truncated_svd(const Mat& M, Eigen::Index r) {
  const Eigen::Index kmax = std::min(M.rows(), M.cols());
  if (r < 1 || r > kmax)
    throw RankError("requested rank " + std::to_string(r) + " outside [1, " + std::to_string(kmax) + "]");
  SvdResult out = thin_svd(M);
  truncate(out, r);
  canonicalize_signs(out);
  return out;
}

SvdResult randomized_svd(const Mat& M, Eigen::Index r, const RandomizedSvdOptions& opts) {
  const Eigen::Index kmax = std::min(M.rows(), M.cols());
  if (r < 1) throw RankError("requested rank must be positive");
  if (opts.oversample < 0 || opts.power_iters < 0) throw InvalidArgument("negative sketch parameters");
  const Eigen::Index k = r + opts.oversample;
  if (k > kmax)
    throw RankError("rank + oversample = " + std::to_string(k) + " exceeds min dimension " + std::to_string(kmax));

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat sketch(M.cols(), k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < M.cols(); ++i) sketch(i, j) = gauss(rng);

  Mat Q = orthonormalize(M * sketch);
  for (int q = 0; q < opts.power_iters; ++q) {
    const Mat Z = orthonormalize(M.transpose() * Q);
    Q = orthonormalize(M * Z);
  }
  const Mat B = Q.transpose() * M;  // k x cols
  SvdResult small = thin_svd(B);
  SvdResult out;
  out.U = Q * small.U;
  out.S = std::move(small.S);
  out.V = std::move(small.V);
  truncate(out, r);
  canonicalize_signs(out);
  return out;
}

Mat pinv(const Mat& M, double rel_tol) { return pinv_impl<Mat>(M, rel_tol); }
CMat pinv(const CMat& M, double rel_tol) { return pinv_impl<CMat>(M, rel_tol); }

namespace {
void normalize_columns(CMat& V) {
  for (Eigen::Index k = 0; k < V.cols(); ++k) {
    const double nrm = V.col(k).norm();
    if (nrm > 0.0) V.col(k) /= nrm;
  }
}
}  // namespace

EigResult eig_small(const CMat& M) {
  if (M.rows() != M.cols()) throw DimensionError("eig_small needs a square matrix");
  if (M.rows() > 2000) throw InvalidArgument("eig_small is limited to 2000x2000");
  Eigen::ComplexEigenSolver<CMat> es(M, true);
  if (es.info() != Eigen::Success) throw NonConvergence("complex eigensolver did not converge", 0.0);
  EigResult out{es.eigenvalues(), es.eigenvectors()};
  normalize_columns(out.vectors);
  return out;
}

EigResult eig_small(const Mat& M) {
  if (M.rows() != M.cols()) throw DimensionError("eig_small needs a square matrix");
  if (M.rows() > 2000) throw InvalidArgument("eig_small is limited to 2000x2000");
  Eigen::EigenSolver<Mat> es(M, true);
  if (es.info() != Eigen::Success) throw NonConvergence("real eigensolver did not converge", 0.0);
  EigResult out{es.eigenvalues(), es.eigenvectors()};
  normalize_columns(out.vectors);
  return out;
}

Mat lstsq(const Mat& A, const Mat& B, double rel_tol) {
  if (A.rows() != B.rows()) throw DimensionError("lstsq: row counts differ");
  return pinv(A, rel_tol) * B;
}

CMat lstsq(const CMat& A, const CMat& B, double rel_tol) {
  if (A.rows() != B.rows()) throw DimensionError("lstsq: row counts differ");
  return pinv(A, rel_tol) * B;
}

}  // namespace kdmd
