#pragma once

#include <cstdint>

#include "kdmd/types.hpp"

namespace kdmd {

// Thin SVD factors, singular values descending. Each left vector is
// sign-canonicalized so that its largest-magnitude entry is positive.
struct SvdResult {
  Mat U;  // rows x r
  Vec S;  // r
  Mat V;  // cols x r
};

// Top-r factors of a dense SVD.
SvdResult truncated_svd(const Mat& M, Eigen::Index r);

struct RandomizedSvdOptions {
  Eigen::Index oversample = 10;
  int power_iters = 2;
  std::uint64_t seed = 0;
};

// Range-finder SVD: Gaussian sketch, power iterations with
// re-orthonormalization, then a dense SVD of the compressed block Q^T M.
SvdResult randomized_svd(const Mat& M, Eigen::Index r, const RandomizedSvdOptions& opts = {});

// SVD-based pseudoinverse; singular values below rel_tol * sigma_max are
// treated as zero. Tall inputs are QR-compressed first.
Mat pinv(const Mat& M, double rel_tol = 1e-12);
CMat pinv(const CMat& M, double rel_tol = 1e-12);

struct EigResult {
  CVec values;
  CMat vectors;  // unit-norm columns
};

// Dense eigendecomposition of a small complex matrix.
EigResult eig_small(const CMat& M);
// Real input: complex-conjugate eigenpairs come out exactly conjugate.
EigResult eig_small(const Mat& M);

// Minimum-norm least-squares solution of A X = B.
Mat lstsq(const Mat& A, const Mat& B, double rel_tol = 1e-12);
CMat lstsq(const CMat& A, const CMat& B, double rel_tol = 1e-12);

}  // namespace kdmd
