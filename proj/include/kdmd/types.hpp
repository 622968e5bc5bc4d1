#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>

namespace kdmd {

using cplx = std::complex<double>;

using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

// Sparse linear operator between flattened state spaces.
using LinearMap = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Flattened velocity state: u-block then v-block, each row-major.
using StateVector = Vec;

}  // namespace kdmd
