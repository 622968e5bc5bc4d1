#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kdmd/field.hpp"
#include "kdmd/linalg.hpp"
#include "kdmd/snapshots.hpp"
#include "kdmd/types.hpp"

namespace kdmd {

enum class DmdMethod { Exact, OptDmd };
enum class SvdMode { Full, Randomized };

std::string to_string(DmdMethod m);
std::string to_string(SvdMode m);
DmdMethod dmd_method_from_string(const std::string& s);
SvdMode svd_mode_from_string(const std::string& s);

// Eigenvalues with modulus above this bound make long rollouts blow up.
inline constexpr double kUnstableModulus = 1.05;

struct Provenance {
  DmdMethod method = DmdMethod::Exact;
  SvdMode svd = SvdMode::Full;
  std::uint64_t seed = 0;
  double residual = 0.0;  // ||X' - Phi Lambda Phi^+ X||_F / ||X'||_F
  bool unstable = false;  // some |lambda| > kUnstableModulus
  int lm_iterations = 0;
  bool lm_converged = true;
  bool edited = false;
};

// Trained reduced Koopman model. Modes are stored in ascending |arg(lambda)|
// with conjugate pairs adjacent (positive imaginary part first).
struct ReducedModel {
  CMat phi;     // n x r
  CVec lambda;  // r
  Vec sigma;    // r leading singular values of the training matrix
  double dt = 1.0;
  std::optional<GridSpec> grid;
  Provenance provenance;

  Eigen::Index n() const { return phi.rows(); }
  Eigen::Index r() const { return phi.cols(); }

  void validate() const;
};

// Index of the conjugate partner of each mode, or the mode itself when its
// eigenvalue is real (or it has no partner).
std::vector<int> conjugate_partners(const CVec& lambda, double rel_tol = 1e-10);

// Sorts modes by (|arg|, -|lambda|, sign of Im) and canonicalizes each mode's
// phase so that its largest-magnitude entry is positive real.
void canonicalize_modes(CMat& phi, CVec& lambda);

struct ExactDmdOptions {
  SvdMode svd = SvdMode::Full;
  std::uint64_t seed = 0;
  RandomizedSvdOptions randomized{};
};

ReducedModel exact_dmd(const SnapshotMatrix& data, Eigen::Index r, const ExactDmdOptions& opts = {});

struct LmConfig {
  int max_iters = 200;
  double initial_damping = 1.0;
  double damping_up = 2.0;
  double damping_down = 3.0;
  double rel_tol = 1e-8;
};

struct OptDmdReport {
  int iterations = 0;
  bool converged = false;
  bool jittered = false;
  std::vector<double> objective;  // initial value, then one entry per accepted step
};

// Variable-projection fit of discrete eigenvalues to every snapshot.
ReducedModel optdmd(const SnapshotMatrix& data, Eigen::Index r, const std::optional<CVec>& init = std::nullopt,
                    const LmConfig& lm = {}, OptDmdReport* report = nullptr, const ExactDmdOptions& svd_opts = {});

// Vandermonde matrix with entry (i, j) = alpha_j^i, i = 0..T-1.
CMat vandermonde(const CVec& alpha, Eigen::Index T);

// Squared Frobenius residual of the projected exponential fit:
// min_B ||Y - vandermonde(alpha) B||_F^2.
double varpro_objective(const CVec& alpha, const CMat& Y);

struct ControlChannel {
  std::string label;
  LinearMap B;  // n x M
};

struct ControlOperator {
  std::vector<CMat> reduced_b;  // r x M_i each
  std::vector<std::string> labels;
};

ControlOperator fit_control(const ReducedModel& model, const std::vector<ControlChannel>& channels);

// Max-norm of C * Re(Phi) and C * Im(Phi) over all modes.
double check_constraints(const ReducedModel& model, const LinearMap& C);

// One-step relative residual ||X' - Phi Lambda Phi^+ X||_F / ||X'||_F.
double one_step_residual(const ReducedModel& model, const SnapshotMatrix& data);

}  // namespace kdmd
