#include "kdmd/rom.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "kdmd/edit.hpp"
#include "kdmd/error.hpp"
#include "kdmd/fluid.hpp"

namespace kdmd {

Rom::Rom(ReducedModel model) : Rom(std::make_shared<const ReducedModel>(std::move(model))) {}

Rom::Rom(std::shared_ptr<const ReducedModel> model) : model_(std::move(model)), cache_(std::make_shared<Cache>()) {
  if (!model_) throw InvalidArgument("null model");
  model_->validate();
}

const CMat& Rom::pinv() const {
  std::call_once(cache_->once, [this] { cache_->pinv = kdmd::pinv(model_->phi); });
  return cache_->pinv;
}

ReducedState Rom::encode(const StateVector& u, std::int64_t frame) const {
  if (u.size() != model_->n())
    throw DimensionError("state length " + std::to_string(u.size()) + " differs from model size " +
                         std::to_string(model_->n()));
  const CMat& P = pinv();
  ReducedState s;
  s.z.resize(model_->r());
  s.z.real() = P.real() * u;
  s.z.imag() = P.imag() * u;
  s.frame = frame;
  return s;
}

StateVector Rom::decode(const CVec& z, DecodeInfo* info) const {
  if (z.size() != model_->r()) throw DimensionError("reduced state length differs from model rank");
  const CVec full = model_->phi * z;
  if (info) {
    const double total = full.norm();
    const double imag = full.imag().norm();
    info->imag_residue = total > 0.0 ? imag / total : 0.0;
    info->pairing_broken = info->imag_residue > kImagResidueLimit;
  }
  return full.real();
}

StateVector Rom::decode(const ReducedState& s, DecodeInfo* info) const { return decode(s.z, info); }

ReducedState Rom::step(const ReducedState& s) const {
  if (s.z.size() != model_->r()) throw DimensionError("reduced state length differs from model rank");
  return {model_->lambda.cwiseProduct(s.z), s.frame + 1};
}

CVec eigen_power(const CVec& lambda, std::int64_t k) {
  if (k < 0) throw InvalidArgument("eigen_power needs k >= 0");
  constexpr double kMaxLog = 700.0;  // exp(700) ~ 1e304
  std::vector<int> bad;
  std::ostringstream msg;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double m = std::abs(lambda[i]);
    if (m > 0.0 && std::log(m) * static_cast<double>(k) > kMaxLog) {
      if (bad.empty()) msg << "overflow in Lambda^" << k << ":";
      msg << " mode " << i << " has |lambda|^k = exp(" << std::log(m) * static_cast<double>(k) << ")";
      bad.push_back(static_cast<int>(i));
    }
  }
  if (!bad.empty()) throw SpectralError(msg.str(), bad);
  CVec out(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    cplx base = lambda[i];
    cplx acc = 1.0;
    std::int64_t e = k;
    while (e > 0) {
      if (e & 1) acc *= base;
      e >>= 1;
      if (e) base *= base;
    }
    out[i] = acc;
  }
  return out;
}

ReducedState Rom::step_k(const ReducedState& s, std::int64_t k) const {
  if (k < 0) throw InvalidArgument("step_k needs k >= 0; use inverse_step_k to go backward");
  if (s.z.size() != model_->r()) throw DimensionError("reduced state length differs from model rank");
  return {eigen_power(model_->lambda, k).cwiseProduct(s.z), s.frame + k};
}

ReducedState Rom::eval_continuous(const ReducedState& s0, double t) const {
  if (s0.z.size() != model_->r()) throw DimensionError("reduced state length differs from model rank");
  std::vector<int> zero;
  for (Eigen::Index i = 0; i < model_->r(); ++i)
    if (std::abs(model_->lambda[i]) == 0.0) zero.push_back(static_cast<int>(i));
  if (!zero.empty()) throw SpectralError("zero eigenvalue has no continuous-time logarithm", zero);
  ReducedState out;
  out.z.resize(model_->r());
  for (Eigen::Index i = 0; i < model_->r(); ++i) {
    const cplx omega = std::log(model_->lambda[i]) / model_->dt;
    out.z[i] = std::exp(omega * t) * s0.z[i];
  }
  out.frame = s0.frame + static_cast<std::int64_t>(std::llround(t / model_->dt));
  return out;
}

std::vector<int> Rom::modes_below_floor(double floor) const {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < model_->r(); ++i)
    if (std::abs(model_->lambda[i]) < floor) out.push_back(static_cast<int>(i));
  return out;
}

namespace {
[[noreturn]] void throw_below_floor(const std::vector<int>& modes, double floor) {
  std::ostringstream msg;
  msg << "inverse stepping blocked: |lambda| < " << floor << " for modes";
  for (int m : modes) msg << ' ' << m;
  throw SpectralError(msg.str(), modes);
}
}  // namespace

ReducedState Rom::inverse_step(const ReducedState& s, double floor) const {
  if (s.z.size() != model_->r()) throw DimensionError("reduced state length differs from model rank");
  const auto bad = modes_below_floor(floor);
  if (!bad.empty()) throw_below_floor(bad, floor);
  return {s.z.cwiseQuotient(model_->lambda), s.frame - 1};
}

ReducedState Rom::inverse_step_k(const ReducedState& s, std::int64_t k, double floor) const {
  if (k < 0) throw InvalidArgument("inverse_step_k needs k >= 0");
  if (s.z.size() != model_->r()) throw DimensionError("reduced state length differs from model rank");
  const auto bad = modes_below_floor(floor);
  if (!bad.empty()) throw_below_floor(bad, floor);
  const CVec inv = model_->lambda.cwiseInverse();
  return {eigen_power(inv, k).cwiseProduct(s.z), s.frame - k};
}

ReducedState Rom::step_forced(const ControlOperator& ctrl, const ReducedState& s, const ForcingInput& in,
                              double dt) const {
  if (!(dt > 0.0)) throw InvalidArgument("forcing dt must be positive");
  ReducedState out = step(s);
  if (!in.q.empty()) {
    if (in.q.size() != ctrl.reduced_b.size())
      throw DimensionError("got " + std::to_string(in.q.size()) + " control inputs for " +
                           std::to_string(ctrl.reduced_b.size()) + " channels");
    for (size_t i = 0; i < in.q.size(); ++i) {
      const CMat& Br = ctrl.reduced_b[i];
      if (Br.rows() != model_->r() || Br.cols() != in.q[i].size())
        throw DimensionError("control channel " + std::to_string(i) + " shape mismatch");
      out.z += (Br * in.q[i].cast<cplx>()) * dt;
    }
  }
  if (!in.f.empty()) {
    Vec total = Vec::Zero(model_->n());
    for (const Vec& f : in.f) {
      if (f.size() != model_->n()) throw DimensionError("force vector length differs from model size");
      total += f;
    }
    const CMat& P = pinv();
    out.z.real() += P.real() * total * dt;
    out.z.imag() += P.imag() * total * dt;
  }
  return out;
}

RolloutResult rollout(const Rom& base, const ReducedState& z0, int frames, const RolloutOptions& opts) {
  if (frames < 1) throw InvalidArgument("rollout needs at least one frame");
  if (opts.stride < 1) throw InvalidArgument("rollout stride must be at least 1");
  if (opts.control && opts.stride != 1) throw InvalidArgument("forced rollout requires stride 1");
  std::optional<Rom> edited;
  if (opts.edit) edited.emplace(apply_edit(base.model(), *opts.edit));
  const Rom& rom = edited ? *edited : base;

  std::optional<ScalarField> density;
  if (opts.density) {
    if (!rom.model().grid) throw InvalidArgument("density advection needs a model with grid metadata");
    density.emplace(*rom.model().grid);
    if (opts.density->size() != density->values.size()) throw DimensionError("density length differs from grid");
    density->values = *opts.density;
  }

  RolloutResult out;
  out.frames.reserve(static_cast<size_t>(frames));
  ReducedState s = z0;
  for (int f = 0; f < frames; ++f) {
    if (opts.control) {
      const ForcingInput none;
      const ForcingInput& in = static_cast<size_t>(f) < opts.inputs.size() ? opts.inputs[static_cast<size_t>(f)] : none;
      s = rom.step_forced(*opts.control, s, in, rom.model().dt);
    } else {
      s = opts.stride == 1 ? rom.step(s) : rom.step_k(s, opts.stride);
    }
    DecodeInfo info;
    out.frames.push_back(rom.decode(s, &info));
    out.max_imag_residue = std::max(out.max_imag_residue, info.imag_residue);
    if (density) {
      const MacField vel = unflatten(out.frames.back(), *rom.model().grid);
      *density = advect_maccormack(vel, *density, rom.model().dt * static_cast<double>(opts.stride));
      out.density.push_back(density->values);
    }
  }
  return out;
}

ReducedState fit_amplitudes(const Rom& rom, const Mat& frames, Eigen::Index first, Eigen::Index count) {
  const ReducedModel& m = rom.model();
  if (frames.rows() != m.n()) throw DimensionError("frame length differs from model size");
  if (first < 0 || count < 1 || first + count > frames.cols()) throw DimensionError("amplitude window out of range");
  const Eigen::Index r = m.r();
  // Normal equations: sum_k conj(L^k) G L^k z = sum_k conj(L^k) Phi^H x_k with G = Phi^H Phi.
  const CMat G = m.phi.adjoint() * m.phi;
  const CMat PX = m.phi.adjoint() * frames.middleCols(first, count).cast<cplx>();
  CMat S = CMat::Zero(r, r);
  CVec rhs = CVec::Zero(r);
  CVec pw = CVec::Ones(r);
  for (Eigen::Index k = 0; k < count; ++k) {
    S.noalias() += pw.conjugate() * pw.transpose();
    rhs += pw.conjugate().cwiseProduct(PX.col(k));
    pw = pw.cwiseProduct(m.lambda);
  }
  const CMat M = G.cwiseProduct(S);
  return {pinv(M, 1e-13) * rhs, first};
}

double relative_error(const std::vector<StateVector>& predicted, const Mat& truth, Eigen::Index first_col) {
  if (first_col < 0 || first_col + static_cast<Eigen::Index>(predicted.size()) > truth.cols())
    throw DimensionError("prediction extends past the ground-truth horizon");
  double num = 0.0;
  double den = 0.0;
  for (size_t k = 0; k < predicted.size(); ++k) {
    const auto col = truth.col(first_col + static_cast<Eigen::Index>(k));
    if (predicted[k].size() != col.size()) throw DimensionError("prediction and truth lengths differ");
    num += (predicted[k] - col).squaredNorm();
    den += col.squaredNorm();
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace kdmd
