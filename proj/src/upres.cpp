#include "kdmd/upres.hpp"

#include <string>

#include "kdmd/error.hpp"

namespace kdmd {

int round_split(const ReducedModel& model, int s) {
  if (s < 0 || s > model.r())
    throw InvalidArgument("split " + std::to_string(s) + " outside [0, " + std::to_string(model.r()) + "]");
  const auto partner = conjugate_partners(model.lambda);
  // Pairs are adjacent, so a split lands mid-pair when mode s-1 pairs with mode s.
  if (s > 0 && s < model.r() && partner[static_cast<size_t>(s - 1)] == s) --s;
  return s;
}

Projector::Projector(const GridSpec& high, int factor) : Projector(build_downsample(high, factor)) {
  high_ = high;
  low_ = coarsen(high, factor);
}

Projector::Projector(LinearMap A) : A_(std::move(A)) {
  if (A_.rows() < 1 || A_.rows() > A_.cols()) throw RankError("constraint matrix must be wide with at least one row");
  At_ = A_.transpose();
  Gram gram = Gram(A_ * At_);
  gram_ = std::make_shared<Eigen::SimplicialLLT<Gram>>();
  gram_->compute(gram);
  if (gram_->info() != Eigen::Success) throw RankError("downsample Gram matrix A*A^T is not positive definite");
}

StateVector Projector::project(const StateVector& H, const StateVector& L) const {
  if (H.size() != A_.cols()) throw DimensionError("high-res field length differs from projector grid");
  if (L.size() != A_.rows()) throw DimensionError("low-res field length differs from projector grid");
  const Vec resid = L - A_ * H;
  const Vec lam = gram_->solve(resid);
  if (gram_->info() != Eigen::Success) throw NonConvergence("Gram solve failed", resid.norm());
  return H + At_ * lam;
}

Projector build_projector(const GridSpec& high, int factor) { return Projector(high, factor); }

StateVector constrained_project(const Projector& proj, const StateVector& H, const StateVector& L) {
  return proj.project(H, L);
}

namespace {
const GridSpec& model_grid(const Rom& rom) {
  if (!rom.model().grid) throw InvalidArgument("upres needs a model with grid metadata");
  return *rom.model().grid;
}
}  // namespace

Upscaler::Upscaler(const Rom& rom, UpresConfig cfg)
    : rom_(rom), cfg_(std::move(cfg)), proj_(model_grid(rom), cfg_.factor) {
  const ReducedModel& m = rom.model();
  cfg_.split = round_split(m, cfg_.split);
  inject_ = build_injection(proj_.high(), cfg_.factor);
  if (cfg_.blend.empty()) {
    blend_ = Vec::Zero(m.r());
    blend_.head(cfg_.split).setOnes();
  } else {
    if (static_cast<Eigen::Index>(cfg_.blend.size()) != m.r())
      throw DimensionError("blend has " + std::to_string(cfg_.blend.size()) + " weights for rank " +
                           std::to_string(m.r()));
    blend_ = Eigen::Map<const Vec>(cfg_.blend.data(), m.r());
    if ((blend_.array() < 0.0).any() || (blend_.array() > 1.0).any())
      throw InvalidArgument("blend weights must lie in [0, 1]");
  }
}

ReducedState Upscaler::lift(const StateVector& L, std::int64_t frame) const {
  if (L.size() != inject_.cols())
    throw DimensionError("low-res frame length " + std::to_string(L.size()) + " does not match the " +
                         std::to_string(proj_.low().nx) + "x" + std::to_string(proj_.low().ny) + " grid");
  return rom_.encode(inject_ * L, frame);
}

UpresStep Upscaler::step(const ReducedState& R_prev, const StateVector& L) const {
  const ReducedState star = rom_.step(R_prev);
  const ReducedState P = lift(L, star.frame);
  ReducedState R = star;
  R.z.head(cfg_.split) = P.z.head(cfg_.split);
  return {R, rom_.decode(R)};
}

StateVector Upscaler::blend(const StateVector& projected, const StateVector& direct) const {
  const CVec a = rom_.encode(projected).z;
  const CVec b = rom_.encode(direct).z;
  const CVec w = blend_.cast<cplx>();
  const CVec mixed = w.cwiseProduct(a) + (CVec::Ones(w.size()) - w).cwiseProduct(b);
  return rom_.decode(mixed);
}

UpresStep Upscaler::step_full(const ReducedState& R_prev, const StateVector& L) const {
  UpresStep out = step(R_prev, L);
  if (cfg_.project) {
    const StateVector x = proj_.project(out.H, L);
    out.H = blend(x, out.H);
  }
  return out;
}

UpresStep upres_step(const Upscaler& up, const ReducedState& R_prev, const StateVector& L) {
  return up.step(R_prev, L);
}

StateVector blend_fields(const Upscaler& up, const StateVector& projected, const StateVector& direct) {
  return up.blend(projected, direct);
}

}  // namespace kdmd
