#include "kdmd/edit.hpp"

#include <cmath>
#include <string>

#include "kdmd/error.hpp"

namespace kdmd {

namespace {
double value_or_one(const std::vector<double>& v, Eigen::Index i) {
  return v.empty() ? 1.0 : v[static_cast<size_t>(i)];
}

void ensure_sized(std::vector<double>& v, Eigen::Index r) {
  if (v.empty()) v.assign(static_cast<size_t>(r), 1.0);
}
}  // namespace

EditSpec EditSpec::identity(Eigen::Index r) {
  EditSpec s;
  s.weights.assign(static_cast<size_t>(r), 1.0);
  s.growth_scale.assign(static_cast<size_t>(r), 1.0);
  s.freq_scale.assign(static_cast<size_t>(r), 1.0);
  return s;
}

EditSpec EditSpec::from_clusters(const ReducedModel& model, const ModeAdjust& low, const ModeAdjust& high,
                                 double threshold) {
  EditSpec s = identity(model.r());
  s.cluster_threshold = threshold;
  const Clusters c = cluster_modes(model, threshold);
  for (int i : c.low) s.set_mode(model, i, low);
  for (int i : c.high) s.set_mode(model, i, high);
  return s;
}

void EditSpec::set_mode(const ReducedModel& model, int i, const ModeAdjust& adj) {
  const Eigen::Index r = model.r();
  if (i < 0 || i >= r) throw DimensionError("mode index " + std::to_string(i) + " out of range");
  ensure_sized(weights, r);
  ensure_sized(growth_scale, r);
  ensure_sized(freq_scale, r);
  const auto partner = conjugate_partners(model.lambda);
  for (int k : {i, partner[static_cast<size_t>(i)]}) {
    weights[static_cast<size_t>(k)] = adj.weight;
    growth_scale[static_cast<size_t>(k)] = adj.growth_scale;
    freq_scale[static_cast<size_t>(k)] = adj.freq_scale;
  }
}

ModeAdjust EditSpec::mode(Eigen::Index i) const {
  return {value_or_one(weights, i), value_or_one(growth_scale, i), value_or_one(freq_scale, i)};
}

void EditSpec::validate(const ReducedModel& model) const {
  const auto r = static_cast<size_t>(model.r());
  for (const auto* v : {&weights, &growth_scale, &freq_scale})
    if (!v->empty() && v->size() != r)
      throw DimensionError("edit spec has " + std::to_string(v->size()) + " entries for a rank-" +
                           std::to_string(r) + " model");
  for (const auto* v : {&weights, &growth_scale, &freq_scale})
    for (double x : *v)
      if (!std::isfinite(x)) throw InvalidArgument("edit spec has non-finite entries");
  for (double w : weights)
    if (w < 0.0) throw InvalidArgument("edit weights must be nonnegative");
  if (!(cluster_threshold > 0.0)) throw InvalidArgument("cluster threshold must be positive");
  const auto partner = conjugate_partners(model.lambda);
  for (size_t i = 0; i < r; ++i) {
    const ModeAdjust a = mode(static_cast<Eigen::Index>(i));
    const ModeAdjust b = mode(partner[i]);
    if (a.weight != b.weight || a.growth_scale != b.growth_scale || a.freq_scale != b.freq_scale)
      throw InvalidArgument("conjugate modes " + std::to_string(i) + " and " + std::to_string(partner[i]) +
                            " carry different edits");
  }
}

CVec omega(const ReducedModel& model) {
  CVec out(model.r());
  for (Eigen::Index i = 0; i < model.r(); ++i) {
    if (std::abs(model.lambda[i]) == 0.0)
      throw InvalidArgument("mode " + std::to_string(i) + " has a zero eigenvalue; its rate is undefined");
    out[i] = std::log(model.lambda[i]) / model.dt;
  }
  return out;
}

Clusters cluster_modes(const ReducedModel& model, double threshold) {
  if (!(threshold > 0.0)) throw InvalidArgument("cluster threshold must be positive");
  Clusters c;
  for (Eigen::Index i = 0; i < model.r(); ++i) {
    // |Im(Omega)| = |arg(lambda)| / dt; zero eigenvalues count as static.
    const double freq = std::abs(model.lambda[i]) == 0.0 ? 0.0 : std::abs(std::arg(model.lambda[i])) / model.dt;
    (freq < threshold ? c.low : c.high).push_back(static_cast<int>(i));
  }
  return c;
}

ReducedModel apply_edit(const ReducedModel& model, const EditSpec& spec) {
  spec.validate(model);
  ReducedModel out = model;
  for (Eigen::Index i = 0; i < model.r(); ++i) {
    const ModeAdjust a = spec.mode(i);
    if (a.weight != 1.0) out.phi.col(i) *= a.weight;
    const cplx lam = model.lambda[i];
    const bool real = lam.imag() == 0.0;
    const double fs = real ? 1.0 : a.freq_scale;
    if ((a.growth_scale == 1.0 && fs == 1.0) || std::abs(lam) == 0.0) continue;
    const cplx om = std::log(lam) / model.dt;
    const cplx scaled(a.growth_scale * om.real(), fs * om.imag());
    out.lambda[i] = std::exp(scaled * model.dt);
    if (real && lam.real() < 0.0) out.lambda[i] = -std::abs(out.lambda[i]);
    else if (real) out.lambda[i] = out.lambda[i].real();
  }
  out.provenance.edited = true;
  out.provenance.unstable = (out.lambda.array().abs() > kUnstableModulus).any();
  return out;
}

}  // namespace kdmd
