#include "kdmd/field.hpp"

#include <cmath>

#include "kdmd/error.hpp"

namespace kdmd {

std::string to_string(Boundary b) { return b == Boundary::Open ? "open" : "closed-box"; }

Boundary boundary_from_string(const std::string& s) {
  if (s == "open") return Boundary::Open;
  if (s == "closed-box" || s == "closed") return Boundary::ClosedBox;
  throw InvalidArgument("unknown boundary '" + s + "'");
}

GridSpec::GridSpec(int nx_, int ny_, double h_, Boundary b) : nx(nx_), ny(ny_), h(h_), boundary(b) {
  validate();
}

void GridSpec::validate() const {
  if (nx < 2 || ny < 2) throw InvalidArgument("grid needs at least 2x2 cells");
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("grid cell width must be positive");
  if (!solid.empty() && solid.size() != static_cast<size_t>(nx) * ny)
    throw DimensionError("solid mask must have nx*ny entries");
}

bool GridSpec::is_fluid(int i, int j) const {
  if (i < 0 || i >= nx || j < 0) return false;
  if (j >= ny) return boundary == Boundary::Open;
  return !is_solid(i, j);
}

void MacField::validate() const {
  grid.validate();
  if (u.size() != grid.u_count() || v.size() != grid.v_count())
    throw DimensionError("velocity arrays do not match grid");
  if (!u.allFinite() || !v.allFinite()) throw InvalidArgument("velocity has non-finite entries");
}

StateVector flatten(const MacField& field) {
  StateVector out(field.grid.state_size());
  out << field.u, field.v;
  return out;
}

MacField unflatten(const StateVector& vec, const GridSpec& grid) {
  if (vec.size() != grid.state_size())
    throw DimensionError("state length " + std::to_string(vec.size()) + " does not match grid size " +
                         std::to_string(grid.state_size()));
  MacField f(grid);
  f.u = vec.head(grid.u_count());
  f.v = vec.tail(grid.v_count());
  return f;
}

ScalarField divergence(const MacField& field) {
  const GridSpec& g = field.grid;
  ScalarField div(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      div.at(i, j) = (field.u_at(i + 1, j) - field.u_at(i, j) + field.v_at(i, j + 1) - field.v_at(i, j)) / g.h;
  return div;
}

double max_abs_divergence(const MacField& field) {
  const GridSpec& g = field.grid;
  double m = 0.0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (g.is_solid(i, j)) continue;
      const double d =
          (field.u_at(i + 1, j) - field.u_at(i, j) + field.v_at(i, j + 1) - field.v_at(i, j)) / g.h;
      m = std::max(m, std::abs(d));
    }
  return m;
}

LinearMap divergence_operator(const GridSpec& g) {
  std::vector<Eigen::Triplet<double>> t;
  const int off = g.u_count();
  const double s = 1.0 / g.h;
  int row = 0;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (g.is_solid(i, j)) continue;
      t.emplace_back(row, g.u_index(i + 1, j), s);
      t.emplace_back(row, g.u_index(i, j), -s);
      t.emplace_back(row, off + g.v_index(i, j + 1), s);
      t.emplace_back(row, off + g.v_index(i, j), -s);
      ++row;
    }
  LinearMap C(row, g.state_size());
  C.setFromTriplets(t.begin(), t.end());
  return C;
}

void apply_boundary_mask(MacField& field) {
  const GridSpec& g = field.grid;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i)
      if (!g.is_fluid(i - 1, j) || !g.is_fluid(i, j)) field.u_at(i, j) = 0.0;
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const bool below = g.is_fluid(i, j - 1);
      const bool above = g.is_fluid(i, j);
      // The open top keeps its outflow face.
      if (j == g.ny && g.boundary == Boundary::Open) {
        if (!below) field.v_at(i, j) = 0.0;
        continue;
      }
      if (!below || !above) field.v_at(i, j) = 0.0;
    }
}

double kinetic_energy(const StateVector& state, const GridSpec& grid) {
  return 0.5 * state.squaredNorm() * grid.h * grid.h;
}

void cell_centered_velocity(const MacField& field, Vec& uc, Vec& vc) {
  const GridSpec& g = field.grid;
  uc.resize(g.cells());
  vc.resize(g.cells());
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      uc[g.cell(i, j)] = 0.5 * (field.u_at(i, j) + field.u_at(i + 1, j));
      vc[g.cell(i, j)] = 0.5 * (field.v_at(i, j) + field.v_at(i, j + 1));
    }
}

GridSpec coarsen(const GridSpec& high, int factor) {
  if (factor < 2) throw InvalidArgument("downsample factor must be at least 2");
  if (high.nx % factor != 0 || high.ny % factor != 0)
    throw InvalidArgument("grid dimensions " + std::to_string(high.nx) + "x" + std::to_string(high.ny) +
                          " are not divisible by " + std::to_string(factor));
  if (high.nx / factor < 2 || high.ny / factor < 2)
    throw InvalidArgument("coarse grid would be smaller than 2x2");
  GridSpec low(high.nx / factor, high.ny / factor, high.h * factor, high.boundary);
  if (!high.solid.empty()) {
    // A coarse cell is solid when any covered fine cell is.
    low.solid.assign(static_cast<size_t>(low.cells()), 0);
    for (int j = 0; j < high.ny; ++j)
      for (int i = 0; i < high.nx; ++i)
        if (high.is_solid(i, j)) low.solid[static_cast<size_t>(low.cell(i / factor, j / factor))] = 1;
  }
  return low;
}

LinearMap build_downsample(const GridSpec& high, int factor) {
  const GridSpec low = coarsen(high, factor);
  const double w = 1.0 / factor;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(low.state_size()) * factor);
  for (int J = 0; J < low.ny; ++J)
    for (int I = 0; I <= low.nx; ++I)
      for (int k = 0; k < factor; ++k)
        t.emplace_back(low.u_index(I, J), high.u_index(I * factor, J * factor + k), w);
  const int low_off = low.u_count();
  const int high_off = high.u_count();
  for (int J = 0; J <= low.ny; ++J)
    for (int I = 0; I < low.nx; ++I)
      for (int k = 0; k < factor; ++k)
        t.emplace_back(low_off + low.v_index(I, J), high_off + high.v_index(I * factor + k, J * factor), w);
  LinearMap A(low.state_size(), high.state_size());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

LinearMap build_injection(const GridSpec& high, int factor) {
  const GridSpec low = coarsen(high, factor);
  const int half = factor / 2;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<size_t>(high.state_size()));
  for (int j = 0; j < high.ny; ++j)
    for (int i = 0; i <= high.nx; ++i)
      t.emplace_back(high.u_index(i, j), low.u_index(std::min((i + half) / factor, low.nx), j / factor), 1.0);
  const int low_off = low.u_count();
  const int high_off = high.u_count();
  for (int j = 0; j <= high.ny; ++j)
    for (int i = 0; i < high.nx; ++i)
      t.emplace_back(high_off + high.v_index(i, j),
                     low_off + low.v_index(i / factor, std::min((j + half) / factor, low.ny)), 1.0);
  LinearMap E(high.state_size(), low.state_size());
  E.setFromTriplets(t.begin(), t.end());
  return E;
}

}  // namespace kdmd
