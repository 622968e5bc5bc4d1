#include "kdmd/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kdmd/error.hpp"
#include "kdmd/io.hpp"

namespace kdmd {

void SnapshotMatrix::validate() const {
  if (states.cols() < 2) throw InvalidArgument("snapshot matrix needs at least two frames");
  if (states.rows() < 1) throw InvalidArgument("snapshot matrix has no rows");
  if (!(dt > 0.0)) throw InvalidArgument("snapshot spacing dt must be positive");
  if (!states.allFinite()) throw InvalidArgument("snapshot matrix has non-finite entries");
  if (grid && grid->state_size() != states.rows())
    throw DimensionError("snapshot rows do not match the grid state size");
}

void SimParams::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (!(cg_tol > 0.0 && cg_tol < 1.0)) throw InvalidArgument("cg_tol must lie in (0, 1)");
  if (cg_max_iters < 1) throw InvalidArgument("cg_max_iters must be at least 1");
  if (!(vorticity_eps >= 0.0)) throw InvalidArgument("vorticity_eps must be nonnegative");
}

void SceneConfig::validate() const {
  grid.validate();
  params.validate();
  if (frames < 2) throw InvalidArgument("a dataset needs at least two frames");
  if (warmup_frames < 0 || record_every < 1) throw InvalidArgument("bad recording schedule");
}

SceneConfig plume_scene(int nx, int ny) {
  SceneConfig s;
  s.name = "plume";
  s.kind = SceneKind::Plume;
  s.grid = GridSpec(nx, ny, 1.0 / nx);
  s.params.dt = 0.02;
  s.params.buoyancy_alpha = 0.0;
  s.params.buoyancy_beta = 1.0;
  s.params.vorticity_eps = 1.5;
  s.params.sources.push_back(Emitter{Disk{0.5, 0.15, 0.08}, 1.0, 2.0});
  s.frames = 300;
  s.warmup_frames = 20;
  return s;
}

SceneConfig buoyant_scene(int nx, int ny) {
  SceneConfig s;
  s.name = "buoyant";
  s.kind = SceneKind::Buoyant;
  s.grid = GridSpec(nx, ny, 1.0 / nx);
  s.params.dt = 0.02;
  s.params.buoyancy_alpha = 0.0;
  s.params.buoyancy_beta = 0.25;
  s.params.vorticity_eps = 0.0;
  const double aspect = static_cast<double>(ny) / nx;
  s.regions = {Disk{0.35, 0.2 * aspect, 0.1}, Disk{0.6, 0.25 * aspect, 0.08}, Disk{0.5, 0.12 * aspect, 0.07}};
  s.region_up_velocity = 0.3;
  s.outside_down_velocity = 0.1;
  s.frames = 300;
  return s;
}

namespace {

// Layout of one sampled quantity on the grid, in cell units.
struct Layout {
  int cols;
  int rows;
  double ox;
  double oy;
};

Layout scalar_layout(const GridSpec& g) { return {g.nx, g.ny, 0.5, 0.5}; }
Layout u_layout(const GridSpec& g) { return {g.nx + 1, g.ny, 0.0, 0.5}; }
Layout v_layout(const GridSpec& g) { return {g.nx, g.ny + 1, 0.5, 0.0}; }

struct Range {
  double lo;
  double hi;
};

// Bilinear sample at (x, y) in cell units; positions are clamped to the
// layout's sample points.
double sample(const Vec& q, const Layout& L, double x, double y, Range* range = nullptr) {
  double gx = std::clamp(x - L.ox, 0.0, static_cast<double>(L.cols - 1));
  double gy = std::clamp(y - L.oy, 0.0, static_cast<double>(L.rows - 1));
  int i0 = std::min(static_cast<int>(gx), L.cols - 2);
  int j0 = std::min(static_cast<int>(gy), L.rows - 2);
  const double fx = gx - i0;
  const double fy = gy - j0;
  const double a = q[j0 * L.cols + i0];
  const double b = q[j0 * L.cols + i0 + 1];
  const double c = q[(j0 + 1) * L.cols + i0];
  const double d = q[(j0 + 1) * L.cols + i0 + 1];
  if (range) {
    range->lo = std::min({a, b, c, d});
    range->hi = std::max({a, b, c, d});
  }
  return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
}

struct VelocitySampler {
  const MacField& vel;
  Layout lu;
  Layout lv;
  explicit VelocitySampler(const MacField& f) : vel(f), lu(u_layout(f.grid)), lv(v_layout(f.grid)) {}
  void operator()(double x, double y, double& ux, double& uy) const {
    ux = sample(vel.u, lu, x, y);
    uy = sample(vel.v, lv, x, y);
  }
};

// Semi-Lagrangian pass with a midpoint back trace.
Vec semi_lagrangian(const VelocitySampler& vs, const Vec& q, const Layout& L, double dt, double h,
                    std::vector<Range>* ranges) {
  Vec out(q.size());
  if (ranges) ranges->resize(static_cast<size_t>(q.size()));
  const double s = dt / h;
  for (int j = 0; j < L.rows; ++j)
    for (int i = 0; i < L.cols; ++i) {
      const double x = i + L.ox;
      const double y = j + L.oy;
      double ux, uy;
      vs(x, y, ux, uy);
      double mx = x - 0.5 * s * ux;
      double my = y - 0.5 * s * uy;
      vs(mx, my, ux, uy);
      const int idx = j * L.cols + i;
      out[idx] = sample(q, L, x - s * ux, y - s * uy, ranges ? &(*ranges)[static_cast<size_t>(idx)] : nullptr);
    }
  return out;
}

Vec maccormack(const VelocitySampler& vs, const Vec& q, const Layout& L, double dt, double h) {
  std::vector<Range> ranges;
  Vec hat = semi_lagrangian(vs, q, L, dt, h, &ranges);
  Vec tilde = semi_lagrangian(vs, hat, L, -dt, h, nullptr);
  Vec out(q.size());
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    const double corrected = hat[k] + 0.5 * (q[k] - tilde[k]);
    out[k] = std::clamp(corrected, ranges[static_cast<size_t>(k)].lo, ranges[static_cast<size_t>(k)].hi);
  }
  return out;
}

}  // namespace

ScalarField advect_maccormack(const MacField& vel, const ScalarField& q, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("advection dt must be positive");
  if (!(q.grid == vel.grid)) throw DimensionError("scalar and velocity grids differ");
  VelocitySampler vs(vel);
  ScalarField out(q.grid);
  out.values = maccormack(vs, q.values, scalar_layout(q.grid), dt, q.grid.h);
  return out;
}

MacField advect_maccormack(const MacField& vel, const MacField& q, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("advection dt must be positive");
  if (!(q.grid == vel.grid)) throw DimensionError("advected and transporting grids differ");
  VelocitySampler vs(vel);
  MacField out(q.grid);
  out.u = maccormack(vs, q.u, u_layout(q.grid), dt, q.grid.h);
  out.v = maccormack(vs, q.v, v_layout(q.grid), dt, q.grid.h);
  apply_boundary_mask(out);
  return out;
}

namespace {

// Five-point Poisson matrix over fluid cells, stored by neighbor coefficients.
struct PoissonSystem {
  int nx, ny;
  Vec diag, plus_i, plus_j;
  std::vector<std::uint8_t> fluid;

  explicit PoissonSystem(const GridSpec& g)
      : nx(g.nx), ny(g.ny), diag(Vec::Zero(g.cells())), plus_i(Vec::Zero(g.cells())),
        plus_j(Vec::Zero(g.cells())), fluid(static_cast<size_t>(g.cells()), 0) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (!g.is_fluid(i, j)) continue;
        const int c = g.cell(i, j);
        fluid[static_cast<size_t>(c)] = 1;
        const int nbrs[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (const auto& nb : nbrs)
          if (g.is_fluid(nb[0], nb[1])) diag[c] += 1.0;  // includes the open top (p = 0 outside)
        if (i + 1 < nx && g.is_fluid(i + 1, j)) plus_i[c] = -1.0;
        if (j + 1 < ny && g.is_fluid(i, j + 1)) plus_j[c] = -1.0;
      }
  }

  void apply(const Vec& p, Vec& out) const {
    out.resize(p.size());
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int c = j * nx + i;
        double s = diag[c] * p[c];
        if (i + 1 < nx) s += plus_i[c] * p[c + 1];
        if (i > 0) s += plus_i[c - 1] * p[c - 1];
        if (j + 1 < ny) s += plus_j[c] * p[c + nx];
        if (j > 0) s += plus_j[c - nx] * p[c - nx];
        out[c] = s;
      }
  }
};

// Modified incomplete Cholesky, level zero.
struct MicPreconditioner {
  const PoissonSystem& A;
  Vec precon;
  mutable Vec q;

  explicit MicPreconditioner(const PoissonSystem& sys) : A(sys), precon(Vec::Zero(sys.diag.size())) {
    constexpr double tau = 0.97;
    constexpr double sigma = 0.25;
    const int nx = A.nx;
    for (int j = 0; j < A.ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int c = j * nx + i;
        if (!A.fluid[static_cast<size_t>(c)] || A.diag[c] == 0.0) continue;
        double e = A.diag[c];
        if (i > 0) {
          const double t = A.plus_i[c - 1] * precon[c - 1];
          e -= t * t + tau * A.plus_i[c - 1] * A.plus_j[c - 1] * precon[c - 1] * precon[c - 1];
        }
        if (j > 0) {
          const double t = A.plus_j[c - nx] * precon[c - nx];
          e -= t * t + tau * A.plus_j[c - nx] * A.plus_i[c - nx] * precon[c - nx] * precon[c - nx];
        }
        if (e < sigma * A.diag[c]) e = A.diag[c];
        precon[c] = 1.0 / std::sqrt(e);
      }
  }

  void apply(const Vec& r, Vec& z) const {
    const int nx = A.nx;
    const int ny = A.ny;
    q.setZero(r.size());
    z.setZero(r.size());
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int c = j * nx + i;
        if (precon[c] == 0.0) continue;
        double t = r[c];
        if (i > 0) t -= A.plus_i[c - 1] * precon[c - 1] * q[c - 1];
        if (j > 0) t -= A.plus_j[c - nx] * precon[c - nx] * q[c - nx];
        q[c] = t * precon[c];
      }
    for (int j = ny - 1; j >= 0; --j)
      for (int i = nx - 1; i >= 0; --i) {
        const int c = j * nx + i;
        if (precon[c] == 0.0) continue;
        double t = q[c];
        if (i + 1 < nx) t -= A.plus_i[c] * precon[c] * z[c + 1];
        if (j + 1 < ny) t -= A.plus_j[c] * precon[c] * z[c + nx];
        z[c] = t * precon[c];
      }
  }
};

// Removes the mean of b over every connected fluid region that has no
// Dirichlet cell, making the pure-Neumann system consistent.
void make_consistent(const GridSpec& g, const PoissonSystem& sys, Vec& b) {
  std::vector<int> label(static_cast<size_t>(g.cells()), -1);
  std::vector<int> stack;
  int next = 0;
  for (int start = 0; start < g.cells(); ++start) {
    if (!sys.fluid[static_cast<size_t>(start)] || label[static_cast<size_t>(start)] >= 0) continue;
    std::vector<int> members;
    bool dirichlet = false;
    stack.push_back(start);
    label[static_cast<size_t>(start)] = next;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      members.push_back(c);
      const int i = c % g.nx;
      const int j = c / g.nx;
      if (j == g.ny - 1 && g.boundary == Boundary::Open) dirichlet = true;
      const int nbrs[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= g.nx || nb[1] < 0 || nb[1] >= g.ny) continue;
        const int d = g.cell(nb[0], nb[1]);
        if (sys.fluid[static_cast<size_t>(d)] && label[static_cast<size_t>(d)] < 0) {
          label[static_cast<size_t>(d)] = next;
          stack.push_back(d);
        }
      }
    }
    ++next;
    if (dirichlet) continue;
    double mean = 0.0;
    for (int c : members) mean += b[c];
    mean /= static_cast<double>(members.size());
    for (int c : members) b[c] -= mean;
  }
}

}  // namespace

MacField project_pressure(const MacField& vel, double cg_tol, int cg_max_iters, ProjectionStats* stats) {
  if (!(cg_tol > 0.0 && cg_tol < 1.0)) throw InvalidArgument("cg_tol must lie in (0, 1)");
  if (cg_max_iters < 1) throw InvalidArgument("cg_max_iters must be at least 1");
  const GridSpec& g = vel.grid;
  MacField out = vel;
  apply_boundary_mask(out);

  PoissonSystem sys(g);
  // A p = -h * div(u); faces then update by u -= (p_hi - p_lo).
  Vec b = Vec::Zero(g.cells());
  const ScalarField div = divergence(out);
  for (int c = 0; c < g.cells(); ++c)
    if (sys.fluid[static_cast<size_t>(c)]) b[c] = -g.h * div.values[c];
  make_consistent(g, sys, b);

  const double b_norm = b.lpNorm<Eigen::Infinity>();
  if (stats) *stats = {0, 0.0};
  if (b_norm == 0.0) return out;

  MicPreconditioner M(sys);
  Vec p = Vec::Zero(g.cells());
  Vec r = b;
  Vec z, s, As;
  M.apply(r, z);
  s = z;
  double rho = z.dot(r);
  double rel = 1.0;
  int it = 0;
  bool converged = false;
  while (it < cg_max_iters) {
    sys.apply(s, As);
    const double alpha = rho / s.dot(As);
    p += alpha * s;
    r -= alpha * As;
    ++it;
    rel = r.lpNorm<Eigen::Infinity>() / b_norm;
    if (rel <= cg_tol) {
      converged = true;
      break;
    }
    M.apply(r, z);
    const double rho_new = z.dot(r);
    s = z + (rho_new / rho) * s;
    rho = rho_new;
  }
  if (stats) *stats = {it, rel};
  if (!converged)
    throw NonConvergence("pressure solve did not converge after " + std::to_string(it) +
                             " iterations (relative residual " + std::to_string(rel) + ")",
                         rel);

  for (int j = 0; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i)
      if (sys.fluid[static_cast<size_t>(g.cell(i - 1, j))] && sys.fluid[static_cast<size_t>(g.cell(i, j))])
        out.u_at(i, j) -= p[g.cell(i, j)] - p[g.cell(i - 1, j)];
  for (int j = 1; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (sys.fluid[static_cast<size_t>(g.cell(i, j - 1))] && sys.fluid[static_cast<size_t>(g.cell(i, j))])
        out.v_at(i, j) -= p[g.cell(i, j)] - p[g.cell(i, j - 1)];
  if (g.boundary == Boundary::Open)
    for (int i = 0; i < g.nx; ++i)
      if (sys.fluid[static_cast<size_t>(g.cell(i, g.ny - 1))]) out.v_at(i, g.ny) -= 0.0 - p[g.cell(i, g.ny - 1)];
  apply_boundary_mask(out);
  return out;
}

BuoyancyOperators buoyancy_operators(const GridSpec& g, double alpha, double beta) {
  // Probe which v faces survive the boundary mask.
  MacField probe(g);
  probe.v.setOnes();
  apply_boundary_mask(probe);
  std::vector<Eigen::Triplet<double>> td, tt;
  const int off = g.u_count();
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      if (probe.v_at(i, j) == 0.0) continue;
      const int row = off + g.v_index(i, j);
      for (int jj : {j - 1, j}) {
        if (jj < 0 || jj >= g.ny) continue;
        if (alpha != 0.0) td.emplace_back(row, g.cell(i, jj), -0.5 * alpha);
        if (beta != 0.0) tt.emplace_back(row, g.cell(i, jj), 0.5 * beta);
      }
    }
  BuoyancyOperators ops{LinearMap(g.state_size(), g.cells()), LinearMap(g.state_size(), g.cells())};
  ops.density_op.setFromTriplets(td.begin(), td.end());
  ops.temperature_op.setFromTriplets(tt.begin(), tt.end());
  return ops;
}

MacField add_body_forces(const MacField& vel, const ScalarField& density, const ScalarField& temperature,
                         const SimParams& params, double dt) {
  const GridSpec& g = vel.grid;
  if (!(density.grid == g) || !(temperature.grid == g)) throw DimensionError("body-force fields on different grids");
  MacField out = vel;
  if (params.buoyancy_alpha == 0.0 && params.buoyancy_beta == 0.0) return out;
  auto cell_or_zero = [&](const ScalarField& f, int i, int j) { return (j < 0 || j >= g.ny) ? 0.0 : f.at(i, j); };
  MacField inc(g);
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double rho = 0.5 * (cell_or_zero(density, i, j - 1) + cell_or_zero(density, i, j));
      const double temp = 0.5 * (cell_or_zero(temperature, i, j - 1) + cell_or_zero(temperature, i, j));
      inc.v_at(i, j) = dt * (-params.buoyancy_alpha * rho + params.buoyancy_beta * temp);
    }
  apply_boundary_mask(inc);
  out.v += inc.v;
  return out;
}

ScalarField curl(const MacField& vel) {
  const GridSpec& g = vel.grid;
  Vec uc, vc;
  cell_centered_velocity(vel, uc, vc);
  ScalarField w(g);
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      if (g.is_solid(i, j)) continue;
      w.at(i, j) = (vc[g.cell(i + 1, j)] - vc[g.cell(i - 1, j)] - uc[g.cell(i, j + 1)] + uc[g.cell(i, j - 1)]) /
                   (2.0 * g.h);
    }
  return w;
}

MacField vorticity_confinement(const MacField& vel, double eps, double dt) {
  if (!(eps >= 0.0)) throw InvalidArgument("vorticity confinement strength must be nonnegative");
  MacField out = vel;
  if (eps == 0.0) return out;
  const GridSpec& g = vel.grid;
  const ScalarField w = curl(vel);
  Vec fx = Vec::Zero(g.cells());
  Vec fy = Vec::Zero(g.cells());
  for (int j = 1; j < g.ny - 1; ++j)
    for (int i = 1; i < g.nx - 1; ++i) {
      const double gx = (std::abs(w.at(i + 1, j)) - std::abs(w.at(i - 1, j))) / (2.0 * g.h);
      const double gy = (std::abs(w.at(i, j + 1)) - std::abs(w.at(i, j - 1))) / (2.0 * g.h);
      const double len = std::sqrt(gx * gx + gy * gy) + 1e-20;
      const double Nx = gx / len;
      const double Ny = gy / len;
      const double omega = w.at(i, j);
      // N x (omega z) = (Ny * omega, -Nx * omega)
      fx[g.cell(i, j)] = eps * g.h * Ny * omega;
      fy[g.cell(i, j)] = -eps * g.h * Nx * omega;
    }
  auto at = [&](const Vec& f, int i, int j) {
    return (i < 0 || i >= g.nx || j < 0 || j >= g.ny) ? 0.0 : f[g.cell(i, j)];
  };
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i <= g.nx; ++i) out.u_at(i, j) += dt * 0.5 * (at(fx, i - 1, j) + at(fx, i, j));
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) out.v_at(i, j) += dt * 0.5 * (at(fy, i, j - 1) + at(fy, i, j));
  apply_boundary_mask(out);
  return out;
}

void inject_sources(FluidState& state, const SimParams& params, double dt) {
  const GridSpec& g = state.density.grid;
  for (const Emitter& e : params.sources)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        if (g.is_solid(i, j) || !e.region.contains((i + 0.5) * g.h, (j + 0.5) * g.h)) continue;
        state.density.at(i, j) += e.density_rate * dt;
        state.temperature.at(i, j) += e.temperature_rate * dt;
      }
}

FluidState step(const FluidState& state, const SimParams& params) {
  const double dt = params.dt;
  FluidState s = state;
  inject_sources(s, params, dt);
  FluidState next(s.velocity.grid);
  next.velocity = advect_maccormack(s.velocity, s.velocity, dt);
  next.density = advect_maccormack(s.velocity, s.density, dt);
  next.temperature = advect_maccormack(s.velocity, s.temperature, dt);
  next.velocity = add_body_forces(next.velocity, next.density, next.temperature, params, dt);
  next.velocity = vorticity_confinement(next.velocity, params.vorticity_eps, dt);
  next.velocity = project_pressure(next.velocity, params.cg_tol, params.cg_max_iters);
  return next;
}

FluidState initial_state(const SceneConfig& scene) {
  GridSpec g = scene.grid;
  if (!scene.obstacles.empty()) {
    g.solid.assign(static_cast<size_t>(g.cells()), 0);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        for (const Disk& d : scene.obstacles)
          if (d.contains((i + 0.5) * g.h, (j + 0.5) * g.h)) g.solid[static_cast<size_t>(g.cell(i, j))] = 1;
  }
  FluidState s(g);
  if (scene.kind != SceneKind::Buoyant) return s;

  auto inside = [&](double x, double y) {
    return std::any_of(scene.regions.begin(), scene.regions.end(), [&](const Disk& d) { return d.contains(x, y); });
  };
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (!g.is_solid(i, j) && inside((i + 0.5) * g.h, (j + 0.5) * g.h)) {
        s.density.at(i, j) = 1.0;
        s.temperature.at(i, j) = 1.0;
      }
  for (int j = 0; j <= g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      s.velocity.v_at(i, j) =
          inside((i + 0.5) * g.h, j * g.h) ? scene.region_up_velocity : -scene.outside_down_velocity;
  s.velocity = project_pressure(s.velocity, scene.params.cg_tol, scene.params.cg_max_iters);
  return s;
}

Dataset generate_dataset(const SceneConfig& scene) {
  scene.validate();
  FluidState state = initial_state(scene);
  const GridSpec& g = state.velocity.grid;
  for (int k = 0; k < scene.warmup_frames; ++k) state = step(state, scene.params);

  Dataset out;
  out.snapshots.states.resize(g.state_size(), scene.frames);
  out.snapshots.dt = scene.params.dt * scene.record_every;
  out.snapshots.grid = g;
  out.density.resize(g.cells(), scene.frames);
  for (int f = 0; f < scene.frames; ++f) {
    if (f > 0)
      for (int k = 0; k < scene.record_every; ++k) state = step(state, scene.params);
    out.snapshots.states.col(f) = flatten(state.velocity);
    out.density.col(f) = state.density.values;
  }
  out.snapshots.provenance = dataset_provenance(scene);
  return out;
}

}  // namespace kdmd
