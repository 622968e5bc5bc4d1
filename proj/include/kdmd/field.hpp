#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kdmd/types.hpp"

namespace kdmd {

enum class Boundary { ClosedBox, Open };

std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

// Cell-centered uniform grid. Cell (i, j) spans [i*h, (i+1)*h] x [j*h, (j+1)*h],
// j increasing upward.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double h = 1.0;
  Boundary boundary = Boundary::ClosedBox;
  std::vector<std::uint8_t> solid;  // nx*ny flags, empty means no obstacles

  GridSpec() = default;
  GridSpec(int nx_, int ny_, double h_, Boundary b = Boundary::ClosedBox);

  void validate() const;

  int cells() const { return nx * ny; }
  int u_count() const { return (nx + 1) * ny; }
  int v_count() const { return nx * (ny + 1); }
  int state_size() const { return u_count() + v_count(); }

  int cell(int i, int j) const { return j * nx + i; }
  int u_index(int i, int j) const { return j * (nx + 1) + i; }
  int v_index(int i, int j) const { return j * nx + i; }

  bool is_solid(int i, int j) const {
    return !solid.empty() && solid[static_cast<size_t>(cell(i, j))] != 0;
  }
  // Cells outside the domain count as solid walls, except above the top edge
  // of an open domain.
  bool is_fluid(int i, int j) const;

  bool operator==(const GridSpec&) const = default;
};

struct ScalarField {
  GridSpec grid;
  Vec values;  // nx*ny, index grid.cell(i, j)

  ScalarField() = default;
  explicit ScalarField(const GridSpec& g) : grid(g), values(Vec::Zero(g.cells())) {}

  double& at(int i, int j) { return values[grid.cell(i, j)]; }
  double at(int i, int j) const { return values[grid.cell(i, j)]; }
};

// Staggered velocity. u lives on vertical faces (i*h, (j+0.5)*h), v on
// horizontal faces ((i+0.5)*h, j*h).
struct MacField {
  GridSpec grid;
  Vec u;  // (nx+1)*ny
  Vec v;  // nx*(ny+1)

  MacField() = default;
  explicit MacField(const GridSpec& g)
      : grid(g), u(Vec::Zero(g.u_count())), v(Vec::Zero(g.v_count())) {}

  double& u_at(int i, int j) { return u[grid.u_index(i, j)]; }
  double u_at(int i, int j) const { return u[grid.u_index(i, j)]; }
  double& v_at(int i, int j) { return v[grid.v_index(i, j)]; }
  double v_at(int i, int j) const { return v[grid.v_index(i, j)]; }

  void validate() const;
};

StateVector flatten(const MacField& field);
MacField unflatten(const StateVector& vec, const GridSpec& grid);

ScalarField divergence(const MacField& field);
double max_abs_divergence(const MacField& field);
// The divergence stencil as a (fluid cells) x n matrix acting on flattened states.
LinearMap divergence_operator(const GridSpec& grid);

// Zeroes the normal velocity on domain walls and on faces touching solid cells.
void apply_boundary_mask(MacField& field);

// Kinetic energy 0.5 * sum of squared face velocities times h^2.
double kinetic_energy(const StateVector& state, const GridSpec& grid);

// Cell-centered velocity components (averages of the two bounding faces).
void cell_centered_velocity(const MacField& field, Vec& uc, Vec& vc);

GridSpec coarsen(const GridSpec& high, int factor);

// Averaging operator high -> low. Each low face is the mean of the `factor`
// high faces lying on it; rows sum to one.
LinearMap build_downsample(const GridSpec& high, int factor);

// Piecewise-constant embedding low -> high: each high face takes the value of
// the nearest low face of the same orientation inside its coarse row/column.
// Satisfies build_downsample * build_injection = identity.
LinearMap build_injection(const GridSpec& high, int factor);

}  // namespace kdmd
