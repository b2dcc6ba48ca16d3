#pragma once

// Coefficient fields on the fine grid: cellwise-constant permeability and a
// flux-based velocity representation.  Velocities always live as one normal
// flux per fine edge; inside a cell the lowest-order Raviart-Thomas
// reconstruction is used, which is exactly divergence-free whenever the four
// face fluxes of the cell balance.  That makes the transport forms' summation
// identities hold to machine precision instead of only to quadrature order.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"
#include "stgms/util.hpp"

namespace stgms {

//! Cellwise-constant permeability on the fine grid, row y=0 first.
struct PermeabilityField {
  int nx = 0, ny = 0;
  std::vector<double> value;

  double at(int ix, int iy) const { return value[static_cast<size_t>(iy) * nx + ix]; }
  double& at(int ix, int iy) { return value[static_cast<size_t>(iy) * nx + ix]; }
};

//! One normal flux per fine edge (integral of v.n over the edge, taken with
//! the grid's +x / +y edge normals).
struct VelocityField {
  std::vector<double> flux;

  std::uint64_t hash() const { return hash_doubles(flux); }
};

//! RT0 data of one fine cell; local coordinates run over [0,1]^2.
struct CellVelocity {
  double fl = 0, fr = 0, fb = 0, ft = 0;  // left/right/bottom/top edge fluxes
  double hx = 0, hy = 0;

  double vx(double xhat) const { return (fl * (1.0 - xhat) + fr * xhat) / hy; }
  double vy(double yhat) const { return (fb * (1.0 - yhat) + ft * yhat) / hx; }
};

inline CellVelocity cell_velocity(const SpaceTimeMesh& mesh, const VelocityField& vel, int ixf, int iyf) {
  CellVelocity c;
  c.hx = mesh.hx();
  c.hy = mesh.hy();
  c.fl = vel.flux[mesh.vertical_edge_id(ixf, iyf)];
  c.fr = vel.flux[mesh.vertical_edge_id(ixf + 1, iyf)];
  c.fb = vel.flux[mesh.horizontal_edge_id(ixf, iyf)];
  c.ft = vel.flux[mesh.horizontal_edge_id(ixf, iyf + 1)];
  return c;
}

//! Net outflow of a fine cell; zero for conservative fields.
inline double cell_divergence(const SpaceTimeMesh& mesh, const VelocityField& vel, int ixf, int iyf) {
  return vel.flux[mesh.vertical_edge_id(ixf + 1, iyf)] - vel.flux[mesh.vertical_edge_id(ixf, iyf)] +
         vel.flux[mesh.horizontal_edge_id(ixf, iyf + 1)] - vel.flux[mesh.horizontal_edge_id(ixf, iyf)];
}

// ---------------------------------------------------------------------------
// permeability IO and generation

inline void save_permeability(const std::string& path, const PermeabilityField& k) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_permeability: cannot open " + path);
  out << k.nx << " " << k.ny << "\n";
  char buf[40];
  for (int iy = 0; iy < k.ny; ++iy) {
    for (int ix = 0; ix < k.nx; ++ix) {
      std::snprintf(buf, sizeof(buf), "%.17g", k.at(ix, iy));
      out << (ix ? " " : "") << buf;
    }
    out << "\n";
  }
}

inline PermeabilityField load_permeability(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_permeability: cannot open " + path);
  PermeabilityField k;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_permeability: missing header in " + path);
  {
    std::istringstream hs(line);
    if (!(hs >> k.nx >> k.ny) || k.nx < 1 || k.ny < 1)
      throw std::runtime_error("load_permeability: bad header '" + line + "' in " + path);
  }
  k.value.assign(static_cast<size_t>(k.nx) * k.ny, 0.0);
  for (int iy = 0; iy < k.ny; ++iy) {
    if (!std::getline(in, line))
      throw std::runtime_error("load_permeability: " + path + " ends at row " + std::to_string(iy) + " of " +
                               std::to_string(k.ny));
    std::istringstream ls(line);
    for (int ix = 0; ix < k.nx; ++ix) {
      double v;
      if (!(ls >> v))
        throw std::runtime_error("load_permeability: row " + std::to_string(iy) + " of " + path + " has fewer than " +
                                 std::to_string(k.nx) + " values");
      if (v <= 0.0)
        throw std::runtime_error("load_permeability: non-positive value at row " + std::to_string(iy) + ", column " +
                                 std::to_string(ix));
      k.at(ix, iy) = v;
    }
  }
  return k;
}

//! Layout of the seeded generator: explicit horizontal channels, plus
//! randomly meandering channels and random rectangular inclusions.
struct PermeabilityLayout {
  struct Channel {
    int row = 0;    // fine-cell row of the channel's lower edge
    int width = 1;  // fine cells
  };
  std::vector<Channel> channels;
  int random_channels = 0;
  int random_channel_width = 1;
  int random_inclusions = 0;
  int inclusion_max_size = 3;  // fine cells per side
};

//! Deterministic in (seed, layout): background 1, channels at `contrast`,
//! inclusions log-uniform in [1, contrast].
inline PermeabilityField generate_permeability(int nx, int ny, std::uint64_t seed, double contrast,
                                               const PermeabilityLayout& layout) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("generate_permeability: grid must be at least 1x1");
  if (contrast < 1.0) throw std::invalid_argument("generate_permeability: contrast must be >= 1");
  PermeabilityField k;
  k.nx = nx;
  k.ny = ny;
  k.value.assign(static_cast<size_t>(nx) * ny, 1.0);
  for (const auto& ch : layout.channels)
    for (int w = 0; w < ch.width; ++w) {
      int iy = ch.row + w;
      if (iy < 0 || iy >= ny) continue;
      for (int ix = 0; ix < nx; ++ix) k.at(ix, iy) = contrast;
    }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row_pick(0, ny - 1);
  std::uniform_int_distribution<int> wobble(-1, 1);
  for (int c = 0; c < layout.random_channels; ++c) {
    int iy = row_pick(rng);
    for (int ix = 0; ix < nx; ++ix) {
      for (int w = 0; w < layout.random_channel_width; ++w) {
        int y = iy + w;
        if (y >= 0 && y < ny) k.at(ix, y) = contrast;
      }
      iy = std::min(ny - 1, std::max(0, iy + wobble(rng)));
    }
  }
  std::uniform_int_distribution<int> x_pick(0, nx - 1);
  std::uniform_int_distribution<int> size_pick(1, std::max(1, layout.inclusion_max_size));
  std::uniform_real_distribution<double> log_value(0.0, 1.0);
  for (int b = 0; b < layout.random_inclusions; ++b) {
    int x0 = x_pick(rng), y0 = row_pick(rng);
    int sx = size_pick(rng), sy = size_pick(rng);
    double v = std::exp(log_value(rng) * std::log(contrast));
    for (int iy = y0; iy < std::min(ny, y0 + sy); ++iy)
      for (int ix = x0; ix < std::min(nx, x0 + sx); ++ix) k.at(ix, iy) = v;
  }
  return k;
}

// ---------------------------------------------------------------------------
// Darcy flow: kappa^-1 v + grad p = 0, div v = 0, with v.n prescribed on the
// whole boundary.  Mixed lowest-order elements give one flux unknown per
// interior edge and one pressure per cell; the pressure is gauged by pinning
// cell 0 and is discarded afterwards (only the flux field is returned).

//! Outward normal velocity for the standard left-to-right drive: v.n = -1 on
//! the left boundary (inflow), +1 on the right, 0 elsewhere.  Values are per
//! boundary edge, indexed by edge id; interior entries are ignored.
inline std::vector<double> left_to_right_boundary_drive(const SpaceTimeMesh& mesh) {
  std::vector<double> f(static_cast<size_t>(mesh.n_edges()), 0.0);
  for (int iy = 0; iy < mesh.ny_fine(); ++iy) {
    f[mesh.vertical_edge_id(0, iy)] = -1.0;
    f[mesh.vertical_edge_id(mesh.nx_fine(), iy)] = 1.0;
  }
  return f;
}

inline VelocityField solve_darcy(const SpaceTimeMesh& mesh, const PermeabilityField& kappa,
                                 const std::vector<double>& outward_normal_velocity) {
  const int nx = mesh.nx_fine(), ny = mesh.ny_fine();
  if (kappa.nx != nx || kappa.ny != ny)
    throw std::invalid_argument("solve_darcy: permeability grid " + std::to_string(kappa.nx) + "x" +
                                std::to_string(kappa.ny) + " does not match fine grid");
  if (static_cast<int>(outward_normal_velocity.size()) != mesh.n_edges())
    throw std::invalid_argument("solve_darcy: boundary data must be indexed by edge id");
  for (double v : kappa.value)
    if (!(v > 0.0)) throw std::invalid_argument("solve_darcy: permeability must be positive");

  const double hx = mesh.hx(), hy = mesh.hy();
  VelocityField vel;
  vel.flux.assign(static_cast<size_t>(mesh.n_edges()), 0.0);

  // prescribed boundary fluxes in the global +x/+y orientation
  double net = 0.0, scale = 0.0;
  auto set_boundary = [&](int e, double outward_sign, double len) {
    double d = outward_normal_velocity[e];
    vel.flux[e] = outward_sign * d * len;
    net += d * len;
    scale += std::abs(d) * len;
  };
  for (int iy = 0; iy < ny; ++iy) {
    set_boundary(mesh.vertical_edge_id(0, iy), -1.0, hy);
    set_boundary(mesh.vertical_edge_id(nx, iy), 1.0, hy);
  }
  for (int ix = 0; ix < nx; ++ix) {
    set_boundary(mesh.horizontal_edge_id(ix, 0), -1.0, hx);
    set_boundary(mesh.horizontal_edge_id(ix, ny), 1.0, hx);
  }
  if (std::abs(net) > 1e-12 * std::max(scale, 1.0))
    throw std::invalid_argument("solve_darcy: boundary data has net flux " + std::to_string(net) +
                                "; a conservative field needs zero net inflow");

  // unknown numbering, banded by grid row: for each cell row iy the interior
  // vertical edges, then the pressures, then the horizontal edges above.
  const int n_vint = (nx - 1) * ny;            // interior vertical edges
  const int n_hint = nx * (ny - 1);            // interior horizontal edges
  const int n_cells = nx * ny;
  const int n_unknown = n_vint + n_hint + (n_cells - 1);
  std::vector<int> vnum(static_cast<size_t>(mesh.n_vertical_edges()), -1);
  std::vector<int> hnum(static_cast<size_t>(mesh.n_horizontal_edges()), -1);
  std::vector<int> pnum(static_cast<size_t>(n_cells), -1);
  {
    int next = 0;
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 1; ix < nx; ++ix) vnum[mesh.vertical_edge_id(ix, iy)] = next++;
      for (int ix = 0; ix < nx; ++ix) {
        int c = mesh.fine_cell_id(ix, iy);
        if (c != 0) pnum[c] = next++;
      }
      if (iy + 1 < ny)
        for (int ix = 0; ix < nx; ++ix) hnum[mesh.horizontal_edge_id(ix, iy + 1) - mesh.n_vertical_edges()] = next++;
    }
    if (next != n_unknown) throw std::runtime_error("solve_darcy: unknown numbering is inconsistent");
  }

  SparseBuilder builder(n_unknown, n_unknown);
  std::vector<double> rhs(static_cast<size_t>(n_unknown), 0.0);

  auto add_flux_term = [&](int row, int edge_unknown, double coeff, double known_flux) {
    if (edge_unknown >= 0)
      builder.add(row, edge_unknown, coeff);
    else
      rhs[row] -= coeff * known_flux;
  };

  // edge equations: kappa^-1 mass along the edge direction minus the pressure drop
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 1; ix < nx; ++ix) {
      int e = mesh.vertical_edge_id(ix, iy);
      int row = vnum[e];
      int ca = mesh.fine_cell_id(ix - 1, iy), cb = mesh.fine_cell_id(ix, iy);
      double wa = (hx / hy) / kappa.at(ix - 1, iy), wb = (hx / hy) / kappa.at(ix, iy);
      int e_left = mesh.vertical_edge_id(ix - 1, iy), e_right = mesh.vertical_edge_id(ix + 1, iy);
      builder.add(row, row, wa / 3.0 + wb / 3.0);
      add_flux_term(row, vnum[e_left], wa / 6.0, vel.flux[e_left]);
      add_flux_term(row, vnum[e_right], wb / 6.0, vel.flux[e_right]);
      if (pnum[ca] >= 0) builder.add(row, pnum[ca], -1.0);
      if (pnum[cb] >= 0) builder.add(row, pnum[cb], 1.0);
    }
  for (int iy = 1; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      int e = mesh.horizontal_edge_id(ix, iy);
      int row = hnum[e - mesh.n_vertical_edges()];
      int ca = mesh.fine_cell_id(ix, iy - 1), cb = mesh.fine_cell_id(ix, iy);
      double wa = (hy / hx) / kappa.at(ix, iy - 1), wb = (hy / hx) / kappa.at(ix, iy);
      int e_below = mesh.horizontal_edge_id(ix, iy - 1), e_above = mesh.horizontal_edge_id(ix, iy + 1);
      builder.add(row, row, wa / 3.0 + wb / 3.0);
      add_flux_term(row, hnum[e_below - mesh.n_vertical_edges()], wa / 6.0, vel.flux[e_below]);
      add_flux_term(row, hnum[e_above - mesh.n_vertical_edges()], wb / 6.0, vel.flux[e_above]);
      if (pnum[ca] >= 0) builder.add(row, pnum[ca], -1.0);
      if (pnum[cb] >= 0) builder.add(row, pnum[cb], 1.0);
    }

  // conservation per cell, cell 0's copy dropped (it is the sum of the others
  // given compatible boundary data)
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      int c = mesh.fine_cell_id(ix, iy);
      if (pnum[c] < 0) continue;
      int row = pnum[c];
      int el = mesh.vertical_edge_id(ix, iy), er = mesh.vertical_edge_id(ix + 1, iy);
      int eb = mesh.horizontal_edge_id(ix, iy), et = mesh.horizontal_edge_id(ix, iy + 1);
      add_flux_term(row, vnum[el], -1.0, vel.flux[el]);
      add_flux_term(row, vnum[er], 1.0, vel.flux[er]);
      add_flux_term(row, hnum[eb - mesh.n_vertical_edges()], -1.0, vel.flux[eb]);
      add_flux_term(row, hnum[et - mesh.n_vertical_edges()], 1.0, vel.flux[et]);
    }

  SparseMatrix a = builder.build();
  std::vector<double> x = sparse_solve(a, rhs);

  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 1; ix < nx; ++ix) vel.flux[mesh.vertical_edge_id(ix, iy)] = x[vnum[mesh.vertical_edge_id(ix, iy)]];
  for (int iy = 1; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      int e = mesh.horizontal_edge_id(ix, iy);
      vel.flux[e] = x[hnum[e - mesh.n_vertical_edges()]];
    }

  double fmax = 0.0;
  for (double f : vel.flux) fmax = std::max(fmax, std::abs(f));
  double div_tol = 1e-10 * std::max(1.0, fmax);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix)
      if (std::abs(cell_divergence(mesh, vel, ix, iy)) > div_tol)
        throw std::runtime_error("solve_darcy: cell (" + std::to_string(ix) + "," + std::to_string(iy) +
                                 ") violates local conservation");
  return vel;
}

// ---------------------------------------------------------------------------
// analytic fields, stored the same way (exact edge fluxes)

inline VelocityField uniform_velocity(const SpaceTimeMesh& mesh, double vx, double vy) {
  VelocityField vel;
  vel.flux.assign(static_cast<size_t>(mesh.n_edges()), 0.0);
  for (int iy = 0; iy < mesh.ny_fine(); ++iy)
    for (int ix = 0; ix <= mesh.nx_fine(); ++ix) vel.flux[mesh.vertical_edge_id(ix, iy)] = vx * mesh.hy();
  for (int iy = 0; iy <= mesh.ny_fine(); ++iy)
    for (int ix = 0; ix < mesh.nx_fine(); ++ix) vel.flux[mesh.horizontal_edge_id(ix, iy)] = vy * mesh.hx();
  return vel;
}

//! v = omega * (-(y-cy), x-cx); exact edge integrals.
inline VelocityField rotation_velocity(const SpaceTimeMesh& mesh, double omega, double cx, double cy) {
  VelocityField vel;
  vel.flux.assign(static_cast<size_t>(mesh.n_edges()), 0.0);
  for (int iy = 0; iy < mesh.ny_fine(); ++iy)
    for (int ix = 0; ix <= mesh.nx_fine(); ++ix) {
      double ya = mesh.node_y(iy) - cy, yb = mesh.node_y(iy + 1) - cy;
      vel.flux[mesh.vertical_edge_id(ix, iy)] = -omega * 0.5 * (yb * yb - ya * ya);
    }
  for (int iy = 0; iy <= mesh.ny_fine(); ++iy)
    for (int ix = 0; ix < mesh.nx_fine(); ++ix) {
      double xa = mesh.node_x(ix) - cx, xb = mesh.node_x(ix + 1) - cx;
      vel.flux[mesh.horizontal_edge_id(ix, iy)] = omega * 0.5 * (xb * xb - xa * xa);
    }
  return vel;
}

//! v = (a*y + b, 0); exact edge integrals.
inline VelocityField shear_velocity(const SpaceTimeMesh& mesh, double a, double b) {
  VelocityField vel;
  vel.flux.assign(static_cast<size_t>(mesh.n_edges()), 0.0);
  for (int iy = 0; iy < mesh.ny_fine(); ++iy)
    for (int ix = 0; ix <= mesh.nx_fine(); ++ix) {
      double ya = mesh.node_y(iy), yb = mesh.node_y(iy + 1);
      vel.flux[mesh.vertical_edge_id(ix, iy)] = a * 0.5 * (yb * yb - ya * ya) + b * (yb - ya);
    }
  return vel;
}

// ---------------------------------------------------------------------------
// dumps

inline void save_velocity_fluxes(const std::string& path, const VelocityField& vel) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_velocity_fluxes: cannot open " + path);
  char buf[40];
  for (size_t e = 0; e < vel.flux.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%.17g", vel.flux[e]);
    out << e << " " << buf << "\n";
  }
}

inline void save_velocity_cell_centers(const std::string& path, const SpaceTimeMesh& mesh, const VelocityField& vel) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_velocity_cell_centers: cannot open " + path);
  char buf[96];
  for (int iy = 0; iy < mesh.ny_fine(); ++iy)
    for (int ix = 0; ix < mesh.nx_fine(); ++ix) {
      CellVelocity c = cell_velocity(mesh, vel, ix, iy);
      std::snprintf(buf, sizeof(buf), "%d %.17g %.17g", mesh.fine_cell_id(ix, iy), c.vx(0.5), c.vy(0.5));
      out << buf << "\n";
    }
}

}  // namespace stgms
