#pragma once

// Local snapshot spaces: per coarse cell and slab, solve the window transport
// problem once for every nodal boundary datum and keep the solutions as
// columns.  The data set is the nodal basis of the window boundary trace:
// spatial hats on the initial face, and hat x time-tent products on the
// inflow part of the lateral boundary for every fine level after the start.
// A node sitting on both faces gets one descriptor (kind initial) whose
// right-hand side carries both pieces, so the columns sum to the constant
// solution exactly.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"

namespace stgms {

enum class DeltaKind { initial, inflow };

struct DeltaDescriptor {
  DeltaKind kind = DeltaKind::initial;
  int node_x = 0, node_y = 0;  // fine node indices
  int level = 0;               // fine time level; region start for initial-face deltas

  friend bool operator==(const DeltaDescriptor& a, const DeltaDescriptor& b) {
    return a.kind == b.kind && a.node_x == b.node_x && a.node_y == b.node_y && a.level == b.level;
  }
};

namespace detail {

struct RegionBounds {
  int fx0, fx1, fy0, fy1;  // fine cells, inclusive
};

inline RegionBounds fine_bounds(const SpaceTimeMesh& mesh, const Region& region) {
  int rs = mesh.config().refine_space;
  return {region.cx0 * rs, (region.cx1 + 1) * rs - 1, region.cy0 * rs, (region.cy1 + 1) * rs - 1};
}

// outward flux of a region boundary edge, or 0 for edges not on the boundary;
// inflow means outward flux < 0
inline double boundary_out_flux(const SpaceTimeMesh& mesh, const VelocityField& vel, const RegionBounds& b,
                                bool vertical, int ix, int iy) {
  if (vertical) {
    if (iy < b.fy0 || iy > b.fy1) return 0.0;
    if (ix == b.fx0) return -vel.flux[mesh.vertical_edge_id(ix, iy)];
    if (ix == b.fx1 + 1) return vel.flux[mesh.vertical_edge_id(ix, iy)];
    return 0.0;
  }
  if (ix < b.fx0 || ix > b.fx1) return 0.0;
  if (iy == b.fy0) return -vel.flux[mesh.horizontal_edge_id(ix, iy)];
  if (iy == b.fy1 + 1) return vel.flux[mesh.horizontal_edge_id(ix, iy)];
  return 0.0;
}

}  // namespace detail

//! One descriptor per nodal boundary datum of the window: all fine nodes of
//! the initial face, then every inflow-adjacent boundary node for every
//! level after the start, node-major then level-ascending.
inline std::vector<DeltaDescriptor> delta_boundary_set(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                                       const Region& region) {
  auto b = detail::fine_bounds(mesh, region);
  std::vector<DeltaDescriptor> deltas;
  for (int ny = b.fy0; ny <= b.fy1 + 1; ++ny)
    for (int nx = b.fx0; nx <= b.fx1 + 1; ++nx) deltas.push_back({DeltaKind::initial, nx, ny, region.level0});

  int nnx = b.fx1 - b.fx0 + 2, nny = b.fy1 - b.fy0 + 2;
  std::vector<char> inflow(static_cast<size_t>(nnx) * nny, 0);
  auto mark = [&](int nx, int ny) { inflow[static_cast<size_t>(ny - b.fy0) * nnx + (nx - b.fx0)] = 1; };
  for (int iy = b.fy0; iy <= b.fy1; ++iy) {
    if (detail::boundary_out_flux(mesh, vel, b, true, b.fx0, iy) < 0.0) mark(b.fx0, iy), mark(b.fx0, iy + 1);
    if (detail::boundary_out_flux(mesh, vel, b, true, b.fx1 + 1, iy) < 0.0) mark(b.fx1 + 1, iy), mark(b.fx1 + 1, iy + 1);
  }
  for (int ix = b.fx0; ix <= b.fx1; ++ix) {
    if (detail::boundary_out_flux(mesh, vel, b, false, ix, b.fy0) < 0.0) mark(ix, b.fy0), mark(ix + 1, b.fy0);
    if (detail::boundary_out_flux(mesh, vel, b, false, ix, b.fy1 + 1) < 0.0) mark(ix, b.fy1 + 1), mark(ix + 1, b.fy1 + 1);
  }
  for (int ny = b.fy0; ny <= b.fy1 + 1; ++ny)
    for (int nx = b.fx0; nx <= b.fx1 + 1; ++nx) {
      if (!inflow[static_cast<size_t>(ny - b.fy0) * nnx + (nx - b.fx0)]) continue;
      for (int l = region.level0 + 1; l <= region.level1; ++l) deltas.push_back({DeltaKind::inflow, nx, ny, l});
    }
  return deltas;
}

//! Exact load vector of one nodal boundary datum: the initial-face hat mass
//! and/or the |v.n|-weighted hat x tent masses on adjacent inflow edges.
inline std::vector<double> delta_rhs(const SpaceTimeMesh& mesh, const VelocityField& vel, const SlabSpace& space,
                                     const DeltaDescriptor& d) {
  const Region& region = space.region();
  auto b = detail::fine_bounds(mesh, region);
  const double dt = mesh.dt_fine();
  std::vector<double> rhs(static_cast<size_t>(space.n_dofs()), 0.0);

  if (d.kind == DeltaKind::initial) {
    int t0p = space.tdof_at(region.level0, Side::plus);
    for (int cy = d.node_y - 1; cy <= d.node_y; ++cy)
      for (int cx = d.node_x - 1; cx <= d.node_x; ++cx) {
        if (cx < b.fx0 || cx > b.fx1 || cy < b.fy0 || cy > b.fy1) continue;
        int p = space.patch_of_cell(cx, cy);
        int s[4] = {space.spatial_dof(p, cx, cy), space.spatial_dof(p, cx + 1, cy), space.spatial_dof(p, cx, cy + 1),
                    space.spatial_dof(p, cx + 1, cy + 1)};
        int corner = (d.node_y - cy) * 2 + (d.node_x - cx);
        for (int i = 0; i < 4; ++i)
          rhs[space.dof(s[i], t0p)] += mesh.hx() * mesh.hy() * detail::kQ1Mass[corner][i];
      }
  }

  // lateral tent part around `level`; for an initial-face corner descriptor
  // only the falling half exists inside the window
  auto add_edge = [&](bool vertical, int ex, int ey, int hat_local, int inside_cx, int inside_cy) {
    double out = detail::boundary_out_flux(mesh, vel, b, vertical, ex, ey);
    if (out >= 0.0) return;
    double aflx = -out;
    int p = space.patch_of_cell(inside_cx, inside_cy);
    int s[2];
    if (vertical) {
      s[0] = space.spatial_dof(p, ex, ey);
      s[1] = space.spatial_dof(p, ex, ey + 1);
    } else {
      s[0] = space.spatial_dof(p, ex, ey);
      s[1] = space.spatial_dof(p, ex + 1, ey);
    }
    auto add_interval = [&](int lo_level, int tent_row) {
      if (lo_level < region.level0 || lo_level + 1 > region.level1) return;
      int t0, t1;
      detail::interval_tdofs(space, lo_level - region.level0, t0, t1);
      int tt[2] = {t0, t1};
      for (int a = 0; a < 2; ++a)
        for (int i = 0; i < 2; ++i)
          rhs[space.dof(s[i], tt[a])] += aflx * dt * detail::kP1Mass[tent_row][a] * detail::kP1Mass[hat_local][i];
    };
    add_interval(d.level - 1, 1);  // rising half
    add_interval(d.level, 0);      // falling half
  };
  if (d.node_x == b.fx0 || d.node_x == b.fx1 + 1) {
    int cx = d.node_x == b.fx0 ? b.fx0 : b.fx1;
    if (d.node_y - 1 >= b.fy0) add_edge(true, d.node_x, d.node_y - 1, 1, cx, d.node_y - 1);
    if (d.node_y <= b.fy1) add_edge(true, d.node_x, d.node_y, 0, cx, d.node_y);
  }
  if (d.node_y == b.fy0 || d.node_y == b.fy1 + 1) {
    int cy = d.node_y == b.fy0 ? b.fy0 : b.fy1;
    if (d.node_x - 1 >= b.fx0) add_edge(false, d.node_x - 1, d.node_y, 1, d.node_x - 1, cy);
    if (d.node_x <= b.fx1) add_edge(false, d.node_x, d.node_y, 0, d.node_x, cy);
  }
  return rhs;
}

struct SnapshotSpace {
  int cell = -1, slab = -1;
  Mode mode = Mode::cg;
  std::shared_ptr<SlabSpace> space;  // on the (possibly oversampled) window
  std::vector<DeltaDescriptor> deltas;
  DenseMatrix columns;  // n_dofs x n_snapshots, one solution per datum

  const Region& region() const { return space->region(); }
  int n_snapshots() const { return static_cast<int>(deltas.size()); }
};

inline SnapshotSpace generate_snapshots(const SpaceTimeMesh& mesh, const VelocityField& vel, Mode mode, int cell,
                                        int slab, bool oversample) {
  SnapshotSpace snap;
  snap.cell = cell;
  snap.slab = slab;
  snap.mode = mode;
  Region region = oversample ? mesh.oversampled_region(cell, slab) : mesh.cell_slab_region(cell, slab);
  snap.space = std::make_shared<SlabSpace>(mesh, region, mode);
  snap.deltas = delta_boundary_set(mesh, vel, region);
  PermutedBandFactor factor(assemble_transport_matrix(mesh, vel, *snap.space), snap.space->band_order());
  snap.columns = DenseMatrix(snap.space->n_dofs(), snap.n_snapshots());
  for (int j = 0; j < snap.n_snapshots(); ++j) {
    std::vector<double> x;
    try {
      x = factor.solve(delta_rhs(mesh, vel, *snap.space, snap.deltas[static_cast<size_t>(j)]));
    } catch (const std::exception& e) {
      throw std::runtime_error("snapshot solve failed for cell " + std::to_string(cell) + " slab " +
                               std::to_string(slab) + " datum " + std::to_string(j) + ": " + e.what());
    }
    for (int i = 0; i < snap.space->n_dofs(); ++i) snap.columns(i, j) = x[static_cast<size_t>(i)];
  }
  return snap;
}

//! Largest deviation of the column sum from the constant solution 1.
inline double partition_of_unity_defect(const SnapshotSpace& snap) {
  double worst = 0.0;
  for (int i = 0; i < snap.columns.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < snap.columns.cols; ++j) s += snap.columns(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

//! Dof map of a window contained in another: result[to_dof] = from_dof.
//! Patch splits of `to` must refine into those of `from`, which holds for
//! the cell window of the target cell inside its oversampled window.
inline std::vector<int> restriction_map(const SlabSpace& from, const SlabSpace& to) {
  const Region& rf = from.region();
  const Region& rt = to.region();
  if (rt.level0 < rf.level0 || rt.level1 > rf.level1)
    throw std::invalid_argument("restriction_map: time range not contained");
  std::vector<int> map(static_cast<size_t>(to.n_dofs()), -1);
  int df[8], dt[8];
  for (int iy = to.fine_y0(); iy <= to.fine_y1(); ++iy)
    for (int ix = to.fine_x0(); ix <= to.fine_x1(); ++ix) {
      if (!from.contains_cell(ix, iy)) throw std::invalid_argument("restriction_map: cell not contained");
      for (int k = 0; k < rt.n_intervals(); ++k) {
        int kf = rt.level0 + k - rf.level0;
        from.element_dofs(ix, iy, kf, df);
        to.element_dofs(ix, iy, k, dt);
        for (int i = 0; i < 8; ++i) map[static_cast<size_t>(dt[i])] = df[i];
      }
    }
  return map;
}

inline DenseMatrix restrict_columns(const DenseMatrix& columns, const std::vector<int>& map) {
  DenseMatrix out(static_cast<int>(map.size()), columns.cols);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < columns.cols; ++j) out(i, j) = columns(map[static_cast<size_t>(i)], j);
  return out;
}

namespace detail {

constexpr std::uint64_t kSnapshotMagic = 0x50414e53534d5453ull;  // "STMSSNAP" little-endian

inline void put_i64(std::FILE* f, std::int64_t v) { std::fwrite(&v, sizeof v, 1, f); }
inline bool get_i64(std::FILE* f, std::int64_t& v) { return std::fread(&v, sizeof v, 1, f) == 1; }

}  // namespace detail

inline void save_snapshots(const std::string& path, const SnapshotSpace& snap) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write snapshot cache: " + path);
  const Region& r = snap.region();
  std::uint64_t magic = detail::kSnapshotMagic;
  std::fwrite(&magic, sizeof magic, 1, f);
  for (std::int64_t v : {static_cast<std::int64_t>(snap.mode == Mode::dg), static_cast<std::int64_t>(snap.cell),
                         static_cast<std::int64_t>(snap.slab), static_cast<std::int64_t>(r.cx0),
                         static_cast<std::int64_t>(r.cx1), static_cast<std::int64_t>(r.cy0),
                         static_cast<std::int64_t>(r.cy1), static_cast<std::int64_t>(r.level0),
                         static_cast<std::int64_t>(r.level1), static_cast<std::int64_t>(r.jump_levels.size())})
    detail::put_i64(f, v);
  for (int l : r.jump_levels) detail::put_i64(f, l);
  detail::put_i64(f, snap.columns.rows);
  detail::put_i64(f, snap.columns.cols);
  for (const auto& d : snap.deltas) {
    detail::put_i64(f, d.kind == DeltaKind::inflow);
    detail::put_i64(f, d.node_x);
    detail::put_i64(f, d.node_y);
    detail::put_i64(f, d.level);
  }
  std::vector<double> col(static_cast<size_t>(snap.columns.rows));
  for (int j = 0; j < snap.columns.cols; ++j) {
    for (int i = 0; i < snap.columns.rows; ++i) col[static_cast<size_t>(i)] = snap.columns(i, j);
    std::fwrite(col.data(), sizeof(double), col.size(), f);
  }
  bool ok = std::fflush(f) == 0;
  std::fclose(f);
  if (!ok) throw std::runtime_error("short write on snapshot cache: " + path);
}

inline std::optional<SnapshotSpace> load_snapshots(const std::string& path, const SpaceTimeMesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return std::nullopt;
  auto fail = [&]() {
    std::fclose(f);
    return std::nullopt;
  };
  std::uint64_t magic = 0;
  if (std::fread(&magic, sizeof magic, 1, f) != 1 || magic != detail::kSnapshotMagic) return fail();
  std::int64_t h[10];
  for (auto& v : h)
    if (!detail::get_i64(f, v)) return fail();
  SnapshotSpace snap;
  snap.mode = h[0] ? Mode::dg : Mode::cg;
  snap.cell = static_cast<int>(h[1]);
  snap.slab = static_cast<int>(h[2]);
  Region r;
  r.cx0 = static_cast<int>(h[3]);
  r.cx1 = static_cast<int>(h[4]);
  r.cy0 = static_cast<int>(h[5]);
  r.cy1 = static_cast<int>(h[6]);
  r.level0 = static_cast<int>(h[7]);
  r.level1 = static_cast<int>(h[8]);
  r.target_cell = snap.cell;
  r.slab = snap.slab;
  for (std::int64_t i = 0; i < h[9]; ++i) {
    std::int64_t l;
    if (!detail::get_i64(f, l)) return fail();
    r.jump_levels.push_back(static_cast<int>(l));
  }
  std::int64_t rows, cols;
  if (!detail::get_i64(f, rows) || !detail::get_i64(f, cols)) return fail();
  try {
    snap.space = std::make_shared<SlabSpace>(mesh, r, snap.mode);
  } catch (const std::exception&) {
    return fail();
  }
  if (rows != snap.space->n_dofs() || cols < 0) return fail();
  for (std::int64_t j = 0; j < cols; ++j) {
    std::int64_t kind, nx, ny, level;
    if (!detail::get_i64(f, kind) || !detail::get_i64(f, nx) || !detail::get_i64(f, ny) || !detail::get_i64(f, level))
      return fail();
    snap.deltas.push_back({kind ? DeltaKind::inflow : DeltaKind::initial, static_cast<int>(nx), static_cast<int>(ny),
                           static_cast<int>(level)});
  }
  snap.columns = DenseMatrix(static_cast<int>(rows), static_cast<int>(cols));
  std::vector<double> col(static_cast<size_t>(rows));
  for (int j = 0; j < snap.columns.cols; ++j) {
    if (std::fread(col.data(), sizeof(double), col.size(), f) != col.size()) return fail();
    for (int i = 0; i < snap.columns.rows; ++i) snap.columns(i, j) = col[static_cast<size_t>(i)];
  }
  std::fclose(f);
  return snap;
}

}  // namespace stgms
