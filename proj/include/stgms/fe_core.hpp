#pragma once

// Finite element core for the per-slab transport forms.  A SlabSpace is a
// tensor space on a space-time window: bilinear in space on the fine grid,
// linear in time on each fine step.  Continuity is organized in patches and
// segments:
//
//   cg mode: functions are continuous inside each coarse cell (patch) and in
//            time across the fine steps of a slab; discontinuities sit on
//            coarse edges and slab boundaries.
//   dg mode: every fine cell and every fine step is its own patch/segment.
//
// The same assembly routines cover both, plus the local oversampled windows
// used for snapshot generation, because a window carries its own patch list,
// jump levels, and boundary classification.  All quadrature is 2-point Gauss
// per axis, which is exact for every integrand appearing here (polynomial
// degree <= 3 per axis against the cellwise RT0 velocity), so the discrete
// summation-by-parts identities hold to roundoff.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stgms/field.hpp"
#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"

namespace stgms {

enum class Mode { cg, dg };

inline const char* mode_name(Mode m) { return m == Mode::cg ? "cg" : "dg"; }

enum class Side { minus, plus };

//! Two-point Gauss rule on [0,1].
inline constexpr double kGaussPoint[2] = {0.211324865405187117745425609749, 0.788675134594812882254574390251};
inline constexpr double kGaussWeight[2] = {0.5, 0.5};

namespace basis {

// bilinear nodes ordered (0,0) (1,0) (0,1) (1,1)
inline void q1(double xh, double yh, double n[4]) {
  n[0] = (1.0 - xh) * (1.0 - yh);
  n[1] = xh * (1.0 - yh);
  n[2] = (1.0 - xh) * yh;
  n[3] = xh * yh;
}

inline void q1_grad(double xh, double yh, double dx[4], double dy[4]) {
  dx[0] = -(1.0 - yh);
  dx[1] = (1.0 - yh);
  dx[2] = -yh;
  dx[3] = yh;
  dy[0] = -(1.0 - xh);
  dy[1] = -xh;
  dy[2] = (1.0 - xh);
  dy[3] = xh;
}

}  // namespace basis

namespace detail {

// time coupling on one fine interval: kDtWeight[b][a] = int theta_b' theta_a dt
// (independent of dt), kMassWeight[b][a] = int theta_b theta_a dt / dt.
inline constexpr double kDtWeight[2][2] = {{-0.5, -0.5}, {0.5, 0.5}};
inline constexpr double kMassWeight[2][2] = {{1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0}};

// Q1 mass on the unit square; node order as in basis::q1.
inline constexpr double kQ1Mass[4][4] = {{1.0 / 9.0, 1.0 / 18.0, 1.0 / 18.0, 1.0 / 36.0},
                                         {1.0 / 18.0, 1.0 / 9.0, 1.0 / 36.0, 1.0 / 18.0},
                                         {1.0 / 18.0, 1.0 / 36.0, 1.0 / 9.0, 1.0 / 18.0},
                                         {1.0 / 36.0, 1.0 / 18.0, 1.0 / 18.0, 1.0 / 9.0}};

// P1 mass on the unit interval.
inline constexpr double kP1Mass[2][2] = {{1.0 / 3.0, 1.0 / 6.0}, {1.0 / 6.0, 1.0 / 3.0}};

}  // namespace detail

//! Finite element space on one space-time window.
class SlabSpace {
 public:
  struct Patch {
    int fx0, fx1, fy0, fy1;  // inclusive fine-cell range
    int spatial_offset;      // first spatial dof of the patch
    int nodes_x() const { return fx1 - fx0 + 2; }
    int nodes_y() const { return fy1 - fy0 + 2; }
    int n_nodes() const { return nodes_x() * nodes_y(); }
  };

  struct Segment {
    int level_lo, level_hi;  // inclusive global fine levels
    int tdof_offset;
  };

  SlabSpace(const SpaceTimeMesh& mesh, const Region& region, Mode mode)
      : mesh_(&mesh), region_(region), mode_(mode) {
    const int rs = mesh.config().refine_space;
    fx0_ = region.cx0 * rs;
    fx1_ = (region.cx1 + 1) * rs - 1;
    fy0_ = region.cy0 * rs;
    fy1_ = (region.cy1 + 1) * rs - 1;
    if (mode == Mode::cg) {
      patch_cols_ = region.n_blocks_x();
      for (int by = region.cy0; by <= region.cy1; ++by)
        for (int bx = region.cx0; bx <= region.cx1; ++bx)
          patches_.push_back({bx * rs, (bx + 1) * rs - 1, by * rs, (by + 1) * rs - 1, 0});
    } else {
      patch_cols_ = fx1_ - fx0_ + 1;
      for (int iy = fy0_; iy <= fy1_; ++iy)
        for (int ix = fx0_; ix <= fx1_; ++ix) patches_.push_back({ix, ix, iy, iy, 0});
    }
    int soff = 0;
    for (auto& p : patches_) {
      p.spatial_offset = soff;
      soff += p.n_nodes();
    }
    n_spatial_ = soff;

    if (mode == Mode::cg) {
      jump_levels_ = region.jump_levels;
    } else {
      for (int l = region.level0 + 1; l < region.level1; ++l) jump_levels_.push_back(l);
    }
    std::vector<int> bounds;
    bounds.push_back(region.level0);
    for (int j : jump_levels_) bounds.push_back(j);
    bounds.push_back(region.level1);
    int toff = 0;
    for (size_t s = 0; s + 1 < bounds.size(); ++s) {
      segments_.push_back({bounds[s], bounds[s + 1], toff});
      toff += bounds[s + 1] - bounds[s] + 1;
    }
    n_tdofs_ = toff;
    seg_of_interval_.assign(static_cast<size_t>(region.n_intervals()), 0);
    for (int k = 0; k < region.n_intervals(); ++k) {
      int lo = region.level0 + k;
      size_t s = 0;
      while (!(segments_[s].level_lo <= lo && lo + 1 <= segments_[s].level_hi)) ++s;
      seg_of_interval_[k] = static_cast<int>(s);
    }
  }

  const SpaceTimeMesh& mesh() const { return *mesh_; }
  const Region& region() const { return region_; }
  Mode mode() const { return mode_; }
  const std::vector<Patch>& patches() const { return patches_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<int>& jump_levels() const { return jump_levels_; }

  int n_spatial_dofs() const { return n_spatial_; }
  int n_tdofs() const { return n_tdofs_; }
  int n_dofs() const { return n_spatial_ * n_tdofs_; }
  int fine_x0() const { return fx0_; }
  int fine_x1() const { return fx1_; }
  int fine_y0() const { return fy0_; }
  int fine_y1() const { return fy1_; }

  bool contains_cell(int ixf, int iyf) const { return ixf >= fx0_ && ixf <= fx1_ && iyf >= fy0_ && iyf <= fy1_; }

  int patch_of_cell(int ixf, int iyf) const {
    if (mode_ == Mode::cg) {
      int rs = mesh_->config().refine_space;
      int bx = ixf / rs - region_.cx0;
      int by = iyf / rs - region_.cy0;
      return by * patch_cols_ + bx;
    }
    return (iyf - fy0_) * patch_cols_ + (ixf - fx0_);
  }

  //! Spatial dof of a global fine node seen from a given patch.
  int spatial_dof(int patch, int ixf_node, int iyf_node) const {
    const Patch& p = patches_[patch];
    return p.spatial_offset + (iyf_node - p.fy0) * p.nodes_x() + (ixf_node - p.fx0);
  }

  int dof(int spatial, int tdof) const { return spatial * n_tdofs_ + tdof; }

  //! Time dof of a global level; at segment boundaries the side picks which
  //! copy is meant.
  int tdof_at(int level, Side side) const {
    for (size_t s = 0; s < segments_.size(); ++s) {
      const Segment& sg = segments_[s];
      if (level < sg.level_lo || level > sg.level_hi) continue;
      if (level == sg.level_hi && side == Side::plus && s + 1 < segments_.size()) continue;
      if (level == sg.level_lo && side == Side::minus && s > 0) continue;
      return sg.tdof_offset + (level - sg.level_lo);
    }
    throw std::invalid_argument("SlabSpace: level " + std::to_string(level) + " outside window");
  }

  //! The 8 dofs of one space-time element (fine cell x fine interval):
  //! 4 nodes at the interval's lower level, then the same at the upper.
  void element_dofs(int ixf, int iyf, int interval, int out[8]) const {
    int p = patch_of_cell(ixf, iyf);
    const Patch& pa = patches_[p];
    int base = pa.spatial_offset + (iyf - pa.fy0) * pa.nodes_x() + (ixf - pa.fx0);
    int nodes[4] = {base, base + 1, base + pa.nodes_x(), base + pa.nodes_x() + 1};
    const Segment& sg = segments_[static_cast<size_t>(seg_of_interval_[interval])];
    int t0 = sg.tdof_offset + (region_.level0 + interval - sg.level_lo);
    for (int j = 0; j < 4; ++j) {
      out[j] = nodes[j] * n_tdofs_ + t0;
      out[4 + j] = nodes[j] * n_tdofs_ + t0 + 1;
    }
  }

  //! Band-friendly dof order: global node rows, then columns, then patch,
  //! then time.  Returned as perm[new] = old.
  std::vector<int> band_order() const {
    struct Key {
      int y, x, p, t, dof;
    };
    std::vector<Key> keys;
    keys.reserve(static_cast<size_t>(n_dofs()));
    for (size_t p = 0; p < patches_.size(); ++p) {
      const Patch& pa = patches_[p];
      for (int ly = 0; ly < pa.nodes_y(); ++ly)
        for (int lx = 0; lx < pa.nodes_x(); ++lx) {
          int spatial = pa.spatial_offset + ly * pa.nodes_x() + lx;
          for (int t = 0; t < n_tdofs_; ++t)
            keys.push_back({pa.fy0 + ly, pa.fx0 + lx, static_cast<int>(p), t, spatial * n_tdofs_ + t});
        }
    }
    std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
      if (a.y != b.y) return a.y < b.y;
      if (a.x != b.x) return a.x < b.x;
      if (a.p != b.p) return a.p < b.p;
      return a.t < b.t;
    });
    std::vector<int> perm(keys.size());
    for (size_t i = 0; i < keys.size(); ++i) perm[i] = keys[i].dof;
    return perm;
  }

 private:
  const SpaceTimeMesh* mesh_;
  Region region_;
  Mode mode_;
  std::vector<Patch> patches_;
  std::vector<Segment> segments_;
  std::vector<int> jump_levels_;
  std::vector<int> seg_of_interval_;
  int patch_cols_ = 0;
  int n_spatial_ = 0, n_tdofs_ = 0;
  int fx0_ = 0, fx1_ = 0, fy0_ = 0, fy1_ = 0;
};

//! Coefficients over a SlabSpace.
struct SlabFunction {
  const SlabSpace* space = nullptr;
  std::vector<double> coeffs;

  SlabFunction() = default;
  explicit SlabFunction(const SlabSpace& s) : space(&s), coeffs(static_cast<size_t>(s.n_dofs()), 0.0) {}
  SlabFunction(const SlabSpace& s, std::vector<double> c) : space(&s), coeffs(std::move(c)) {
    if (static_cast<int>(coeffs.size()) != s.n_dofs())
      throw std::invalid_argument("SlabFunction: coefficient size mismatch");
  }

  //! Value inside element (cell, interval) at local coordinates in [0,1]^3.
  double value(int ixf, int iyf, int interval, double xh, double yh, double th) const {
    int d[8];
    space->element_dofs(ixf, iyf, interval, d);
    double n[4];
    basis::q1(xh, yh, n);
    double lo = 0.0, hi = 0.0;
    for (int j = 0; j < 4; ++j) {
      lo += coeffs[d[j]] * n[j];
      hi += coeffs[d[4 + j]] * n[j];
    }
    return (1.0 - th) * lo + th * hi;
  }

  //! Nodal values at a time level (one per spatial dof), side-resolved.
  std::vector<double> level_trace(int level, Side side) const {
    int t = space->tdof_at(level, side);
    int ns = space->n_spatial_dofs(), nt = space->n_tdofs();
    std::vector<double> out(static_cast<size_t>(ns));
    for (int s = 0; s < ns; ++s) out[static_cast<size_t>(s)] = coeffs[static_cast<size_t>(s) * nt + t];
    return out;
  }

  std::vector<double> terminal_trace() const { return level_trace(space->region().level1, Side::minus); }
};

//! Evaluate a spatial nodal field (indexed like the space's spatial dofs)
//! inside a fine cell.
inline double spatial_value_in_cell(const SlabSpace& space, const std::vector<double>& nodal, int ixf, int iyf,
                                    double xh, double yh) {
  int p = space.patch_of_cell(ixf, iyf);
  double n[4];
  basis::q1(xh, yh, n);
  return nodal[space.spatial_dof(p, ixf, iyf)] * n[0] + nodal[space.spatial_dof(p, ixf + 1, iyf)] * n[1] +
         nodal[space.spatial_dof(p, ixf, iyf + 1)] * n[2] + nodal[space.spatial_dof(p, ixf + 1, iyf + 1)] * n[3];
}

//! (upwind, downwind) fine-cell ids of an edge.  Ties (zero flux) resolve to
//! the lower cell id; the missing side of a domain-boundary edge is -1.
inline std::pair<int, int> upwind_cells(const SpaceTimeMesh& mesh, const VelocityField& vel, int edge) {
  int ix, iy;
  mesh.edge_position(edge, ix, iy);
  int a, b;  // a on the negative-normal side, b on the positive
  if (mesh.edge_is_vertical(edge)) {
    a = ix > 0 ? mesh.fine_cell_id(ix - 1, iy) : -1;
    b = ix < mesh.nx_fine() ? mesh.fine_cell_id(ix, iy) : -1;
  } else {
    a = iy > 0 ? mesh.fine_cell_id(ix, iy - 1) : -1;
    b = iy < mesh.ny_fine() ? mesh.fine_cell_id(ix, iy) : -1;
  }
  double flux = vel.flux[edge];
  if (flux < 0.0) return {b, a};
  return {a, b};  // positive flux flows a -> b; ties keep the lower id first
}

namespace detail {

//! Map an absolute time into (interval, local coordinate) of a window;
//! clamped, with points exactly on an interior level resolving upward.
inline void locate_time(const SlabSpace& space, double t, int& interval, double& th) {
  const SpaceTimeMesh& mesh = space.mesh();
  const Region& reg = space.region();
  double rel = (t - mesh.level_time(reg.level0)) / mesh.dt_fine();
  interval = static_cast<int>(rel);
  if (interval < 0) interval = 0;
  if (interval > reg.n_intervals() - 1) interval = reg.n_intervals() - 1;
  th = rel - interval;
}

}  // namespace detail

//! Vector-valued spatial jump of w across a fine edge at edge parameter
//! s in [0,1] and absolute time t: w^- n^- + w^+ n^+ on interior edges (the
//! sum is independent of which side is upwind), the single interior value
//! times the outward normal on window-boundary edges.
inline std::array<double, 2> space_jump(const SlabFunction& w, int edge, double s, double t) {
  const SlabSpace& space = *w.space;
  const SpaceTimeMesh& mesh = space.mesh();
  int ix, iy;
  mesh.edge_position(edge, ix, iy);
  bool vertical = mesh.edge_is_vertical(edge);
  int k;
  double th;
  detail::locate_time(space, t, k, th);

  // cells on the negative/positive side of the edge normal, if in the window
  bool has_a, has_b;
  double wa = 0.0, wb = 0.0;
  if (vertical) {
    has_a = ix > 0 && space.contains_cell(ix - 1, iy);
    has_b = ix <= space.fine_x1() && space.contains_cell(ix, iy);
    if (has_a) wa = w.value(ix - 1, iy, k, 1.0, s, th);
    if (has_b) wb = w.value(ix, iy, k, 0.0, s, th);
  } else {
    has_a = iy > 0 && space.contains_cell(ix, iy - 1);
    has_b = iy <= space.fine_y1() && space.contains_cell(ix, iy);
    if (has_a) wa = w.value(ix, iy - 1, k, s, 1.0, th);
    if (has_b) wb = w.value(ix, iy, k, s, 0.0, th);
  }
  if (!has_a && !has_b) throw std::invalid_argument("space_jump: edge outside the window");

  // component along the edge's +x / +y normal
  double jn = has_a && has_b ? wa - wb : (has_a ? wa : -wb);
  return vertical ? std::array<double, 2>{jn, 0.0} : std::array<double, 2>{0.0, jn};
}

//! Scalar time jump w(level+, x, y) - w(level-, x, y) at an interior jump
//! level of w's own window.
inline double time_jump(const SlabFunction& w, int level, double x, double y) {
  const SlabSpace& space = *w.space;
  const SpaceTimeMesh& mesh = space.mesh();
  const MeshConfig& cfg = mesh.config();
  int ixf = std::min(space.fine_x1(), std::max(space.fine_x0(), static_cast<int>((x - cfg.x0) / mesh.hx())));
  int iyf = std::min(space.fine_y1(), std::max(space.fine_y0(), static_cast<int>((y - cfg.y0) / mesh.hy())));
  double xh = (x - mesh.node_x(ixf)) / mesh.hx();
  double yh = (y - mesh.node_y(iyf)) / mesh.hy();
  std::vector<double> plus = w.level_trace(level, Side::plus);
  std::vector<double> minus = w.level_trace(level, Side::minus);
  return spatial_value_in_cell(space, plus, ixf, iyf, xh, yh) - spatial_value_in_cell(space, minus, ixf, iyf, xh, yh);
}

//! Time jump across a slab interface: next(start+) - prev(end-); pass null
//! prev at the very first level, where the jump is just next(start+).
inline double time_jump(const SlabFunction* prev, const SlabFunction& next, double x, double y) {
  const SlabSpace& space = *next.space;
  const SpaceTimeMesh& mesh = space.mesh();
  const MeshConfig& cfg = mesh.config();
  int ixf = std::min(space.fine_x1(), std::max(space.fine_x0(), static_cast<int>((x - cfg.x0) / mesh.hx())));
  int iyf = std::min(space.fine_y1(), std::max(space.fine_y0(), static_cast<int>((y - cfg.y0) / mesh.hy())));
  double xh = (x - mesh.node_x(ixf)) / mesh.hx();
  double yh = (y - mesh.node_y(iyf)) / mesh.hy();
  std::vector<double> plus = next.level_trace(next.space->region().level0, Side::plus);
  double v = spatial_value_in_cell(space, plus, ixf, iyf, xh, yh);
  if (!prev) return v;
  std::vector<double> minus = prev->terminal_trace();
  return v - spatial_value_in_cell(*prev->space, minus, ixf, iyf, xh, yh);
}

// ---------------------------------------------------------------------------
// assembly of the transport form
//
//   a(u,w) = sum_cells int (du/dt w - u v.grad w)
//          + sum_{inter-patch edges} int |v.n| u_up (w_up - w_down)
//          + sum_{outflow window boundary} int (v.n) u w
//          + int_Omega u(start+) w(start+)
//          + sum_{jump levels l} int_Omega (u(l+) - u(l-)) w(l+)
//
// Inflow data and initial data enter only on the right-hand side:
//
//   F(w) = int_Omega f w(start+) - sum_{inflow window boundary} int g w v.n

namespace detail {

//! Scatter a spatial Q1 mass between two time dofs for every cell of the
//! window: scale * int_cell N_j N_i, trial at tdof_col, test at tdof_row.
inline void add_window_level_mass(SparseBuilder& builder, const SlabSpace& space, int tdof_row, int tdof_col,
                                  double scale) {
  const SpaceTimeMesh& mesh = space.mesh();
  const double m0 = scale * mesh.hx() * mesh.hy();
  for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
    for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf) {
      int p = space.patch_of_cell(ixf, iyf);
      int s[4] = {space.spatial_dof(p, ixf, iyf), space.spatial_dof(p, ixf + 1, iyf),
                  space.spatial_dof(p, ixf, iyf + 1), space.spatial_dof(p, ixf + 1, iyf + 1)};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          builder.add(space.dof(s[i], tdof_row), space.dof(s[j], tdof_col), m0 * kQ1Mass[i][j]);
    }
}

struct EdgeSides {
  int up_s[2], down_s[2];  // spatial dofs of the two edge nodes, per side
  double abs_flux;
};

//! Upwind data of one fine edge inside the window; returns false for zero
//! flux (no contribution, tie resolved trivially).
inline bool edge_upwind(const SpaceTimeMesh& mesh, const VelocityField& vel, const SlabSpace& space, bool vertical,
                        int ix, int iy, EdgeSides& out) {
  // vertical: edge line ix between cells (ix-1,iy) and (ix,iy)
  // horizontal: edge line iy between cells (ix,iy-1) and (ix,iy)
  double flux = vel.flux[vertical ? mesh.vertical_edge_id(ix, iy) : mesh.horizontal_edge_id(ix, iy)];
  if (flux == 0.0) return false;
  int ax, ay, bx, by;
  if (vertical) {
    ax = ix - 1;
    ay = iy;
    bx = ix;
    by = iy;
  } else {
    ax = ix;
    ay = iy - 1;
    bx = ix;
    by = iy;
  }
  bool a_up = flux > 0.0;  // global normals point +x / +y, from cell a to b
  int ux = a_up ? ax : bx, uy = a_up ? ay : by;
  int dx = a_up ? bx : ax, dy = a_up ? by : ay;
  int pu = space.patch_of_cell(ux, uy), pd = space.patch_of_cell(dx, dy);
  if (vertical) {
    out.up_s[0] = space.spatial_dof(pu, ix, iy);
    out.up_s[1] = space.spatial_dof(pu, ix, iy + 1);
    out.down_s[0] = space.spatial_dof(pd, ix, iy);
    out.down_s[1] = space.spatial_dof(pd, ix, iy + 1);
  } else {
    out.up_s[0] = space.spatial_dof(pu, ix, iy);
    out.up_s[1] = space.spatial_dof(pu, ix + 1, iy);
    out.down_s[0] = space.spatial_dof(pd, ix, iy);
    out.down_s[1] = space.spatial_dof(pd, ix + 1, iy);
  }
  out.abs_flux = std::abs(flux);
  return true;
}

//! Time dofs (lower, upper) of an interval of the window.
inline void interval_tdofs(const SlabSpace& space, int interval, int& t0, int& t1) {
  int lo = space.region().level0 + interval;
  t0 = space.tdof_at(lo, Side::plus);
  t1 = space.tdof_at(lo + 1, Side::minus);
}

}  // namespace detail

inline SparseMatrix assemble_transport_matrix(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                              const SlabSpace& space) {
  const Region& reg = space.region();
  const double hx = mesh.hx(), hy = mesh.hy(), dt = mesh.dt_fine();
  SparseBuilder builder(space.n_dofs(), space.n_dofs());
  int d[8];

  // volume terms
  for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
    for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf) {
      CellVelocity cv = cell_velocity(mesh, vel, ixf, iyf);
      double conv[4][4] = {};  // int N_j (v . grad N_i)
      for (int qx = 0; qx < 2; ++qx)
        for (int qy = 0; qy < 2; ++qy) {
          double xh = kGaussPoint[qx], yh = kGaussPoint[qy];
          double wq = kGaussWeight[qx] * kGaussWeight[qy] * hx * hy;
          double n[4], gx[4], gy[4];
          basis::q1(xh, yh, n);
          basis::q1_grad(xh, yh, gx, gy);
          double vx = cv.vx(xh), vy = cv.vy(yh);
          for (int i = 0; i < 4; ++i) {
            double gradv = (gx[i] / hx) * vx + (gy[i] / hy) * vy;
            for (int j = 0; j < 4; ++j) conv[j][i] += wq * n[j] * gradv;
          }
        }
      for (int k = 0; k < reg.n_intervals(); ++k) {
        space.element_dofs(ixf, iyf, k, d);
        for (int b = 0; b < 2; ++b)
          for (int a = 0; a < 2; ++a) {
            double w_dt = detail::kDtWeight[b][a];
            double w_mass = detail::kMassWeight[b][a] * dt;
            for (int j = 0; j < 4; ++j)
              for (int i = 0; i < 4; ++i)
                builder.add(d[a * 4 + i], d[b * 4 + j],
                            w_dt * detail::kQ1Mass[j][i] * hx * hy - w_mass * conv[j][i]);
          }
      }
    }

  // initial face and interior time jumps
  {
    int t0p = space.tdof_at(reg.level0, Side::plus);
    detail::add_window_level_mass(builder, space, t0p, t0p, 1.0);
    for (int l : space.jump_levels()) {
      int tp = space.tdof_at(l, Side::plus);
      int tm = space.tdof_at(l, Side::minus);
      detail::add_window_level_mass(builder, space, tp, tp, 1.0);
      detail::add_window_level_mass(builder, space, tp, tm, -1.0);
    }
  }

  // inter-patch upwind edge terms
  auto scatter_edge = [&](const detail::EdgeSides& es) {
    for (int k = 0; k < reg.n_intervals(); ++k) {
      int t0, t1;
      detail::interval_tdofs(space, k, t0, t1);
      int tt[2] = {t0, t1};
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
          double wt = es.abs_flux * detail::kMassWeight[b][a] * dt;
          for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) {
              double val = wt * detail::kP1Mass[j][i];
              builder.add(space.dof(es.up_s[i], tt[a]), space.dof(es.up_s[j], tt[b]), val);
              builder.add(space.dof(es.down_s[i], tt[a]), space.dof(es.up_s[j], tt[b]), -val);
            }
        }
    }
  };
  detail::EdgeSides es;
  for (int ix = space.fine_x0() + 1; ix <= space.fine_x1(); ++ix)
    for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
      if (space.patch_of_cell(ix - 1, iy) == space.patch_of_cell(ix, iy)) continue;
      if (detail::edge_upwind(mesh, vel, space, true, ix, iy, es)) scatter_edge(es);
    }
  for (int iy = space.fine_y0() + 1; iy <= space.fine_y1(); ++iy)
    for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
      if (space.patch_of_cell(ix, iy - 1) == space.patch_of_cell(ix, iy)) continue;
      if (detail::edge_upwind(mesh, vel, space, false, ix, iy, es)) scatter_edge(es);
    }

  // outflow part of the window's lateral boundary
  auto scatter_outflow = [&](double out_flux, int s0, int s1) {
    if (out_flux <= 0.0) return;  // inflow and tangential edges carry no matrix term
    int snodes[2] = {s0, s1};
    for (int k = 0; k < reg.n_intervals(); ++k) {
      int t0, t1;
      detail::interval_tdofs(space, k, t0, t1);
      int tt[2] = {t0, t1};
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
          double wt = out_flux * detail::kMassWeight[b][a] * dt;
          for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i)
              builder.add(space.dof(snodes[i], tt[a]), space.dof(snodes[j], tt[b]), wt * detail::kP1Mass[j][i]);
        }
    }
  };
  for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
    {  // left side, outward normal -x
      int p = space.patch_of_cell(space.fine_x0(), iy);
      double f = -vel.flux[mesh.vertical_edge_id(space.fine_x0(), iy)];
      scatter_outflow(f, space.spatial_dof(p, space.fine_x0(), iy), space.spatial_dof(p, space.fine_x0(), iy + 1));
    }
    {  // right side, outward normal +x
      int p = space.patch_of_cell(space.fine_x1(), iy);
      double f = vel.flux[mesh.vertical_edge_id(space.fine_x1() + 1, iy)];
      scatter_outflow(f, space.spatial_dof(p, space.fine_x1() + 1, iy),
                      space.spatial_dof(p, space.fine_x1() + 1, iy + 1));
    }
  }
  for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
    {  // bottom side, outward normal -y
      int p = space.patch_of_cell(ix, space.fine_y0());
      double f = -vel.flux[mesh.horizontal_edge_id(ix, space.fine_y0())];
      scatter_outflow(f, space.spatial_dof(p, ix, space.fine_y0()), space.spatial_dof(p, ix + 1, space.fine_y0()));
    }
    {  // top side, outward normal +y
      int p = space.patch_of_cell(ix, space.fine_y1());
      double f = vel.flux[mesh.horizontal_edge_id(ix, space.fine_y1() + 1)];
      scatter_outflow(f, space.spatial_dof(p, ix, space.fine_y1() + 1),
                      space.spatial_dof(p, ix + 1, space.fine_y1() + 1));
    }
  }

  return builder.build();
}

//! Right-hand side of the window problem.  `f` is the initial datum at the
//! window's start, `g` the inflow datum (absolute time).  Either may be null
//! for zero data.
inline std::vector<double> assemble_transport_rhs(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                                  const SlabSpace& space,
                                                  const std::function<double(double, double)>& f,
                                                  const std::function<double(double, double, double)>& g) {
  const Region& reg = space.region();
  const double hx = mesh.hx(), hy = mesh.hy(), dt = mesh.dt_fine();
  std::vector<double> rhs(static_cast<size_t>(space.n_dofs()), 0.0);

  if (f) {
    int t0p = space.tdof_at(reg.level0, Side::plus);
    for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
      for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf) {
        int p = space.patch_of_cell(ixf, iyf);
        int s[4] = {space.spatial_dof(p, ixf, iyf), space.spatial_dof(p, ixf + 1, iyf),
                    space.spatial_dof(p, ixf, iyf + 1), space.spatial_dof(p, ixf + 1, iyf + 1)};
        for (int qx = 0; qx < 2; ++qx)
          for (int qy = 0; qy < 2; ++qy) {
            double xh = kGaussPoint[qx], yh = kGaussPoint[qy];
            double wq = kGaussWeight[qx] * kGaussWeight[qy] * hx * hy;
            double x = mesh.node_x(ixf) + xh * hx, y = mesh.node_y(iyf) + yh * hy;
            double fv = f(x, y);
            double n[4];
            basis::q1(xh, yh, n);
            for (int i = 0; i < 4; ++i) rhs[space.dof(s[i], t0p)] += wq * fv * n[i];
          }
      }
  }

  if (g) {
    // - int g w v.n over inflow sub-edges: v.n < 0, so the contribution is
    //   + |flux| int g w in edge-local coordinates
    auto scatter_inflow = [&](double out_flux, int s0, int s1, double x0, double y0, double ex, double ey) {
      if (out_flux >= 0.0) return;
      double aflx = -out_flux;
      int snodes[2] = {s0, s1};
      for (int k = 0; k < reg.n_intervals(); ++k) {
        int t0, t1;
        detail::interval_tdofs(space, k, t0, t1);
        int tt[2] = {t0, t1};
        double t_lo = mesh.level_time(reg.level0 + k);
        for (int qe = 0; qe < 2; ++qe)
          for (int qt = 0; qt < 2; ++qt) {
            double se = kGaussPoint[qe], st = kGaussPoint[qt];
            double gv = g(x0 + se * ex, y0 + se * ey, t_lo + st * dt);
            double wq = kGaussWeight[qe] * kGaussWeight[qt] * aflx * dt;
            double ne[2] = {1.0 - se, se};
            double nt[2] = {1.0 - st, st};
            for (int a = 0; a < 2; ++a)
              for (int i = 0; i < 2; ++i) rhs[space.dof(snodes[i], tt[a])] += wq * gv * ne[i] * nt[a];
          }
      }
    };
    for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
      {
        int p = space.patch_of_cell(space.fine_x0(), iy);
        double f_out = -vel.flux[mesh.vertical_edge_id(space.fine_x0(), iy)];
        scatter_inflow(f_out, space.spatial_dof(p, space.fine_x0(), iy), space.spatial_dof(p, space.fine_x0(), iy + 1),
                       mesh.node_x(space.fine_x0()), mesh.node_y(iy), 0.0, hy);
      }
      {
        int p = space.patch_of_cell(space.fine_x1(), iy);
        double f_out = vel.flux[mesh.vertical_edge_id(space.fine_x1() + 1, iy)];
        scatter_inflow(f_out, space.spatial_dof(p, space.fine_x1() + 1, iy),
                       space.spatial_dof(p, space.fine_x1() + 1, iy + 1), mesh.node_x(space.fine_x1() + 1),
                       mesh.node_y(iy), 0.0, hy);
      }
    }
    for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
      {
        int p = space.patch_of_cell(ix, space.fine_y0());
        double f_out = -vel.flux[mesh.horizontal_edge_id(ix, space.fine_y0())];
        scatter_inflow(f_out, space.spatial_dof(p, ix, space.fine_y0()), space.spatial_dof(p, ix + 1, space.fine_y0()),
                       mesh.node_x(ix), mesh.node_y(space.fine_y0()), hx, 0.0);
      }
      {
        int p = space.patch_of_cell(ix, space.fine_y1());
        double f_out = vel.flux[mesh.horizontal_edge_id(ix, space.fine_y1() + 1)];
        scatter_inflow(f_out, space.spatial_dof(p, ix, space.fine_y1() + 1),
                       space.spatial_dof(p, ix + 1, space.fine_y1() + 1), mesh.node_x(ix),
                       mesh.node_y(space.fine_y1() + 1), hx, 0.0);
      }
    }
  }
  return rhs;
}

//! Initial term from a carry-over trace (nodal values on this space's spatial
//! dofs): exact, no quadrature error against the bilinear trace.
inline void add_initial_rhs_from_trace(const SlabSpace& space, const std::vector<double>& trace,
                                       std::vector<double>& rhs) {
  const SpaceTimeMesh& mesh = space.mesh();
  const Region& reg = space.region();
  int t0p = space.tdof_at(reg.level0, Side::plus);
  const double m0 = mesh.hx() * mesh.hy();
  for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
    for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf) {
      int p = space.patch_of_cell(ixf, iyf);
      int s[4] = {space.spatial_dof(p, ixf, iyf), space.spatial_dof(p, ixf + 1, iyf),
                  space.spatial_dof(p, ixf, iyf + 1), space.spatial_dof(p, ixf + 1, iyf + 1)};
      for (int i = 0; i < 4; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) acc += detail::kQ1Mass[i][j] * trace[s[j]];
        rhs[space.dof(s[i], t0p)] += m0 * acc;
      }
    }
}

//! Gradient form over the whole window: int int grad u . grad w, the
//! regularity side of the local spectral problems (cg flavor).
inline SparseMatrix assemble_space_gradient_matrix(const SpaceTimeMesh& mesh, const SlabSpace& space) {
  const Region& reg = space.region();
  const double hx = mesh.hx(), hy = mesh.hy(), dt = mesh.dt_fine();
  SparseBuilder builder(space.n_dofs(), space.n_dofs());
  // Q1 stiffness on a rectangle, exact by 2x2 Gauss
  double stiff[4][4] = {};
  for (int qx = 0; qx < 2; ++qx)
    for (int qy = 0; qy < 2; ++qy) {
      double gx[4], gy[4];
      basis::q1_grad(kGaussPoint[qx], kGaussPoint[qy], gx, gy);
      double wq = kGaussWeight[qx] * kGaussWeight[qy] * hx * hy;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          stiff[i][j] += wq * ((gx[i] / hx) * (gx[j] / hx) + (gy[i] / hy) * (gy[j] / hy));
    }
  int d[8];
  for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
    for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf)
      for (int k = 0; k < reg.n_intervals(); ++k) {
        space.element_dofs(ixf, iyf, k, d);
        for (int b = 0; b < 2; ++b)
          for (int a = 0; a < 2; ++a) {
            double wt = detail::kMassWeight[b][a] * dt;
            for (int i = 0; i < 4; ++i)
              for (int j = 0; j < 4; ++j) builder.add(d[a * 4 + i], d[b * 4 + j], wt * stiff[i][j]);
          }
      }
  return builder.build();
}

}  // namespace stgms
