#pragma once

// Norms, error metrics, and table emitters for the slab scheme.
//
// The V norm of a window function,
//   |u|_V^2 = 1/2 ( |u(start+)|^2 + |u(end-)|^2 + sum_jumps |[u]|^2
//             + int_time sum_{inter-patch and boundary edges} |v.n| [u]^2 ),
// is the energy the transport form produces on the diagonal: a(u,u) = |u|_V^2
// whenever the velocity is cellwise divergence free.  On domain boundary
// edges [u] means the interior trace.  The W norm replaces the edge jumps by
// the full one-sided traces over every patch boundary,
//   |u|_W^2 = 1/2 ( |u(end-)|^2 + |u(start+)|^2
//             + int_time sum_patches int_{patch boundary} |v.n| u^2 ),
// counting interior edges once from each side.

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/fine_solver.hpp"
#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"

namespace stgms {

namespace detail {

// 1/2 |flux| P1 trace mass between two spatial dof pairs over all window
// intervals; used for both jump and one-sided boundary terms
inline void add_edge_trace_mass(SparseBuilder& builder, const SlabSpace& space, double abs_flux, const int* test_s,
                                const int* trial_s, double sign) {
  const double dt = space.mesh().dt_fine();
  for (int k = 0; k < space.region().n_intervals(); ++k) {
    int t0, t1;
    interval_tdofs(space, k, t0, t1);
    int tt[2] = {t0, t1};
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        double wt = sign * 0.5 * abs_flux * kMassWeight[b][a] * dt;
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i)
            builder.add(space.dof(test_s[i], tt[a]), space.dof(trial_s[j], tt[b]), wt * kP1Mass[j][i]);
      }
  }
}

}  // namespace detail

inline SparseMatrix assemble_v_norm_matrix(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                           const SlabSpace& space) {
  const Region& reg = space.region();
  SparseBuilder builder(space.n_dofs(), space.n_dofs());

  int t0p = space.tdof_at(reg.level0, Side::plus);
  int t1m = space.tdof_at(reg.level1, Side::minus);
  detail::add_window_level_mass(builder, space, t0p, t0p, 0.5);
  detail::add_window_level_mass(builder, space, t1m, t1m, 0.5);
  for (int l : space.jump_levels()) {
    int tp = space.tdof_at(l, Side::plus);
    int tm = space.tdof_at(l, Side::minus);
    detail::add_window_level_mass(builder, space, tp, tp, 0.5);
    detail::add_window_level_mass(builder, space, tp, tm, -0.5);
    detail::add_window_level_mass(builder, space, tm, tp, -0.5);
    detail::add_window_level_mass(builder, space, tm, tm, 0.5);
  }

  detail::EdgeSides es;
  auto scatter_jump = [&](const detail::EdgeSides& e) {
    detail::add_edge_trace_mass(builder, space, e.abs_flux, e.up_s, e.up_s, 1.0);
    detail::add_edge_trace_mass(builder, space, e.abs_flux, e.up_s, e.down_s, -1.0);
    detail::add_edge_trace_mass(builder, space, e.abs_flux, e.down_s, e.up_s, -1.0);
    detail::add_edge_trace_mass(builder, space, e.abs_flux, e.down_s, e.down_s, 1.0);
  };
  for (int ix = space.fine_x0() + 1; ix <= space.fine_x1(); ++ix)
    for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
      if (space.patch_of_cell(ix - 1, iy) == space.patch_of_cell(ix, iy)) continue;
      if (detail::edge_upwind(mesh, vel, space, true, ix, iy, es)) scatter_jump(es);
    }
  for (int iy = space.fine_y0() + 1; iy <= space.fine_y1(); ++iy)
    for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
      if (space.patch_of_cell(ix, iy - 1) == space.patch_of_cell(ix, iy)) continue;
      if (detail::edge_upwind(mesh, vel, space, false, ix, iy, es)) scatter_jump(es);
    }

  // the window's lateral boundary carries the full |v.n| trace mass
  auto scatter_boundary = [&](double flux, int s0, int s1) {
    if (flux == 0.0) return;
    int snodes[2] = {s0, s1};
    detail::add_edge_trace_mass(builder, space, std::abs(flux), snodes, snodes, 1.0);
  };
  for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
    int pl = space.patch_of_cell(space.fine_x0(), iy);
    scatter_boundary(vel.flux[mesh.vertical_edge_id(space.fine_x0(), iy)],
                     space.spatial_dof(pl, space.fine_x0(), iy), space.spatial_dof(pl, space.fine_x0(), iy + 1));
    int pr = space.patch_of_cell(space.fine_x1(), iy);
    scatter_boundary(vel.flux[mesh.vertical_edge_id(space.fine_x1() + 1, iy)],
                     space.spatial_dof(pr, space.fine_x1() + 1, iy),
                     space.spatial_dof(pr, space.fine_x1() + 1, iy + 1));
  }
  for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
    int pb = space.patch_of_cell(ix, space.fine_y0());
    scatter_boundary(vel.flux[mesh.horizontal_edge_id(ix, space.fine_y0())],
                     space.spatial_dof(pb, ix, space.fine_y0()), space.spatial_dof(pb, ix + 1, space.fine_y0()));
    int pt = space.patch_of_cell(ix, space.fine_y1());
    scatter_boundary(vel.flux[mesh.horizontal_edge_id(ix, space.fine_y1() + 1)],
                     space.spatial_dof(pt, ix, space.fine_y1() + 1),
                     space.spatial_dof(pt, ix + 1, space.fine_y1() + 1));
  }
  return builder.build();
}

inline SparseMatrix assemble_w_norm_matrix(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                           const SlabSpace& space) {
  const Region& reg = space.region();
  SparseBuilder builder(space.n_dofs(), space.n_dofs());
  int t0p = space.tdof_at(reg.level0, Side::plus);
  int t1m = space.tdof_at(reg.level1, Side::minus);
  detail::add_window_level_mass(builder, space, t0p, t0p, 0.5);
  detail::add_window_level_mass(builder, space, t1m, t1m, 0.5);

  // one-sided |v.n| trace masses over every patch boundary; interior edges
  // appear once from each side, window boundary edges once
  auto add_side = [&](double flux, int cx, int cy, int ox, int oy, int nx0, int ny0, int nx1, int ny1) {
    // contribution of the patch owning cell (cx,cy) at the edge with node
    // endpoints (nx0,ny0)-(nx1,ny1); (ox,oy) is the cell across the edge
    if (flux == 0.0) return;
    if (!space.contains_cell(cx, cy)) return;
    int p = space.patch_of_cell(cx, cy);
    if (space.contains_cell(ox, oy) && space.patch_of_cell(ox, oy) == p) return;  // interior to the patch
    int snodes[2] = {space.spatial_dof(p, nx0, ny0), space.spatial_dof(p, nx1, ny1)};
    detail::add_edge_trace_mass(builder, space, std::abs(flux), snodes, snodes, 1.0);
  };
  for (int ix = space.fine_x0(); ix <= space.fine_x1() + 1; ++ix)
    for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
      double flux = vel.flux[mesh.vertical_edge_id(ix, iy)];
      add_side(flux, ix - 1, iy, ix, iy, ix, iy, ix, iy + 1);
      add_side(flux, ix, iy, ix - 1, iy, ix, iy, ix, iy + 1);
    }
  for (int iy = space.fine_y0(); iy <= space.fine_y1() + 1; ++iy)
    for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
      double flux = vel.flux[mesh.horizontal_edge_id(ix, iy)];
      add_side(flux, ix, iy - 1, ix, iy, ix, iy, ix + 1, iy);
      add_side(flux, ix, iy, ix, iy - 1, ix, iy, ix + 1, iy);
    }
  return builder.build();
}

inline double v_norm(const SpaceTimeMesh& mesh, const VelocityField& vel, const SlabFunction& u) {
  SparseMatrix m = assemble_v_norm_matrix(mesh, vel, *u.space);
  return std::sqrt(std::max(0.0, dot(u.coeffs, m.apply(u.coeffs))));
}

inline double w_norm(const SpaceTimeMesh& mesh, const VelocityField& vel, const SlabFunction& u) {
  SparseMatrix m = assemble_w_norm_matrix(mesh, vel, *u.space);
  return std::sqrt(std::max(0.0, dot(u.coeffs, m.apply(u.coeffs))));
}

//! Worst relative deviation of a(u,u) from |u|_V^2 over random window
//! functions; zero to roundoff for divergence-free velocities.
inline double coercivity_audit(const SpaceTimeMesh& mesh, const VelocityField& vel, const SlabSpace& space,
                               int trials, unsigned seed) {
  SparseMatrix a = assemble_transport_matrix(mesh, vel, space);
  SparseMatrix m = assemble_v_norm_matrix(mesh, vel, space);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> u(static_cast<size_t>(space.n_dofs()));
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    for (auto& c : u) c = unif(rng);
    double auu = dot(u, a.apply(u));
    double vn2 = dot(u, m.apply(u));
    worst = std::max(worst, std::abs(auu - vn2) / std::max(1.0, std::abs(vn2)));
  }
  return worst;
}

struct ErrorReport {
  double e1 = 0.0;  // relative space-time L2 over all slabs
  double e2 = 0.0;  // relative L2 of the terminal trace
  std::vector<double> slab_error_sq, slab_ref_sq;
  double terminal_error_sq = 0.0, terminal_ref_sq = 0.0;
};

//! Relative errors of `approx` against `reference`, integrated cell by cell
//! with the Gauss rule that is exact for the piecewise spaces.  A zero-norm
//! reference makes the errors absolute rather than relative.
inline ErrorReport compute_errors(const SpaceTimeMesh& mesh, const FineSolution& approx,
                                  const FineSolution& reference) {
  if (approx.n_slabs() != reference.n_slabs()) throw std::invalid_argument("compute_errors: slab counts differ");
  ErrorReport rep;
  const double gq[2] = {kGaussPoint[0], kGaussPoint[1]};
  const double wvol = 0.125 * mesh.hx() * mesh.hy() * mesh.dt_fine();
  for (int n = 0; n < approx.n_slabs(); ++n) {
    const SlabFunction& ua = approx.slabs[static_cast<size_t>(n)];
    const SlabFunction& ur = reference.slabs[static_cast<size_t>(n)];
    double num = 0.0, den = 0.0;
    for (int iy = 0; iy < mesh.ny_fine(); ++iy)
      for (int ix = 0; ix < mesh.nx_fine(); ++ix)
        for (int k = 0; k < mesh.refine_time(); ++k)
          for (double qx : gq)
            for (double qy : gq)
              for (double qt : gq) {
                double va = ua.value(ix, iy, k, qx, qy, qt);
                double vr = ur.value(ix, iy, k, qx, qy, qt);
                num += wvol * (va - vr) * (va - vr);
                den += wvol * vr * vr;
              }
    rep.slab_error_sq.push_back(num);
    rep.slab_ref_sq.push_back(den);
  }
  const double wface = 0.25 * mesh.hx() * mesh.hy();
  const SlabFunction& ta = approx.slabs.back();
  const SlabFunction& tr = reference.slabs.back();
  int last = mesh.refine_time() - 1;
  for (int iy = 0; iy < mesh.ny_fine(); ++iy)
    for (int ix = 0; ix < mesh.nx_fine(); ++ix)
      for (double qx : gq)
        for (double qy : gq) {
          double va = ta.value(ix, iy, last, qx, qy, 1.0);
          double vr = tr.value(ix, iy, last, qx, qy, 1.0);
          rep.terminal_error_sq += wface * (va - vr) * (va - vr);
          rep.terminal_ref_sq += wface * vr * vr;
        }
  double num1 = 0.0, den1 = 0.0;
  for (size_t n = 0; n < rep.slab_error_sq.size(); ++n) {
    num1 += rep.slab_error_sq[n];
    den1 += rep.slab_ref_sq[n];
  }
  rep.e1 = den1 > 0.0 ? std::sqrt(num1 / den1) : std::sqrt(num1);
  rep.e2 = rep.terminal_ref_sq > 0.0 ? std::sqrt(rep.terminal_error_sq / rep.terminal_ref_sq)
                                     : std::sqrt(rep.terminal_error_sq);
  return rep;
}

struct LambdaRow {
  int L;
  double inv_lambda_star;
};

//! Per basis count L, the reciprocal of the smallest first-excluded
//! eigenvalue over all cells.  An exhausted or degenerate spectrum reports 0.
inline std::vector<LambdaRow> lambda_star_curve(const std::vector<std::vector<double>>& spectra,
                                                const std::vector<int>& counts) {
  std::vector<LambdaRow> rows;
  for (int L : counts) {
    double lam = 0.0;
    bool ok = !spectra.empty();
    for (const auto& cell : spectra) {
      if (L < 0 || L >= static_cast<int>(cell.size())) {
        ok = false;
        break;
      }
      double v = cell[static_cast<size_t>(L)];
      if (!(lam > 0.0) || v < lam) lam = v;
    }
    rows.push_back({L, ok && lam > 0.0 ? 1.0 / lam : 0.0});
  }
  return rows;
}

struct TableRow {
  int L = 0, dim = 0;
  double snapshot_ratio = 0.0, e1 = 0.0, e2 = 0.0;
};

struct CompareRow {
  std::string basis;  // "multiscale" or "poly"
  int param = 0;      // L for multiscale rows, s for polynomial rows
  int dim = 0;
  double e1 = 0.0, e2 = 0.0;
};

namespace detail {

class CsvFile {
 public:
  explicit CsvFile(const std::string& path) : f_(std::fopen(path.c_str(), "wb")) {
    if (!f_) throw std::runtime_error("cannot open for writing: " + path);
  }
  ~CsvFile() {
    if (f_) std::fclose(f_);
  }
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;
  void line(const std::string& s) {
    std::fputs(s.c_str(), f_);
    std::fputc('\n', f_);
  }
  static std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return buf;
  }

 private:
  std::FILE* f_;
};

}  // namespace detail

inline void write_table_csv(const std::string& path, const std::vector<TableRow>& rows) {
  detail::CsvFile csv(path);
  csv.line("L,dim,snapshot_ratio,e1,e2");
  for (const auto& r : rows)
    csv.line(std::to_string(r.L) + "," + std::to_string(r.dim) + "," + detail::CsvFile::num(r.snapshot_ratio) + "," +
             detail::CsvFile::num(r.e1) + "," + detail::CsvFile::num(r.e2));
}

inline void write_compare_csv(const std::string& path, const std::vector<CompareRow>& rows) {
  detail::CsvFile csv(path);
  csv.line("basis,param,dim,e1,e2");
  for (const auto& r : rows)
    csv.line(r.basis + "," + std::to_string(r.param) + "," + std::to_string(r.dim) + "," +
             detail::CsvFile::num(r.e1) + "," + detail::CsvFile::num(r.e2));
}

inline void write_lambda_csv(const std::string& path, const std::vector<LambdaRow>& rows) {
  detail::CsvFile csv(path);
  csv.line("L,inv_lambda_star");
  for (const auto& r : rows) csv.line(std::to_string(r.L) + "," + detail::CsvFile::num(r.inv_lambda_star));
}

//! Nodal dump of a scalar field, same layout as the permeability files.
inline void write_node_field(const std::string& path, const SpaceTimeMesh& mesh,
                             const std::function<double(double, double)>& sampler) {
  detail::CsvFile out(path);
  out.line(std::to_string(mesh.nx_fine() + 1) + " " + std::to_string(mesh.ny_fine() + 1));
  for (int iy = 0; iy <= mesh.ny_fine(); ++iy) {
    std::string row;
    for (int ix = 0; ix <= mesh.nx_fine(); ++ix) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", sampler(mesh.node_x(ix), mesh.node_y(iy)));
      row += buf;
      if (ix < mesh.nx_fine()) row += ' ';
    }
    out.line(row);
  }
}

}  // namespace stgms
