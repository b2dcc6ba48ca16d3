#pragma once
// Offline basis construction on top of a snapshot space.
//
// Two quadratic forms over the snapshot span drive the mode selection.  The
// roughness form a and the trace form s are projected onto the snapshot
// columns and the generalized problem a c = lambda s c is solved with the
// trace form factored out; low-lambda modes are the ones a coarse space must
// keep.  In cg mode a is the broken spatial gradient over the whole solve
// window; in dg mode it collects the time jumps inside the target step and
// the |v.n|-weighted spatial jumps across fine edges interior to the target
// cell.  The trace form lives on the target cell only: half of (step-start
// face + step-end face + lateral |v.n| boundary mass), with dg adding the
// interior fine time faces and per-fine-cell boundary traces.

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stgms/analysis.hpp"
#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"
#include "stgms/snapshot.hpp"

namespace stgms {

struct SpectralForms {
  DenseMatrix a, s;  // symmetric, over snapshot coefficients
};

struct EigenPairs {
  std::vector<double> values;  // ascending, trace-form null space already cut
  DenseMatrix vectors;         // snapshot-coordinate columns, s-orthonormal
  int n_kept() const { return vectors.cols; }
};

struct SpectralBasis {
  int cell = -1;
  int slab = -1;
  Mode mode = Mode::cg;
  int requested = 0;            // modes asked for before the POD pass
  std::vector<double> lambdas;  // full kept spectrum of this cell, ascending
  double lambda_next = std::numeric_limits<double>::infinity();
  std::shared_ptr<SlabSpace> space;  // target cell x step
  DenseMatrix functions;             // space->n_dofs() x n_offline, columns spanning the cell's coarse space
  int n_offline() const { return functions.cols; }
};

namespace detail {

//! scale * int_block N_i N_j at fixed time dofs, over fine cells [fx0,fx1]x[fy0,fy1].
inline void add_block_face_mass(SparseBuilder& builder, const SpaceTimeMesh& mesh, const SlabSpace& space, int fx0,
                                int fx1, int fy0, int fy1, int tdof_row, int tdof_col, double scale) {
  const double m0 = scale * mesh.hx() * mesh.hy();
  for (int iy = fy0; iy <= fy1; ++iy)
    for (int ix = fx0; ix <= fx1; ++ix) {
      int p = space.patch_of_cell(ix, iy);
      int s[4] = {space.spatial_dof(p, ix, iy), space.spatial_dof(p, ix + 1, iy), space.spatial_dof(p, ix, iy + 1),
                  space.spatial_dof(p, ix + 1, iy + 1)};
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          builder.add(space.dof(s[i], tdof_row), space.dof(s[j], tdof_col), m0 * kQ1Mass[i][j]);
    }
}

//! scale * sum over intervals [k0,k1] of the |flux|-weighted edge trace mass,
//! rows from row_s, columns from col_s.
inline void add_edge_range_mass(SparseBuilder& builder, const SlabSpace& space, double abs_flux, const int* row_s,
                                const int* col_s, int k0, int k1, double scale) {
  const double dt = space.mesh().dt_fine();
  for (int k = k0; k <= k1; ++k) {
    int t0, t1;
    interval_tdofs(space, k, t0, t1);
    int tt[2] = {t0, t1};
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        double wt = scale * abs_flux * kMassWeight[b][a] * dt;
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i)
            builder.add(space.dof(row_s[i], tt[a]), space.dof(col_s[j], tt[b]), wt * kP1Mass[j][i]);
      }
  }
}

//! z^T m z with z's columns as the coordinate system; symmetrized exactly.
inline DenseMatrix project_onto_columns(const SparseMatrix& m, const DenseMatrix& z) {
  DenseMatrix zt = z.transposed();  // rows contiguous per snapshot
  DenseMatrix out(z.cols, z.cols);
  std::vector<double> col(static_cast<size_t>(z.rows));
  for (int j = 0; j < z.cols; ++j) {
    const double* zj = zt.a.data() + static_cast<size_t>(j) * static_cast<size_t>(zt.cols);
    std::copy(zj, zj + z.rows, col.begin());
    std::vector<double> mz = m.apply(col);
    for (int i = 0; i < z.cols; ++i) {
      const double* zi = zt.a.data() + static_cast<size_t>(i) * static_cast<size_t>(zt.cols);
      double acc = 0.0;
      for (int r = 0; r < z.rows; ++r) acc += zi[r] * mz[static_cast<size_t>(r)];
      out(i, j) = acc;
    }
  }
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < i; ++j) out(i, j) = out(j, i) = 0.5 * (out(i, j) + out(j, i));
  return out;
}

}  // namespace detail

inline SpectralForms assemble_spectral_forms(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                             const SnapshotSpace& snap) {
  if (snap.n_snapshots() == 0) throw std::invalid_argument("spectral forms: empty snapshot space");
  const SlabSpace& space = *snap.space;
  const Region target = mesh.cell_slab_region(snap.cell, snap.slab);
  const int rs = mesh.config().refine_space;
  const int tfx0 = target.cx0 * rs, tfx1 = (target.cx1 + 1) * rs - 1;
  const int tfy0 = target.cy0 * rs, tfy1 = (target.cy1 + 1) * rs - 1;
  // target-step interval range in region numbering
  const int k0 = target.level0 - space.region().level0;
  const int k1 = target.level1 - 1 - space.region().level0;

  SparseBuilder sb(space.n_dofs(), space.n_dofs());
  const int t_start = space.tdof_at(target.level0, Side::plus);
  const int t_end = space.tdof_at(target.level1, Side::minus);
  detail::add_block_face_mass(sb, mesh, space, tfx0, tfx1, tfy0, tfy1, t_start, t_start, 0.5);
  detail::add_block_face_mass(sb, mesh, space, tfx0, tfx1, tfy0, tfy1, t_end, t_end, 0.5);

  SparseBuilder ab(space.n_dofs(), space.n_dofs());
  if (snap.mode == Mode::cg) {
    // lateral trace of the target cell, taken from inside
    for (int iy = tfy0; iy <= tfy1; ++iy)
      for (auto [line, cx] : {std::pair{tfx0, tfx0}, std::pair{tfx1 + 1, tfx1}}) {
        double flux = vel.flux[mesh.vertical_edge_id(line, iy)];
        if (flux == 0.0) continue;
        int p = space.patch_of_cell(cx, iy);
        int s[2] = {space.spatial_dof(p, line, iy), space.spatial_dof(p, line, iy + 1)};
        detail::add_edge_range_mass(sb, space, std::abs(flux), s, s, k0, k1, 0.5);
      }
    for (int ix = tfx0; ix <= tfx1; ++ix)
      for (auto [line, cy] : {std::pair{tfy0, tfy0}, std::pair{tfy1 + 1, tfy1}}) {
        double flux = vel.flux[mesh.horizontal_edge_id(ix, line)];
        if (flux == 0.0) continue;
        int p = space.patch_of_cell(ix, cy);
        int s[2] = {space.spatial_dof(p, ix, line), space.spatial_dof(p, ix + 1, line)};
        detail::add_edge_range_mass(sb, space, std::abs(flux), s, s, k0, k1, 0.5);
      }
    return {detail::project_onto_columns(assemble_space_gradient_matrix(mesh, space), snap.columns),
            detail::project_onto_columns(sb.build(), snap.columns)};
  }

  // dg: interior fine time faces of the target step
  for (int l = target.level0 + 1; l < target.level1; ++l) {
    int tp = space.tdof_at(l, Side::plus);
    int tm = space.tdof_at(l, Side::minus);
    detail::add_block_face_mass(sb, mesh, space, tfx0, tfx1, tfy0, tfy1, tm, tm, 0.5);
    detail::add_block_face_mass(sb, mesh, space, tfx0, tfx1, tfy0, tfy1, tp, tp, 0.5);
    // time jumps feed the roughness form
    detail::add_block_face_mass(ab, mesh, space, tfx0, tfx1, tfy0, tfy1, tp, tp, 0.5);
    detail::add_block_face_mass(ab, mesh, space, tfx0, tfx1, tfy0, tfy1, tm, tm, 0.5);
    detail::add_block_face_mass(ab, mesh, space, tfx0, tfx1, tfy0, tfy1, tp, tm, -0.5);
    detail::add_block_face_mass(ab, mesh, space, tfx0, tfx1, tfy0, tfy1, tm, tp, -0.5);
  }
  // per-fine-cell boundary traces, each cell contributing its own side
  auto add_own_trace = [&](int ix, int iy, bool vertical, int line) {
    double flux = vel.flux[vertical ? mesh.vertical_edge_id(line, iy) : mesh.horizontal_edge_id(ix, line)];
    if (flux == 0.0) return;
    int p = space.patch_of_cell(ix, iy);
    int s[2];
    if (vertical) {
      s[0] = space.spatial_dof(p, line, iy);
      s[1] = space.spatial_dof(p, line, iy + 1);
    } else {
      s[0] = space.spatial_dof(p, ix, line);
      s[1] = space.spatial_dof(p, ix + 1, line);
    }
    detail::add_edge_range_mass(sb, space, std::abs(flux), s, s, k0, k1, 0.5);
  };
  for (int iy = tfy0; iy <= tfy1; ++iy)
    for (int ix = tfx0; ix <= tfx1; ++ix) {
      add_own_trace(ix, iy, true, ix);
      add_own_trace(ix, iy, true, ix + 1);
      add_own_trace(ix, iy, false, iy);
      add_own_trace(ix, iy, false, iy + 1);
    }
  // spatial jumps across fine edges interior to the target cell
  detail::EdgeSides es;
  auto scatter_jump = [&](const detail::EdgeSides& e) {
    detail::add_edge_range_mass(ab, space, e.abs_flux, e.up_s, e.up_s, k0, k1, 0.5);
    detail::add_edge_range_mass(ab, space, e.abs_flux, e.down_s, e.down_s, k0, k1, 0.5);
    detail::add_edge_range_mass(ab, space, e.abs_flux, e.up_s, e.down_s, k0, k1, -0.5);
    detail::add_edge_range_mass(ab, space, e.abs_flux, e.down_s, e.up_s, k0, k1, -0.5);
  };
  for (int iy = tfy0; iy <= tfy1; ++iy)
    for (int ix = tfx0 + 1; ix <= tfx1; ++ix)
      if (detail::edge_upwind(mesh, vel, space, true, ix, iy, es)) scatter_jump(es);
  for (int iy = tfy0 + 1; iy <= tfy1; ++iy)
    for (int ix = tfx0; ix <= tfx1; ++ix)
      if (detail::edge_upwind(mesh, vel, space, false, ix, iy, es)) scatter_jump(es);
  return {detail::project_onto_columns(ab.build(), snap.columns),
          detail::project_onto_columns(sb.build(), snap.columns)};
}

namespace detail {

inline DenseMatrix dense_mul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int r = 0; r < a.cols; ++r) {
      double f = a(i, r);
      if (f == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += f * b(r, j);
    }
  return out;
}

inline DenseMatrix dense_tmul(const DenseMatrix& a, const DenseMatrix& b) {  // a^T b
  DenseMatrix out(a.cols, b.cols);
  for (int r = 0; r < a.rows; ++r)
    for (int i = 0; i < a.cols; ++i) {
      double f = a(r, i);
      if (f == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += f * b(r, j);
    }
  return out;
}

//! Right-multiplies x by chol(x^T s x)^{-T}: makes the columns s-orthonormal
//! without changing any leading span.  No-op (returns false) if the Gram is
//! not numerically positive definite.
inline bool s_orthonormalize(const DenseMatrix& s, DenseMatrix& x) {
  const int m = x.cols;
  DenseMatrix t = dense_tmul(x, dense_mul(s, x));
  DenseMatrix l(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j <= i; ++j) {
      double acc = t(i, j);
      for (int k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      if (i == j) {
        if (acc <= 0.0) return false;
        l(i, i) = std::sqrt(acc);
      } else {
        l(i, j) = acc / l(j, j);
      }
    }
  for (int r = 0; r < x.rows; ++r)
    for (int j = 0; j < m; ++j) {
      double acc = x(r, j);
      for (int k = 0; k < j; ++k) acc -= l(j, k) * x(r, k);
      x(r, j) = acc / l(j, j);
    }
  return true;
}

}  // namespace detail

//! a c = lambda s c with s factored as Q D Q^T; directions with relative
//! trace weight below 1e-10 carry no s-measurable content and are eliminated
//! by static condensation of a (so an a-null function, e.g. the constant,
//! keeps its zero eigenvalue even when it leans on the cut directions).
//!
//! `pinned_null` is a combination the roughness form kills analytically (the
//! partition-of-unity constant).  Near-zero eigenvalues come in clusters the
//! solver can only resolve up to an arbitrary rotation, so the known null
//! direction is installed as the leading mode explicitly and the rest is
//! re-orthonormalized against it.
inline EigenPairs solve_generalized_eig(const DenseMatrix& a, const DenseMatrix& s,
                                        const std::vector<double>* pinned_null = nullptr) {
  if (a.rows != a.cols || s.rows != s.cols || a.rows != s.rows)
    throw std::invalid_argument("generalized eig: size mismatch");
  const int n = a.rows;
  SymEigResult sd = sym_eig(s);
  double dmax = 0.0;
  for (double d : sd.values) dmax = std::max(dmax, d);
  if (dmax <= 0.0) throw std::runtime_error("generalized eig: degenerate cell, trace form is numerically zero");
  const double cut = 1e-10 * dmax;
  std::vector<int> keep, drop;
  for (int k = 0; k < n; ++k)
    (sd.values[static_cast<size_t>(k)] > cut ? keep : drop).push_back(k);
  const int m = static_cast<int>(keep.size());
  const int z = static_cast<int>(drop.size());
  DenseMatrix y(n, m);  // Q_keep D_keep^{-1/2}
  for (int k = 0; k < m; ++k) {
    double inv = 1.0 / std::sqrt(sd.values[static_cast<size_t>(keep[static_cast<size_t>(k)])]);
    for (int i = 0; i < n; ++i) y(i, k) = sd.vectors(i, keep[static_cast<size_t>(k)]) * inv;
  }
  // one whitening refinement: D^{-1/2} alone can lose a few digits of
  // s-orthonormality when s is ill conditioned
  detail::s_orthonormalize(s, y);
  DenseMatrix b = detail::dense_tmul(y, detail::dense_mul(a, y));
  DenseMatrix g;  // null-space response -(Z^T A Z)^+ (Z^T A Y)
  DenseMatrix zb(n, z);
  if (z > 0) {
    for (int k = 0; k < z; ++k)
      for (int i = 0; i < n; ++i) zb(i, k) = sd.vectors(i, drop[static_cast<size_t>(k)]);
    DenseMatrix az = detail::dense_mul(a, zb);
    DenseMatrix zaz = detail::dense_tmul(zb, az);
    for (int i = 0; i < z; ++i)
      for (int j = 0; j < i; ++j) zaz(i, j) = zaz(j, i) = 0.5 * (zaz(i, j) + zaz(j, i));
    DenseMatrix c = detail::dense_tmul(az, y);  // z x m
    SymEigResult md = sym_eig(zaz);
    double emax = 0.0;
    for (double e : md.values) emax = std::max(emax, e);
    const double ecut = 1e-12 * std::max(1.0, emax);
    DenseMatrix vc = detail::dense_tmul(md.vectors, c);
    for (int i = 0; i < z; ++i) {
      double e = md.values[static_cast<size_t>(i)];
      double inv = e > ecut ? 1.0 / e : 0.0;
      for (int j = 0; j < m; ++j) vc(i, j) *= inv;
    }
    g = detail::dense_mul(md.vectors, vc);  // (Z^T A Z)^+ (Z^T A Y)
    DenseMatrix schur = detail::dense_tmul(c, g);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) b(i, j) -= schur(i, j);
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < i; ++j) b(i, j) = b(j, i) = 0.5 * (b(i, j) + b(j, i));
  SymEigResult bd = sym_eig(b);
  EigenPairs out;
  out.values = bd.values;
  out.vectors = detail::dense_mul(y, bd.vectors);
  if (z > 0) {
    DenseMatrix w = detail::dense_mul(zb, detail::dense_mul(g, bd.vectors));
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < m; ++k) out.vectors(i, k) -= w(i, k);
    // the response regains a little s-weight through the not-quite-zero cut
    // directions; the triangular correction restores s-orthonormality
    detail::s_orthonormalize(s, out.vectors);
  }
  if (pinned_null != nullptr && m > 0) {
    const std::vector<double>& p = *pinned_null;
    if (static_cast<int>(p.size()) != n)
      throw std::invalid_argument("generalized eig: pinned direction has the wrong length");
    double paa = 0.0, pss = 0.0, amax = a.max_abs(), pp = 0.0;
    std::vector<double> sp(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double ra = 0.0, rs = 0.0;
      for (int j = 0; j < n; ++j) {
        ra += a(i, j) * p[static_cast<size_t>(j)];
        rs += s(i, j) * p[static_cast<size_t>(j)];
      }
      paa += p[static_cast<size_t>(i)] * ra;
      pss += p[static_cast<size_t>(i)] * rs;
      pp += p[static_cast<size_t>(i)] * p[static_cast<size_t>(i)];
      sp[static_cast<size_t>(i)] = rs;
    }
    if (pss <= 0.0 || std::abs(paa) > 1e-8 * amax * pp)
      throw std::invalid_argument("generalized eig: pinned direction is not null for the roughness form");
    // swap the pinned direction for the computed mode it overlaps most
    int swap_out = 0;
    double best = -1.0;
    for (int k = 0; k < m; ++k) {
      double ov = 0.0;
      for (int i = 0; i < n; ++i) ov += out.vectors(i, k) * sp[static_cast<size_t>(i)];
      if (std::abs(ov) > best) {
        best = std::abs(ov);
        swap_out = k;
      }
    }
    DenseMatrix deflated(n, m);
    const double inv = 1.0 / std::sqrt(pss);
    for (int i = 0; i < n; ++i) deflated(i, 0) = p[static_cast<size_t>(i)] * inv;
    std::vector<double> values(1, std::max(0.0, paa / pss));
    int col = 1;
    for (int k = 0; k < m; ++k) {
      if (k == swap_out) continue;
      for (int i = 0; i < n; ++i) deflated(i, col) = out.vectors(i, k);
      values.push_back(out.values[static_cast<size_t>(k)]);
      ++col;
    }
    if (detail::s_orthonormalize(s, deflated)) {
      // both leading values estimate an exact zero; keep the list ascending
      if (values.size() > 1 && values[0] > values[1]) values[0] = values[1];
      out.vectors = std::move(deflated);
      out.values = std::move(values);
    }
  }
  // reproducible sign: largest-magnitude entry positive
  for (int k = 0; k < m; ++k) {
    int arg = 0;
    for (int i = 1; i < n; ++i)
      if (std::abs(out.vectors(i, k)) > std::abs(out.vectors(arg, k))) arg = i;
    if (out.vectors(arg, k) < 0.0)
      for (int i = 0; i < n; ++i) out.vectors(i, k) = -out.vectors(i, k);
  }
  return out;
}

namespace detail {

//! Snapshot combinations (coordinates in `coords`) restricted to `space`,
//! then orthonormalized there; combinations turning linearly dependent under
//! the restriction are dropped by a relative cut pod_tol on the Gram
//! spectrum.
inline DenseMatrix restrict_combinations(const SnapshotSpace& snap, const SlabSpace& space,
                                         const DenseMatrix& coords, double pod_tol) {
  auto map = restriction_map(*snap.space, space);
  const int nr = space.n_dofs();
  const int take = coords.cols;
  DenseMatrix r(nr, take);
  for (int j = 0; j < take; ++j)
    for (int i = 0; i < nr; ++i) {
      const int row = map[static_cast<size_t>(i)];
      double acc = 0.0;
      for (int q = 0; q < snap.n_snapshots(); ++q) acc += snap.columns(row, q) * coords(q, j);
      r(i, j) = acc;
    }
  DenseMatrix gram(take, take);
  for (int i = 0; i < take; ++i)
    for (int j = 0; j < take; ++j) {
      double acc = 0.0;
      for (int q = 0; q < nr; ++q) acc += r(q, i) * r(q, j);
      gram(i, j) = acc;
    }
  SvdResult sv = svd(gram);
  if (sv.sigma.empty() || sv.sigma[0] <= 0.0)
    throw std::runtime_error("offline basis: all directions dropped for cell " + std::to_string(snap.cell));
  int kept = 0;
  while (kept < take && sv.sigma[static_cast<size_t>(kept)] >= pod_tol * sv.sigma[0]) ++kept;
  DenseMatrix functions(nr, kept);
  for (int k = 0; k < kept; ++k) {
    double inv = 1.0 / std::sqrt(sv.sigma[static_cast<size_t>(k)]);
    for (int i = 0; i < nr; ++i) {
      double acc = 0.0;
      for (int j = 0; j < take; ++j) acc += r(i, j) * sv.v(j, k);
      functions(i, k) = acc * inv;
    }
  }
  return functions;
}

}  // namespace detail

//! First L modes, restricted to the target cell x step, then orthonormalized
//! with linearly dependent directions dropped (relative cut pod_tol on the
//! Gram spectrum).
inline SpectralBasis select_offline_basis(const SpaceTimeMesh& mesh, const SnapshotSpace& snap,
                                          const EigenPairs& pairs, int n_modes, double pod_tol = 1e-8) {
  if (n_modes < 1) throw std::invalid_argument("offline basis: need at least one mode");
  SpectralBasis basis;
  basis.cell = snap.cell;
  basis.slab = snap.slab;
  basis.mode = snap.mode;
  basis.requested = n_modes;
  basis.lambdas = pairs.values;
  const int take = std::min(n_modes, pairs.n_kept());
  basis.lambda_next = take < pairs.n_kept() ? pairs.values[static_cast<size_t>(take)]
                                            : std::numeric_limits<double>::infinity();
  basis.space = std::make_shared<SlabSpace>(mesh, mesh.cell_slab_region(snap.cell, snap.slab), snap.mode);
  DenseMatrix coords(pairs.vectors.rows, take);
  for (int j = 0; j < take; ++j)
    for (int i = 0; i < coords.rows; ++i) coords(i, j) = pairs.vectors(i, j);
  basis.functions = detail::restrict_combinations(snap, *basis.space, coords, pod_tol);
  return basis;
}

//! The whole snapshot span on the target cell x step, bypassing the spectral
//! selection; the coarse solve in this span reproduces the reference the
//! eigenmodes are measured against.
inline SpectralBasis snapshot_span_basis(const SpaceTimeMesh& mesh, const SnapshotSpace& snap,
                                         double pod_tol = 1e-8) {
  SpectralBasis basis;
  basis.cell = snap.cell;
  basis.slab = snap.slab;
  basis.mode = snap.mode;
  basis.requested = snap.n_snapshots();
  basis.space = std::make_shared<SlabSpace>(mesh, mesh.cell_slab_region(snap.cell, snap.slab), snap.mode);
  DenseMatrix coords(snap.n_snapshots(), snap.n_snapshots());
  for (int i = 0; i < coords.rows; ++i) coords(i, i) = 1.0;
  basis.functions = detail::restrict_combinations(snap, *basis.space, coords, pod_tol);
  return basis;
}

//! The all-ones combination: by the partition-of-unity property of the
//! snapshot family it is the constant, which every roughness form kills.
inline std::vector<double> constant_combination(const SnapshotSpace& snap) {
  return std::vector<double>(static_cast<size_t>(snap.n_snapshots()), 1.0);
}

inline SpectralBasis build_offline_basis(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                         const SnapshotSpace& snap, int n_modes, double pod_tol = 1e-8) {
  SpectralForms forms = assemble_spectral_forms(mesh, vel, snap);
  std::vector<double> ones = constant_combination(snap);
  return select_offline_basis(mesh, snap, solve_generalized_eig(forms.a, forms.s, &ones), n_modes, pod_tol);
}

struct SpectrumRow {
  int cell, slab, k;
  double lambda;
};

inline void write_spectrum_csv(const std::string& path, const std::vector<SpectrumRow>& rows) {
  detail::CsvFile csv(path);
  csv.line("cell,slab,k,lambda");
  for (const auto& r : rows)
    csv.line(std::to_string(r.cell) + "," + std::to_string(r.slab) + "," + std::to_string(r.k) + "," +
             detail::CsvFile::num(r.lambda));
}

namespace detail {

constexpr uint64_t kOfflineMagic = 0x4246464f534d5453ull;  // "STMSOFFB" little-endian

}  // namespace detail

inline void save_offline_basis(const std::string& path, const SpectralBasis& basis) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("offline cache: cannot open " + path + " for writing");
  bool ok = true;
  detail::put_i64(f, static_cast<int64_t>(detail::kOfflineMagic));
  int64_t head[6] = {basis.mode == Mode::dg ? 1 : 0, basis.cell,          basis.slab,
                     basis.requested,                basis.functions.rows, basis.functions.cols};
  for (int64_t h : head) detail::put_i64(f, h);
  detail::put_i64(f, static_cast<int64_t>(basis.lambdas.size()));
  auto put_doubles = [&](const double* p, size_t n) { ok = ok && std::fwrite(p, sizeof(double), n, f) == n; };
  put_doubles(&basis.lambda_next, 1);
  if (!basis.lambdas.empty()) put_doubles(basis.lambdas.data(), basis.lambdas.size());
  if (!basis.functions.a.empty()) {
    std::vector<double> col(static_cast<size_t>(basis.functions.rows));
    for (int j = 0; j < basis.functions.cols; ++j) {
      for (int i = 0; i < basis.functions.rows; ++i) col[static_cast<size_t>(i)] = basis.functions(i, j);
      put_doubles(col.data(), col.size());
    }
  }
  ok = ok && std::fflush(f) == 0 && std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw std::runtime_error("offline cache: short write to " + path);
}

inline std::optional<SpectralBasis> load_offline_basis(const std::string& path, const SpaceTimeMesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return std::nullopt;
  auto fail = [&]() {
    std::fclose(f);
    return std::nullopt;
  };
  int64_t magic;
  if (!detail::get_i64(f, magic) || magic != static_cast<int64_t>(detail::kOfflineMagic)) return fail();
  int64_t head[7];
  for (int64_t& h : head)
    if (!detail::get_i64(f, h)) return fail();
  SpectralBasis basis;
  basis.mode = head[0] ? Mode::dg : Mode::cg;
  basis.cell = static_cast<int>(head[1]);
  basis.slab = static_cast<int>(head[2]);
  basis.requested = static_cast<int>(head[3]);
  const int rows = static_cast<int>(head[4]);
  const int cols = static_cast<int>(head[5]);
  const int nl = static_cast<int>(head[6]);
  if (basis.cell < 0 || basis.cell >= mesh.n_coarse_cells() || basis.slab < 0 || basis.slab >= mesh.n_slabs())
    return fail();
  if (rows < 0 || cols < 0 || nl < 0 || basis.requested < 1) return fail();
  try {
    basis.space = std::make_shared<SlabSpace>(mesh, mesh.cell_slab_region(basis.cell, basis.slab), basis.mode);
  } catch (const std::exception&) {
    return fail();
  }
  if (rows != basis.space->n_dofs()) return fail();
  auto get_doubles = [&](double* p, size_t n) { return std::fread(p, sizeof(double), n, f) == n; };
  if (!get_doubles(&basis.lambda_next, 1)) return fail();
  basis.lambdas.resize(static_cast<size_t>(nl));
  if (nl > 0 && !get_doubles(basis.lambdas.data(), basis.lambdas.size())) return fail();
  basis.functions = DenseMatrix(rows, cols);
  std::vector<double> col(static_cast<size_t>(rows));
  for (int j = 0; j < cols; ++j) {
    if (!get_doubles(col.data(), col.size())) return fail();
    for (int i = 0; i < rows; ++i) basis.functions(i, j) = col[static_cast<size_t>(i)];
  }
  std::fclose(f);
  return basis;
}

}  // namespace stgms
