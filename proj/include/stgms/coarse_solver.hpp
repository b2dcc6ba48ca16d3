#pragma once

// Coarse-scale driver: glues the per-cell offline spans into one slab space,
// projects the fine transport form onto that span, and marches the slab
// systems with the same terminal-trace carry-over as the fine solver.  The
// carried trace stays a fine nodal vector, so no information is lost between
// slabs even when the next slab's span cannot represent it.
//
// Offline functions of different cells never share a dof (CG patches are the
// coarse blocks, DG patches the fine cells), so each global column is a
// scatter of one cell-local column through a dof lift.

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stgms/analysis.hpp"
#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/fine_solver.hpp"
#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"
#include "stgms/snapshot.hpp"
#include "stgms/spectral.hpp"

namespace stgms {

//! Direct sum of per-cell offline spans for one slab.
struct CoarseSpace {
  int slab = -1;
  Mode mode = Mode::cg;
  std::vector<SpectralBasis> bases;  // one per coarse cell, cell-id order
  std::vector<int> offsets;          // cell i owns global columns [offsets[i], offsets[i+1])

  int dim() const { return offsets.empty() ? 0 : offsets.back(); }
  int n_cells() const { return static_cast<int>(bases.size()); }
};

inline CoarseSpace assemble_coarse_space(const SpaceTimeMesh& mesh, std::vector<SpectralBasis> bases) {
  if (static_cast<int>(bases.size()) != mesh.n_coarse_cells())
    throw std::invalid_argument("coarse space: need one basis per coarse cell");
  CoarseSpace cs;
  cs.slab = bases.front().slab;
  cs.mode = bases.front().mode;
  cs.offsets.assign(1, 0);
  for (int i = 0; i < static_cast<int>(bases.size()); ++i) {
    const SpectralBasis& b = bases[static_cast<size_t>(i)];
    if (b.cell != i || b.slab != cs.slab || b.mode != cs.mode)
      throw std::invalid_argument("coarse space: bases must come in cell order from a single slab");
    if (b.n_offline() == 0) throw std::invalid_argument("coarse space: empty basis for cell " + std::to_string(i));
    cs.offsets.push_back(cs.offsets.back() + b.n_offline());
  }
  cs.bases = std::move(bases);
  return cs;
}

//! Snapshot + spectral + selection chain for every cell of one slab.
inline CoarseSpace build_coarse_space(const SpaceTimeMesh& mesh, const VelocityField& vel, Mode mode, int slab,
                                      int n_modes, bool oversample = true, double pod_tol = 1e-8) {
  std::vector<SpectralBasis> bases;
  bases.reserve(static_cast<size_t>(mesh.n_coarse_cells()));
  for (int cell = 0; cell < mesh.n_coarse_cells(); ++cell) {
    SnapshotSpace snap = generate_snapshots(mesh, vel, mode, cell, slab, oversample);
    bases.push_back(build_offline_basis(mesh, vel, snap, n_modes, pod_tol));
  }
  return assemble_coarse_space(mesh, std::move(bases));
}

//! Per-cell tensor Lagrange polynomials of per-axis degree s in (x, y, t),
//! interpolated into the cell's slab space: the comparison baseline with
//! (s+1)^3 functions per cell.
inline CoarseSpace polynomial_baseline_basis(const SpaceTimeMesh& mesh, Mode mode, int slab, int degree) {
  if (degree < 1) throw std::invalid_argument("polynomial baseline: degree must be at least 1");
  if (degree > mesh.config().refine_space || degree > mesh.config().refine_time)
    throw std::invalid_argument("polynomial baseline: degree exceeds the fine resolution of a cell");
  const int s1 = degree + 1;
  auto lagrange = [degree](int node, double u) {
    double v = 1.0;
    for (int b = 0; b <= degree; ++b)
      if (b != node) v *= (u * degree - b) / (node - b);
    return v;
  };
  std::vector<SpectralBasis> bases;
  bases.reserve(static_cast<size_t>(mesh.n_coarse_cells()));
  for (int cell = 0; cell < mesh.n_coarse_cells(); ++cell) {
    SpectralBasis b;
    b.cell = cell;
    b.slab = slab;
    b.mode = mode;
    b.requested = s1 * s1 * s1;
    b.space = std::make_shared<SlabSpace>(mesh, mesh.cell_slab_region(cell, slab), mode);
    const SlabSpace& space = *b.space;
    const Region& reg = space.region();
    const double xc0 = mesh.node_x(space.fine_x0()), wx = mesh.node_x(space.fine_x1() + 1) - xc0;
    const double yc0 = mesh.node_y(space.fine_y0()), wy = mesh.node_y(space.fine_y1() + 1) - yc0;
    const double tc0 = mesh.level_time(reg.level0), wt = mesh.level_time(reg.level1) - tc0;
    b.functions = DenseMatrix(space.n_dofs(), b.requested);
    for (const auto& patch : space.patches())
      for (int ly = 0; ly < patch.nodes_y(); ++ly)
        for (int lx = 0; lx < patch.nodes_x(); ++lx) {
          const int spatial = patch.spatial_offset + ly * patch.nodes_x() + lx;
          const double xi = (mesh.node_x(patch.fx0 + lx) - xc0) / wx;
          const double eta = (mesh.node_y(patch.fy0 + ly) - yc0) / wy;
          for (const auto& seg : space.segments())
            for (int l = seg.level_lo; l <= seg.level_hi; ++l) {
              const int t = seg.tdof_offset + (l - seg.level_lo);
              const double tau = (mesh.level_time(l) - tc0) / wt;
              for (int c = 0; c < s1; ++c)
                for (int bj = 0; bj < s1; ++bj)
                  for (int a = 0; a < s1; ++a)
                    b.functions(space.dof(spatial, t), (c * s1 + bj) * s1 + a) =
                        lagrange(a, xi) * lagrange(bj, eta) * lagrange(c, tau);
            }
        }
    bases.push_back(std::move(b));
  }
  return assemble_coarse_space(mesh, std::move(bases));
}

//! Coefficients per slab plus the reconstruction in the fine slab spaces.
struct CoarseSolution {
  Mode mode = Mode::cg;
  std::vector<std::vector<double>> coefficients;  // per slab, over that slab's coarse columns
  FineSolution expanded;

  int n_slabs() const { return expanded.n_slabs(); }
  std::vector<double> terminal_trace() const { return expanded.terminal_trace(); }
};

class CoarseSolver {
 public:
  CoarseSolver(const SpaceTimeMesh& mesh, const VelocityField& vel, Mode mode)
      : mesh_(&mesh), vel_(&vel), mode_(mode), proto_(mesh, mesh.domain_slab_region(0), mode) {
    a_ = assemble_transport_matrix(mesh, vel, proto_);
  }

  Mode mode() const { return mode_; }

  //! One CoarseSpace per slab, or a single entry shared by every slab (the
  //! static velocity keeps the dof layout identical across slabs).
  CoarseSolution solve(const TransportProblem& problem, const std::vector<CoarseSpace>& spaces) const {
    const int n_slabs = mesh_->n_slabs();
    if (spaces.empty() || (spaces.size() != 1 && static_cast<int>(spaces.size()) != n_slabs))
      throw std::invalid_argument("coarse solve: need one space per slab or one shared space");
    std::vector<int> assign(static_cast<size_t>(n_slabs), 0);
    if (spaces.size() != 1)
      for (int n = 0; n < n_slabs; ++n) {
        if (spaces[static_cast<size_t>(n)].slab != n)
          throw std::invalid_argument("coarse solve: space for slab " +
                                      std::to_string(spaces[static_cast<size_t>(n)].slab) + " supplied at position " +
                                      std::to_string(n));
        assign[static_cast<size_t>(n)] = n;
      }
    return solve(problem, spaces, assign);
  }

  //! Layout-class form: `assign[n]` picks the space for slab n, and each
  //! distinct space is projected once.  A space's own slab id only fixes the
  //! window its maps were built on; the integer dof layout repeats on every
  //! slab, so reuse across slabs is exact.
  CoarseSolution solve(const TransportProblem& problem, const std::vector<CoarseSpace>& spaces,
                       const std::vector<int>& assign) const {
    const int n_slabs = mesh_->n_slabs();
    if (spaces.empty()) throw std::invalid_argument("coarse solve: no spaces");
    if (static_cast<int>(assign.size()) != n_slabs)
      throw std::invalid_argument("coarse solve: assignment must cover every slab");
    std::vector<std::unique_ptr<Projection>> cached(spaces.size());
    CoarseSolution out;
    out.mode = mode_;
    out.expanded.mode = mode_;
    std::vector<double> trace;
    for (int n = 0; n < n_slabs; ++n) {
      const int idx = assign[static_cast<size_t>(n)];
      if (idx < 0 || idx >= static_cast<int>(spaces.size()))
        throw std::invalid_argument("coarse solve: assignment out of range at slab " + std::to_string(n));
      const CoarseSpace& cs = spaces[static_cast<size_t>(idx)];
      if (cs.mode != mode_) throw std::invalid_argument("coarse solve: basis mode differs from the solver mode");
      if (!cached[static_cast<size_t>(idx)])
        cached[static_cast<size_t>(idx)] = std::make_unique<Projection>(project(cs));
      const Projection* proj = cached[static_cast<size_t>(idx)].get();

      auto sp = std::make_unique<SlabSpace>(*mesh_, mesh_->domain_slab_region(n), mode_);
      std::vector<double> rhs =
          assemble_transport_rhs(*mesh_, *vel_, *sp, n == 0 ? problem.initial : nullptr, problem.inflow);
      if (n > 0) add_initial_rhs_from_trace(*sp, trace, rhs);

      std::vector<double> rc(static_cast<size_t>(cs.dim()), 0.0);
      for (int ci = 0; ci < cs.n_cells(); ++ci) {
        const DenseMatrix& fn = cs.bases[static_cast<size_t>(ci)].functions;
        const std::vector<int>& lift = proj->lifts[static_cast<size_t>(ci)];
        for (int a = 0; a < fn.cols; ++a) {
          double acc = 0.0;
          for (int i = 0; i < fn.rows; ++i) acc += fn(i, a) * rhs[static_cast<size_t>(lift[static_cast<size_t>(i)])];
          rc[static_cast<size_t>(cs.offsets[static_cast<size_t>(ci)] + a)] = acc;
        }
      }
      proj->factor.solve_in_place(rc);

      std::vector<double> full(static_cast<size_t>(proto_.n_dofs()), 0.0);
      for (int ci = 0; ci < cs.n_cells(); ++ci) {
        const DenseMatrix& fn = cs.bases[static_cast<size_t>(ci)].functions;
        const std::vector<int>& lift = proj->lifts[static_cast<size_t>(ci)];
        for (int a = 0; a < fn.cols; ++a) {
          const double c = rc[static_cast<size_t>(cs.offsets[static_cast<size_t>(ci)] + a)];
          if (c == 0.0) continue;
          for (int i = 0; i < fn.rows; ++i) full[static_cast<size_t>(lift[static_cast<size_t>(i)])] += c * fn(i, a);
        }
      }
      SlabFunction u(*sp, std::move(full));
      trace = u.terminal_trace();
      out.coefficients.push_back(std::move(rc));
      out.expanded.slabs.push_back(std::move(u));
      out.expanded.spaces.push_back(std::move(sp));
    }
    return out;
  }

 private:
  struct Projection {
    std::vector<std::vector<int>> lifts;  // per cell: cell dof -> domain dof
    DenseFactor factor;                   // LU of the projected slab matrix
  };

  Projection project(const CoarseSpace& cs) const {
    // maps computed against a window of the space's own slab; the integer
    // numbering carries over to every slab
    SlabSpace domain(*mesh_, mesh_->domain_slab_region(cs.slab), mode_);
    std::vector<std::vector<int>> lifts;
    lifts.reserve(cs.bases.size());
    for (const SpectralBasis& b : cs.bases) lifts.push_back(restriction_map(domain, *b.space));

    const int dim = cs.dim();
    DenseMatrix ac(dim, dim);
    std::vector<double> full(static_cast<size_t>(proto_.n_dofs()));
    std::vector<double> w(static_cast<size_t>(proto_.n_dofs()));
    for (int cj = 0; cj < cs.n_cells(); ++cj) {
      const DenseMatrix& fj = cs.bases[static_cast<size_t>(cj)].functions;
      const std::vector<int>& lj = lifts[static_cast<size_t>(cj)];
      for (int a = 0; a < fj.cols; ++a) {
        const int col = cs.offsets[static_cast<size_t>(cj)] + a;
        std::fill(full.begin(), full.end(), 0.0);
        for (int i = 0; i < fj.rows; ++i) full[static_cast<size_t>(lj[static_cast<size_t>(i)])] = fj(i, a);
        a_.apply_to(full, w);
        for (int ci = 0; ci < cs.n_cells(); ++ci) {
          const DenseMatrix& fi = cs.bases[static_cast<size_t>(ci)].functions;
          const std::vector<int>& li = lifts[static_cast<size_t>(ci)];
          for (int b = 0; b < fi.cols; ++b) {
            double acc = 0.0;
            for (int i = 0; i < fi.rows; ++i) acc += fi(i, b) * w[static_cast<size_t>(li[static_cast<size_t>(i)])];
            ac(cs.offsets[static_cast<size_t>(ci)] + b, col) = acc;
          }
        }
      }
    }
    const double scale = ac.max_abs();
    try {
      return Projection{std::move(lifts), DenseFactor(std::move(ac))};
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("coarse solve: singular system at slab " + std::to_string(cs.slab) + ", dim " +
                               std::to_string(dim) + ", largest entry " + std::to_string(scale) +
                               " (condition effectively infinite): " + e.what());
    }
  }

  const SpaceTimeMesh* mesh_;
  const VelocityField* vel_;
  Mode mode_;
  SlabSpace proto_;
  SparseMatrix a_;
};

inline CoarseSolution solve_coarse(const SpaceTimeMesh& mesh, const VelocityField& vel, Mode mode,
                                   const TransportProblem& problem, const std::vector<CoarseSpace>& spaces) {
  return CoarseSolver(mesh, vel, mode).solve(problem, spaces);
}

//! Total boundary-datum count over every cell of a slab: the denominator of
//! the snapshot ratio.
inline int snapshot_dimension(const SpaceTimeMesh& mesh, const VelocityField& vel, int slab, bool oversample) {
  int total = 0;
  for (int cell = 0; cell < mesh.n_coarse_cells(); ++cell) {
    Region region = oversample ? mesh.oversampled_region(cell, slab) : mesh.cell_slab_region(cell, slab);
    total += static_cast<int>(delta_boundary_set(mesh, vel, region).size());
  }
  return total;
}

//! Dimension and snapshot-ratio columns for a family of coarse spaces; the
//! error columns stay zero until a solve fills them.
inline std::vector<TableRow> dimension_report(const std::vector<CoarseSpace>& spaces, int snapshot_dim) {
  if (snapshot_dim <= 0) throw std::invalid_argument("dimension report: snapshot dimension must be positive");
  std::vector<TableRow> rows;
  rows.reserve(spaces.size());
  for (const CoarseSpace& cs : spaces) {
    TableRow r;
    for (const SpectralBasis& b : cs.bases) r.L = std::max(r.L, b.requested);
    r.dim = cs.dim();
    r.snapshot_ratio = static_cast<double>(r.dim) / snapshot_dim;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace stgms
