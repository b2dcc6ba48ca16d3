#pragma once

// Fine-scale reference solver: marches the slab problems over the whole
// domain, carrying each slab's terminal trace into the next slab's initial
// functional.  With a static velocity and uniform slabs every slab matrix is
// identical, so the band factorization is computed once and reused.

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/linalg.hpp"
#include "stgms/mesh.hpp"

namespace stgms {

struct TransportProblem {
  std::function<double(double, double)> initial;         // u0 over the domain
  std::function<double(double, double, double)> inflow;  // g on the inflow boundary, absolute time
};

//! Per-slab solutions plus the spaces they live on.
struct FineSolution {
  Mode mode = Mode::cg;
  std::vector<std::unique_ptr<SlabSpace>> spaces;
  std::vector<SlabFunction> slabs;

  const SlabSpace& space(int n) const { return *spaces[static_cast<size_t>(n)]; }
  int n_slabs() const { return static_cast<int>(slabs.size()); }

  //! Point evaluation, clamped into the discretized domain.  Points on
  //! interior cell or slab boundaries resolve to the later-in-index side.
  double value(double x, double y, double t) const {
    const SpaceTimeMesh& mesh = spaces.front()->mesh();
    const MeshConfig& cfg = mesh.config();
    auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
    x = std::clamp(x, cfg.x0, cfg.x1);
    y = std::clamp(y, cfg.y0, cfg.y1);
    t = std::clamp(t, 0.0, cfg.t_final);
    int ixf = clampi(static_cast<int>((x - cfg.x0) / mesh.hx()), 0, mesh.nx_fine() - 1);
    int iyf = clampi(static_cast<int>((y - cfg.y0) / mesh.hy()), 0, mesh.ny_fine() - 1);
    int n = clampi(static_cast<int>(t / mesh.dt_coarse()), 0, mesh.n_slabs() - 1);
    int k = clampi(static_cast<int>((t - mesh.level_time(mesh.slab_start_level(n))) / mesh.dt_fine()), 0,
                   mesh.refine_time() - 1);
    double xh = (x - mesh.node_x(ixf)) / mesh.hx();
    double yh = (y - mesh.node_y(iyf)) / mesh.hy();
    double th = (t - mesh.level_time(mesh.slab_start_level(n) + k)) / mesh.dt_fine();
    return slabs[static_cast<size_t>(n)].value(ixf, iyf, k, xh, yh, th);
  }

  std::vector<double> terminal_trace() const { return slabs.back().terminal_trace(); }
};

class FineSolver {
 public:
  FineSolver(const SpaceTimeMesh& mesh, const VelocityField& vel, Mode mode)
      : mesh_(&mesh), vel_(&vel), mode_(mode), proto_(mesh, mesh.domain_slab_region(0), mode) {
    SparseMatrix a = assemble_transport_matrix(mesh, vel, proto_);
    factor_ = PermutedBandFactor(a, proto_.band_order());
  }

  Mode mode() const { return mode_; }
  const SlabSpace& prototype_space() const { return proto_; }

  //! Solve one slab.  start_trace carries the previous terminal trace; pass
  //! null on the first slab to use problem.initial instead.
  SlabFunction solve_slab(const SlabSpace& space, const std::vector<double>* start_trace,
                          const TransportProblem& problem) const {
    std::vector<double> rhs =
        assemble_transport_rhs(*mesh_, *vel_, space, start_trace ? nullptr : problem.initial, problem.inflow);
    if (start_trace) add_initial_rhs_from_trace(space, *start_trace, rhs);
    return SlabFunction(space, factor_.solve(rhs));
  }

  FineSolution solve(const TransportProblem& problem) const {
    FineSolution out;
    out.mode = mode_;
    std::vector<double> trace;
    for (int n = 0; n < mesh_->n_slabs(); ++n) {
      auto sp = std::make_unique<SlabSpace>(*mesh_, mesh_->domain_slab_region(n), mode_);
      SlabFunction u = solve_slab(*sp, n == 0 ? nullptr : &trace, problem);
      trace = u.terminal_trace();
      out.slabs.push_back(std::move(u));
      out.spaces.push_back(std::move(sp));
    }
    return out;
  }

 private:
  const SpaceTimeMesh* mesh_;
  const VelocityField* vel_;
  Mode mode_;
  SlabSpace proto_;
  PermutedBandFactor factor_;
};

inline FineSolution solve_fine_transport(const SpaceTimeMesh& mesh, const VelocityField& vel, Mode mode,
                                         const TransportProblem& problem) {
  return FineSolver(mesh, vel, mode).solve(problem);
}

}  // namespace stgms
