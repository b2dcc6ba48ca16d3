#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/mesh.hpp"

using namespace stgms;

namespace {

// 5-point Gauss-Legendre on [0,1], deliberately different from the 2-point
// rule used by the assembly
const double g5x[5] = {0.5 - 0.9061798459386640 / 2, 0.5 - 0.5384693101056831 / 2, 0.5,
                       0.5 + 0.5384693101056831 / 2, 0.5 + 0.9061798459386640 / 2};
const double g5w[5] = {0.2369268850561891 / 2, 0.4786286704993665 / 2, 0.5688888888888889 / 2,
                       0.4786286704993665 / 2, 0.2369268850561891 / 2};

// reference bilinear/linear shapes on the unit cube, node order (0,0),(1,0),(0,1),(1,1)
double shape_n(int i, double x, double y) {
  double nx = (i % 2 == 0) ? 1.0 - x : x;
  double ny = (i / 2 == 0) ? 1.0 - y : y;
  return nx * ny;
}
double shape_dx(int i, double y) {
  double ny = (i / 2 == 0) ? 1.0 - y : y;
  return (i % 2 == 0) ? -ny : ny;
}
double theta(int b, double s) { return b == 0 ? 1.0 - s : s; }

std::vector<std::vector<double>> to_dense(const SparseMatrix& a) {
  std::vector<std::vector<double>> d(a.rows, std::vector<double>(a.cols, 0.0));
  for (int i = 0; i < a.rows; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) d[i][a.col_idx[k]] = a.vals[k];
  return d;
}

MeshConfig one_cell_config() {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 1;
  cfg.refine_space = 1;
  cfg.n_slabs = 1;
  cfg.refine_time = 1;
  cfg.t_final = 0.7;
  return cfg;
}

// the slab form on the one-cell mesh with v = (1,0), integrated by the
// reference rule: volume + outflow face at x=1 + initial face
double one_cell_form_entry(double T, int trial_s, int trial_b, int test_s, int test_a) {
  double vol = 0.0;
  for (int qx = 0; qx < 5; ++qx)
    for (int qy = 0; qy < 5; ++qy)
      for (int qt = 0; qt < 5; ++qt) {
        double x = g5x[qx], y = g5x[qy], s = g5x[qt];
        double w = g5w[qx] * g5w[qy] * g5w[qt];
        double dudt = shape_n(trial_s, x, y) * (trial_b == 0 ? -1.0 : 1.0);  // d theta / d s
        vol += w * (dudt * shape_n(test_s, x, y) * theta(test_a, s) -
                    T * shape_n(trial_s, x, y) * theta(trial_b, s) * shape_dx(test_s, y) * theta(test_a, s));
      }
  double outflow = 0.0;
  for (int qy = 0; qy < 5; ++qy)
    for (int qt = 0; qt < 5; ++qt)
      outflow += g5w[qy] * g5w[qt] * T * shape_n(trial_s, 1.0, g5x[qy]) * theta(trial_b, g5x[qt]) *
                 shape_n(test_s, 1.0, g5x[qy]) * theta(test_a, g5x[qt]);
  double initial = 0.0;
  for (int qx = 0; qx < 5; ++qx)
    for (int qy = 0; qy < 5; ++qy)
      initial += g5w[qx] * g5w[qy] * theta(trial_b, 0.0) * theta(test_a, 0.0) * shape_n(trial_s, g5x[qx], g5x[qy]) *
                 shape_n(test_s, g5x[qx], g5x[qy]);
  return vol + outflow + initial;
}

MeshConfig darcy_config() {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 2;
  cfg.refine_space = 3;
  cfg.n_slabs = 2;
  cfg.refine_time = 2;
  cfg.t_final = 0.1;
  return cfg;
}

VelocityField darcy_velocity(const SpaceTimeMesh& mesh) {
  PermeabilityLayout layout;
  layout.channels.push_back({2, 1});
  layout.random_inclusions = 3;
  PermeabilityField kappa = generate_permeability(mesh.nx_fine(), mesh.ny_fine(), 17, 1e3, layout);
  return solve_darcy(mesh, kappa, left_to_right_boundary_drive(mesh));
}

// independent V-norm-squared evaluation: time faces, lateral jump terms on
// inter-patch and window-boundary edges, interior time jumps -- all through
// point evaluation of the function, none through the assembled matrix
double v_norm_sq_oracle(const SpaceTimeMesh& mesh, const VelocityField& vel, const SlabFunction& u) {
  const SlabSpace& space = *u.space;
  const Region& reg = space.region();
  double faces = 0.0;
  for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
    for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf)
      for (int qx = 0; qx < 5; ++qx)
        for (int qy = 0; qy < 5; ++qy) {
          double w = g5w[qx] * g5w[qy] * mesh.hx() * mesh.hy();
          double a0 = u.value(ixf, iyf, 0, g5x[qx], g5x[qy], 0.0);
          double a1 = u.value(ixf, iyf, reg.n_intervals() - 1, g5x[qx], g5x[qy], 1.0);
          faces += w * (a0 * a0 + a1 * a1);
        }
  double jumps = 0.0;
  for (int l : space.jump_levels())
    for (int iyf = space.fine_y0(); iyf <= space.fine_y1(); ++iyf)
      for (int ixf = space.fine_x0(); ixf <= space.fine_x1(); ++ixf) {
        int kb = l - reg.level0;  // interval starting at l
        for (int qx = 0; qx < 5; ++qx)
          for (int qy = 0; qy < 5; ++qy) {
            double w = g5w[qx] * g5w[qy] * mesh.hx() * mesh.hy();
            double d = u.value(ixf, iyf, kb, g5x[qx], g5x[qy], 0.0) - u.value(ixf, iyf, kb - 1, g5x[qx], g5x[qy], 1.0);
            jumps += w * d * d;
          }
      }
  double lateral = 0.0;
  auto edge_term = [&](int e, bool window_boundary, int cxa, int cya, int cxb, int cyb) {
    if (!window_boundary && space.patch_of_cell(cxa, cya) == space.patch_of_cell(cxb, cyb)) return;
    double t0 = mesh.level_time(reg.level0);
    double vn = std::abs(vel.flux[e]) / mesh.edge_length(e);
    for (int k = 0; k < reg.n_intervals(); ++k)
      for (int qs = 0; qs < 5; ++qs)
        for (int qt = 0; qt < 5; ++qt) {
          double t = t0 + (k + g5x[qt]) * mesh.dt_fine();
          auto j = space_jump(u, e, g5x[qs], t);
          double j2 = j[0] * j[0] + j[1] * j[1];
          lateral += g5w[qs] * g5w[qt] * mesh.edge_length(e) * mesh.dt_fine() * vn * j2;
        }
  };
  for (int ix = space.fine_x0(); ix <= space.fine_x1() + 1; ++ix)
    for (int iy = space.fine_y0(); iy <= space.fine_y1(); ++iy) {
      bool wb = ix == space.fine_x0() || ix == space.fine_x1() + 1;
      edge_term(mesh.vertical_edge_id(ix, iy), wb, ix - 1, iy, ix, iy);
    }
  for (int iy = space.fine_y0(); iy <= space.fine_y1() + 1; ++iy)
    for (int ix = space.fine_x0(); ix <= space.fine_x1(); ++ix) {
      bool wb = iy == space.fine_y0() || iy == space.fine_y1() + 1;
      edge_term(mesh.horizontal_edge_id(ix, iy), wb, ix, iy - 1, ix, iy);
    }
  return 0.5 * (faces + jumps + lateral);
}

}  // namespace

TEST_CASE("slab space dof counts in both modes") {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 1;
  cfg.refine_space = 2;
  cfg.n_slabs = 1;
  cfg.refine_time = 2;
  SpaceTimeMesh mesh(cfg);
  SlabSpace cg(mesh, mesh.domain_slab_region(0), Mode::cg);
  CHECK(cg.n_spatial_dofs() == 9);
  CHECK(cg.n_tdofs() == 3);
  CHECK(cg.n_dofs() == 27);
  CHECK(cg.patches().size() == 1);
  SlabSpace dg(mesh, mesh.domain_slab_region(0), Mode::dg);
  CHECK(dg.n_spatial_dofs() == 16);  // 4 cells x 4 corners
  CHECK(dg.n_tdofs() == 4);          // 2 intervals x 2 ends
  CHECK(dg.n_dofs() == 64);
  CHECK(dg.patches().size() == 4);
}

TEST_CASE("element dofs share nodes within a patch and split across patches") {
  MeshConfig cfg;
  cfg.nx_coarse = 2;
  cfg.ny_coarse = 1;
  cfg.refine_space = 2;
  cfg.n_slabs = 1;
  cfg.refine_time = 1;
  SpaceTimeMesh mesh(cfg);
  SlabSpace cg(mesh, mesh.domain_slab_region(0), Mode::cg);
  int a[8], b[8];
  cg.element_dofs(0, 0, 0, a);
  cg.element_dofs(1, 0, 0, b);  // same coarse block: shares the edge nodes
  CHECK(a[1] == b[0]);
  CHECK(a[5] == b[4]);
  cg.element_dofs(2, 0, 0, b);  // next coarse block: distinct dofs
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) CHECK(a[i] != b[j]);
  SlabSpace dg(mesh, mesh.domain_slab_region(0), Mode::dg);
  dg.element_dofs(0, 0, 0, a);
  dg.element_dofs(1, 0, 0, b);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) CHECK(a[i] != b[j]);
}

TEST_CASE("time dofs split only at jump levels") {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 1;
  cfg.refine_space = 1;
  cfg.n_slabs = 2;
  cfg.refine_time = 2;
  cfg.oversample_time = 2;  // slab 1's window reaches back across the boundary
  SpaceTimeMesh mesh(cfg);
  Region r = mesh.oversampled_region(0, 1);
  REQUIRE(r.jump_levels == std::vector<int>{2});
  SlabSpace space(mesh, r, Mode::cg);
  CHECK(space.n_tdofs() == 6);  // levels 0..4 with level 2 doubled
  CHECK(space.tdof_at(1, Side::plus) == space.tdof_at(1, Side::minus));
  CHECK(space.tdof_at(2, Side::plus) == space.tdof_at(2, Side::minus) + 1);
  CHECK(space.tdof_at(0, Side::plus) == 0);
  CHECK(space.tdof_at(4, Side::minus) == 5);
}

TEST_CASE("band order is a permutation") {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 2;
  cfg.refine_space = 2;
  cfg.n_slabs = 1;
  cfg.refine_time = 2;
  SpaceTimeMesh mesh(cfg);
  for (Mode mode : {Mode::cg, Mode::dg}) {
    SlabSpace space(mesh, mesh.domain_slab_region(0), mode);
    auto perm = space.band_order();
    REQUIRE(static_cast<int>(perm.size()) == space.n_dofs());
    std::vector<char> seen(perm.size(), 0);
    for (int p : perm) {
      REQUIRE(p >= 0);
      REQUIRE(p < space.n_dofs());
      CHECK(!seen[p]);
      seen[p] = 1;
    }
  }
}

TEST_CASE("one-cell slab matrix matches the reference quadrature") {
  SpaceTimeMesh mesh(one_cell_config());
  VelocityField vel = uniform_velocity(mesh, 1.0, 0.0);
  const double T = mesh.dt_fine();
  for (Mode mode : {Mode::cg, Mode::dg}) {
    SlabSpace space(mesh, mesh.domain_slab_region(0), mode);
    REQUIRE(space.n_dofs() == 8);
    auto dense = to_dense(assemble_transport_matrix(mesh, vel, space));
    for (int ts = 0; ts < 4; ++ts)
      for (int ta = 0; ta < 2; ++ta)
        for (int js = 0; js < 4; ++js)
          for (int jb = 0; jb < 2; ++jb) {
            double ref = one_cell_form_entry(T, js, jb, ts, ta);
            INFO("mode " << mode_name(mode) << " test (" << ts << "," << ta << ") trial (" << js << "," << jb << ")");
            CHECK(dense[space.dof(ts, ta)][space.dof(js, jb)] == Catch::Approx(ref).margin(1e-12));
          }
  }
}

TEST_CASE("one-cell right-hand side matches the reference quadrature") {
  SpaceTimeMesh mesh(one_cell_config());
  VelocityField vel = uniform_velocity(mesh, 1.0, 0.0);
  SlabSpace space(mesh, mesh.domain_slab_region(0), Mode::cg);
  const double T = mesh.dt_fine();
  // degree <= 2 per axis keeps every Gauss rule involved exact, so the
  // reference value is quadrature independent
  auto f = [](double x, double y) { return 1.0 + x + 2.0 * y * y; };
  auto g = [](double /*x*/, double y, double t) { return 0.3 + y + 2.0 * y * y - t + 1.5 * t * t; };
  auto rhs = assemble_transport_rhs(mesh, vel, space, f, g);
  for (int ts = 0; ts < 4; ++ts)
    for (int ta = 0; ta < 2; ++ta) {
      double initial = 0.0;
      for (int qx = 0; qx < 5; ++qx)
        for (int qy = 0; qy < 5; ++qy)
          initial +=
              g5w[qx] * g5w[qy] * f(g5x[qx], g5x[qy]) * shape_n(ts, g5x[qx], g5x[qy]) * theta(ta, 0.0);
      double inflow = 0.0;  // x = 0 face, v.n = -1
      for (int qy = 0; qy < 5; ++qy)
        for (int qt = 0; qt < 5; ++qt)
          inflow += g5w[qy] * g5w[qt] * T * g(0.0, g5x[qy], T * g5x[qt]) * shape_n(ts, 0.0, g5x[qy]) *
                    theta(ta, g5x[qt]);
      CHECK(rhs[space.dof(ts, ta)] == Catch::Approx(initial + inflow).margin(1e-13));
    }
}

TEST_CASE("constants annihilate the residual with matching data") {
  SpaceTimeMesh mesh(darcy_config());
  VelocityField vel = darcy_velocity(mesh);
  const double c = 2.5;
  for (Mode mode : {Mode::cg, Mode::dg}) {
    SlabSpace space(mesh, mesh.domain_slab_region(1), mode);
    SparseMatrix a = assemble_transport_matrix(mesh, vel, space);
    auto rhs = assemble_transport_rhs(
        mesh, vel, space, [&](double, double) { return c; }, [&](double, double, double) { return c; });
    std::vector<double> u(static_cast<size_t>(space.n_dofs()), c);
    auto au = a.apply(u);
    double scale = a.max_abs() * c;
    for (int i = 0; i < space.n_dofs(); ++i) CHECK(std::abs(au[i] - rhs[i]) <= 1e-12 * scale);
  }
}

TEST_CASE("a plane wave in the fine space annihilates the residual") {
  // u = x - t solves the transport equation for v = (1,0) and lies in the
  // tensor space, so the assembled residual must vanish entirely
  MeshConfig cfg = darcy_config();
  SpaceTimeMesh mesh(cfg);
  VelocityField vel = uniform_velocity(mesh, 1.0, 0.0);
  for (Mode mode : {Mode::cg, Mode::dg}) {
    SlabSpace space(mesh, mesh.domain_slab_region(0), mode);
    SparseMatrix a = assemble_transport_matrix(mesh, vel, space);
    auto rhs = assemble_transport_rhs(
        mesh, vel, space, [](double x, double) { return x; },
        [](double x, double, double t) { return x - t; });
    // interpolate x - t onto the dofs
    std::vector<double> u(static_cast<size_t>(space.n_dofs()));
    for (size_t p = 0; p < space.patches().size(); ++p) {
      const auto& pa = space.patches()[p];
      for (int ly = 0; ly < pa.nodes_y(); ++ly)
        for (int lx = 0; lx < pa.nodes_x(); ++lx) {
          int spatial = pa.spatial_offset + ly * pa.nodes_x() + lx;
          double x = mesh.node_x(pa.fx0 + lx);
          for (const auto& seg : space.segments())
            for (int l = seg.level_lo; l <= seg.level_hi; ++l)
              u[space.dof(spatial, seg.tdof_offset + (l - seg.level_lo))] = x - mesh.level_time(l);
        }
    }
    auto au = a.apply(u);
    double scale = a.max_abs();
    for (int i = 0; i < space.n_dofs(); ++i) {
      INFO("mode " << mode_name(mode) << " dof " << i);
      CHECK(std::abs(au[i] - rhs[i]) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("slab form equals the energy norm on random functions") {
  SpaceTimeMesh mesh(darcy_config());
  VelocityField vel = darcy_velocity(mesh);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (Mode mode : {Mode::cg, Mode::dg}) {
    SlabSpace space(mesh, mesh.domain_slab_region(0), mode);
    SparseMatrix a = assemble_transport_matrix(mesh, vel, space);
    for (int trial = 0; trial < 10; ++trial) {
      SlabFunction u(space);
      for (auto& c : u.coeffs) c = unif(rng);
      double auu = dot(u.coeffs, a.apply(u.coeffs));
      double vn2 = v_norm_sq_oracle(mesh, vel, u);
      INFO("mode " << mode_name(mode) << " trial " << trial);
      CHECK(std::abs(auu - vn2) <= 1e-10 * std::max(1.0, vn2));
    }
  }
}

TEST_CASE("energy identity also holds on an oversampled window") {
  MeshConfig cfg = darcy_config();
  cfg.oversample_layers = 1;
  cfg.oversample_time = 1;
  SpaceTimeMesh mesh(cfg);
  VelocityField vel = darcy_velocity(mesh);
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Region r = mesh.oversampled_region(mesh.coarse_cell_id(0, 1), 1);
  REQUIRE(!r.jump_levels.empty());
  for (Mode mode : {Mode::cg, Mode::dg}) {
    SlabSpace space(mesh, r, mode);
    SparseMatrix a = assemble_transport_matrix(mesh, vel, space);
    for (int trial = 0; trial < 5; ++trial) {
      SlabFunction u(space);
      for (auto& c : u.coeffs) c = unif(rng);
      double auu = dot(u.coeffs, a.apply(u.coeffs));
      double vn2 = v_norm_sq_oracle(mesh, vel, u);
      CHECK(std::abs(auu - vn2) <= 1e-10 * std::max(1.0, vn2));
    }
  }
}

TEST_CASE("spatial jump operator on continuous and discontinuous functions") {
  MeshConfig cfg;
  cfg.nx_coarse = 2;
  cfg.ny_coarse = 1;
  cfg.refine_space = 2;
  cfg.n_slabs = 1;
  cfg.refine_time = 1;
  SpaceTimeMesh mesh(cfg);
  SlabSpace space(mesh, mesh.domain_slab_region(0), Mode::cg);
  SlabFunction w(space);
  // 1 on the left coarse block, 0 on the right
  const auto& left = space.patches()[0];
  for (int s = left.spatial_offset; s < left.spatial_offset + left.n_nodes(); ++s)
    for (int t = 0; t < space.n_tdofs(); ++t) w.coeffs[space.dof(s, t)] = 1.0;
  double tmid = 0.5 * mesh.config().t_final;
  // interior fine edge inside the left block: continuous, zero jump
  auto j0 = space_jump(w, mesh.vertical_edge_id(1, 0), 0.3, tmid);
  CHECK(j0[0] == 0.0);
  CHECK(j0[1] == 0.0);
  // the coarse interface at ix=2 carries a unit jump along +x
  auto j1 = space_jump(w, mesh.vertical_edge_id(2, 1), 0.7, tmid);
  CHECK(j1[0] == Catch::Approx(1.0));
  CHECK(j1[1] == 0.0);
  // domain boundary: interior value times outward normal
  auto jl = space_jump(w, mesh.vertical_edge_id(0, 0), 0.5, tmid);
  CHECK(jl[0] == Catch::Approx(-1.0));
  auto jr = space_jump(w, mesh.vertical_edge_id(mesh.nx_fine(), 0), 0.5, tmid);
  CHECK(jr[0] == Catch::Approx(0.0));
  auto jt = space_jump(w, mesh.horizontal_edge_id(0, mesh.ny_fine()), 0.5, tmid);
  CHECK(jt[1] == Catch::Approx(1.0));
}

TEST_CASE("spatial jump matches direct two-sided evaluation on random data") {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 2;
  cfg.refine_space = 1;
  cfg.n_slabs = 1;
  cfg.refine_time = 2;
  SpaceTimeMesh mesh(cfg);
  SlabSpace space(mesh, mesh.domain_slab_region(0), Mode::dg);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  SlabFunction w(space);
  for (auto& c : w.coeffs) c = unif(rng);
  for (int iy = 0; iy < 2; ++iy) {
    int e = mesh.vertical_edge_id(1, iy);
    for (double s : {0.2, 0.8})
      for (double th : {0.3, 0.9}) {
        int k = th < 0.5 ? 0 : 1;
        double tl = th < 0.5 ? th * 2 : (th - 0.5) * 2;
        double t = mesh.config().t_final * th;
        auto j = space_jump(w, e, s, t);
        double wl = w.value(0, iy, k, 1.0, s, tl);
        double wr = w.value(1, iy, k, 0.0, s, tl);
        CHECK(j[0] == Catch::Approx(wl - wr).margin(1e-13));
        CHECK(j[1] == 0.0);
      }
  }
}

TEST_CASE("time jump operators") {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 1;
  cfg.refine_space = 1;
  cfg.n_slabs = 1;
  cfg.refine_time = 2;
  SpaceTimeMesh mesh(cfg);
  SlabSpace space(mesh, mesh.domain_slab_region(0), Mode::dg);
  SlabFunction w(space);
  // piecewise constant in time: 2 on the first fine interval, 5 on the second
  for (int s = 0; s < space.n_spatial_dofs(); ++s) {
    w.coeffs[space.dof(s, 0)] = w.coeffs[space.dof(s, 1)] = 2.0;
    w.coeffs[space.dof(s, 2)] = w.coeffs[space.dof(s, 3)] = 5.0;
  }
  CHECK(time_jump(w, 1, 0.25, 0.75) == Catch::Approx(3.0));
  // first-level branch: no previous slab, the jump is the value itself
  CHECK(time_jump(nullptr, w, 0.5, 0.5) == Catch::Approx(2.0));
  CHECK(time_jump(&w, w, 0.5, 0.5) == Catch::Approx(2.0 - 5.0));
}

TEST_CASE("upwind cell classification follows the velocity sign") {
  MeshConfig cfg;
  cfg.nx_coarse = cfg.ny_coarse = 1;
  cfg.refine_space = 3;
  cfg.n_slabs = 1;
  cfg.refine_time = 1;
  SpaceTimeMesh mesh(cfg);
  VelocityField fwd = uniform_velocity(mesh, 1.0, 0.5);
  VelocityField bwd = fwd;
  for (auto& f : bwd.flux) f = -f;
  for (int e = 0; e < mesh.n_edges(); ++e) {
    auto [up_f, down_f] = upwind_cells(mesh, fwd, e);
    auto [up_b, down_b] = upwind_cells(mesh, bwd, e);
    CHECK(up_f == down_b);
    CHECK(down_f == up_b);
  }
  // explicit orientation: flow along +x makes the left cell upwind
  auto [up, down] = upwind_cells(mesh, fwd, mesh.vertical_edge_id(1, 0));
  CHECK(up == mesh.fine_cell_id(0, 0));
  CHECK(down == mesh.fine_cell_id(1, 0));
  // domain boundary: the outside is -1
  auto [bu, bd] = upwind_cells(mesh, fwd, mesh.vertical_edge_id(0, 1));
  CHECK(bu == -1);
  CHECK(bd == mesh.fine_cell_id(0, 1));
}

TEST_CASE("carry-over initial term equals the quadrature path on nodal data") {
  SpaceTimeMesh mesh(darcy_config());
  VelocityField vel = darcy_velocity(mesh);
  SlabSpace space(mesh, mesh.domain_slab_region(0), Mode::cg);
  // bilinear-per-cell data representable in the spatial trace space
  auto f = [&](double x, double y) { return 1.0 + 2.0 * x - 0.5 * y; };
  std::vector<double> trace(static_cast<size_t>(space.n_spatial_dofs()));
  for (size_t p = 0; p < space.patches().size(); ++p) {
    const auto& pa = space.patches()[p];
    for (int ly = 0; ly < pa.nodes_y(); ++ly)
      for (int lx = 0; lx < pa.nodes_x(); ++lx)
        trace[pa.spatial_offset + ly * pa.nodes_x() + lx] = f(mesh.node_x(pa.fx0 + lx), mesh.node_y(pa.fy0 + ly));
  }
  auto via_quadrature = assemble_transport_rhs(mesh, vel, space, f, nullptr);
  std::vector<double> via_trace(static_cast<size_t>(space.n_dofs()), 0.0);
  add_initial_rhs_from_trace(space, trace, via_trace);
  for (int i = 0; i < space.n_dofs(); ++i) CHECK(via_trace[i] == Catch::Approx(via_quadrature[i]).margin(1e-14));
}
