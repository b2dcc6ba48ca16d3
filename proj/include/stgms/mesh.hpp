#pragma once

// Structured space-time mesh: a coarse rectangular grid, each coarse cell
// refined into a uniform fine subgrid, and a time axis split into coarse
// slabs that are refined into fine steps.  All numbering is lexicographic by
// (y, x) in space and by level in time, so ids are reproducible across runs.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace stgms {

struct MeshConfig {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  int nx_coarse = 10;
  int ny_coarse = 10;
  int refine_space = 10;   // fine cells per coarse cell per direction
  double t_final = 0.08;
  int n_slabs = 80;
  int refine_time = 5;     // fine steps per slab
  int oversample_layers = 1;  // coarse layers added around a cell's region
  int oversample_time = 1;    // fine steps prepended to a slab's window
};

//! A space-time subdomain: a rectangle of coarse cells and a window of fine
//! time levels.  jump_levels are the coarse slab boundaries strictly inside
//! the window, where functions carry a discontinuity.
struct Region {
  int cx0 = 0, cx1 = 0, cy0 = 0, cy1 = 0;  // inclusive coarse ranges
  int level0 = 0, level1 = 0;              // inclusive global fine time levels
  std::vector<int> jump_levels;
  int target_cell = -1;
  int slab = -1;

  int n_blocks_x() const { return cx1 - cx0 + 1; }
  int n_blocks_y() const { return cy1 - cy0 + 1; }
  int n_intervals() const { return level1 - level0; }
};

class SpaceTimeMesh {
 public:
  explicit SpaceTimeMesh(const MeshConfig& cfg) : cfg_(cfg) {
    if (cfg.x1 <= cfg.x0 || cfg.y1 <= cfg.y0) throw std::invalid_argument("mesh: empty spatial domain");
    if (cfg.nx_coarse < 1 || cfg.ny_coarse < 1) throw std::invalid_argument("mesh: coarse cell counts must be >= 1");
    if (cfg.refine_space < 1) throw std::invalid_argument("mesh: refine_space must be >= 1");
    if (cfg.t_final <= 0.0) throw std::invalid_argument("mesh: t_final must be positive");
    if (cfg.n_slabs < 1 || cfg.refine_time < 1) throw std::invalid_argument("mesh: slab counts must be >= 1");
    if (cfg.oversample_layers < 0 || cfg.oversample_time < 0)
      throw std::invalid_argument("mesh: oversampling parameters must be >= 0");
    nxf_ = cfg.nx_coarse * cfg.refine_space;
    nyf_ = cfg.ny_coarse * cfg.refine_space;
    hx_ = (cfg.x1 - cfg.x0) / nxf_;
    hy_ = (cfg.y1 - cfg.y0) / nyf_;
    dt_coarse_ = cfg.t_final / cfg.n_slabs;
    dt_fine_ = dt_coarse_ / cfg.refine_time;
  }

  const MeshConfig& config() const { return cfg_; }

  // --- fine spatial grid ---
  int nx_fine() const { return nxf_; }
  int ny_fine() const { return nyf_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  int n_fine_cells() const { return nxf_ * nyf_; }
  int n_fine_nodes() const { return (nxf_ + 1) * (nyf_ + 1); }

  int fine_cell_id(int ix, int iy) const { return iy * nxf_ + ix; }
  int fine_node_id(int ix, int iy) const { return iy * (nxf_ + 1) + ix; }
  double node_x(int ix) const { return cfg_.x0 + ix * hx_; }
  double node_y(int iy) const { return cfg_.y0 + iy * hy_; }

  // --- fine edges: vertical edges carry the +x normal, horizontal the +y ---
  int n_vertical_edges() const { return (nxf_ + 1) * nyf_; }
  int n_horizontal_edges() const { return nxf_ * (nyf_ + 1); }
  int n_edges() const { return n_vertical_edges() + n_horizontal_edges(); }

  int vertical_edge_id(int ix, int iy) const { return iy * (nxf_ + 1) + ix; }  // ix in [0, nxf]
  int horizontal_edge_id(int ix, int iy) const { return n_vertical_edges() + iy * nxf_ + ix; }  // iy in [0, nyf]
  bool edge_is_vertical(int e) const { return e < n_vertical_edges(); }
  double edge_length(int e) const { return edge_is_vertical(e) ? hy_ : hx_; }

  //! Grid position of an edge: for vertical edges (ix, iy) = (line, row of
  //! cells), for horizontal edges (column of cells, line).
  void edge_position(int e, int& ix, int& iy) const {
    if (edge_is_vertical(e)) {
      iy = e / (nxf_ + 1);
      ix = e % (nxf_ + 1);
    } else {
      int h = e - n_vertical_edges();
      iy = h / nxf_;
      ix = h % nxf_;
    }
  }

  bool edge_on_domain_boundary(int e) const {
    int ix, iy;
    edge_position(e, ix, iy);
    return edge_is_vertical(e) ? (ix == 0 || ix == nxf_) : (iy == 0 || iy == nyf_);
  }

  // --- coarse grid ---
  int nx_coarse() const { return cfg_.nx_coarse; }
  int ny_coarse() const { return cfg_.ny_coarse; }
  int n_coarse_cells() const { return cfg_.nx_coarse * cfg_.ny_coarse; }
  int coarse_cell_id(int cx, int cy) const { return cy * cfg_.nx_coarse + cx; }
  int coarse_cx(int cell) const { return cell % cfg_.nx_coarse; }
  int coarse_cy(int cell) const { return cell / cfg_.nx_coarse; }
  int coarse_of_fine_x(int ixf) const { return ixf / cfg_.refine_space; }
  int coarse_of_fine_y(int iyf) const { return iyf / cfg_.refine_space; }

  // --- time axis ---
  int n_slabs() const { return cfg_.n_slabs; }
  int refine_time() const { return cfg_.refine_time; }
  int n_levels() const { return cfg_.n_slabs * cfg_.refine_time; }  // index of the final level
  double dt_coarse() const { return dt_coarse_; }
  double dt_fine() const { return dt_fine_; }
  double level_time(int level) const { return level * dt_fine_; }
  int slab_start_level(int n) const { return n * cfg_.refine_time; }
  int slab_end_level(int n) const { return (n + 1) * cfg_.refine_time; }

  //! The space-time window a coarse cell's local problems are posed on:
  //! oversample_layers coarse layers around the cell (clipped at the domain
  //! boundary) and oversample_time fine steps before the slab (clipped at 0).
  Region oversampled_region(int cell, int slab) const {
    check_cell_slab(cell, slab);
    Region r;
    r.target_cell = cell;
    r.slab = slab;
    int cx = coarse_cx(cell), cy = coarse_cy(cell);
    int L = cfg_.oversample_layers;
    r.cx0 = std::max(0, cx - L);
    r.cx1 = std::min(cfg_.nx_coarse - 1, cx + L);
    r.cy0 = std::max(0, cy - L);
    r.cy1 = std::min(cfg_.ny_coarse - 1, cy + L);
    r.level1 = slab_end_level(slab);
    r.level0 = std::max(0, slab_start_level(slab) - cfg_.oversample_time);
    for (int m = r.level0 + 1; m < r.level1; ++m)
      if (m % cfg_.refine_time == 0) r.jump_levels.push_back(m);
    return r;
  }

  //! The cell's own slab window (no oversampling): target of restrictions.
  Region cell_slab_region(int cell, int slab) const {
    check_cell_slab(cell, slab);
    Region r;
    r.target_cell = cell;
    r.slab = slab;
    r.cx0 = r.cx1 = coarse_cx(cell);
    r.cy0 = r.cy1 = coarse_cy(cell);
    r.level0 = slab_start_level(slab);
    r.level1 = slab_end_level(slab);
    return r;
  }

  //! Whole-domain slab window, the fine solver's arena.
  Region domain_slab_region(int slab) const {
    if (slab < 0 || slab >= cfg_.n_slabs) throw std::invalid_argument("mesh: slab index out of range");
    Region r;
    r.slab = slab;
    r.cx0 = 0;
    r.cx1 = cfg_.nx_coarse - 1;
    r.cy0 = 0;
    r.cy1 = cfg_.ny_coarse - 1;
    r.level0 = slab_start_level(slab);
    r.level1 = slab_end_level(slab);
    return r;
  }

 private:
  void check_cell_slab(int cell, int slab) const {
    if (cell < 0 || cell >= n_coarse_cells()) throw std::invalid_argument("mesh: coarse cell index out of range");
    if (slab < 0 || slab >= cfg_.n_slabs) throw std::invalid_argument("mesh: slab index out of range");
  }

  MeshConfig cfg_;
  int nxf_ = 0, nyf_ = 0;
  double hx_ = 0.0, hy_ = 0.0, dt_coarse_ = 0.0, dt_fine_ = 0.0;
};

}  // namespace stgms
