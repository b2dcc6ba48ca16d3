#pragma once

// End-to-end experiment driver: velocity -> fine solve -> snapshots and
// spectra -> coarse solves over the L sweep -> polynomial baselines ->
// tables and a manifest.  The offline stage runs once per (cell, slab
// class): with a static velocity, slabs whose windows have the same shape
// relative to their own start produce bit-identical snapshot families, so
// only the distinct window shapes are computed (the first slabs differ while
// backward-in-time oversampling is still clipped by t = 0).

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stgms/analysis.hpp"
#include "stgms/coarse_solver.hpp"
#include "stgms/config.hpp"
#include "stgms/util.hpp"

namespace stgms {

//! Slab layout classes under backward-in-time oversampling.
struct SlabClasses {
  std::vector<int> rep;      // class -> smallest slab with that window shape
  std::vector<int> of_slab;  // slab -> class

  int n() const { return static_cast<int>(rep.size()); }
};

inline SlabClasses classify_slabs(const SpaceTimeMesh& mesh, bool oversample) {
  SlabClasses sc;
  sc.of_slab.resize(static_cast<size_t>(mesh.n_slabs()));
  std::map<int, int> by_lead;
  for (int n = 0; n < mesh.n_slabs(); ++n) {
    const Region r = oversample ? mesh.oversampled_region(0, n) : mesh.cell_slab_region(0, n);
    const int lead = n * mesh.refine_time() - r.level0;
    auto it = by_lead.find(lead);
    if (it == by_lead.end()) {
      it = by_lead.emplace(lead, sc.n()).first;
      sc.rep.push_back(n);
    }
    sc.of_slab[static_cast<size_t>(n)] = it->second;
  }
  return sc;
}

struct PipelineResult {
  RunConfig config;
  SlabClasses classes;
  std::vector<TableRow> table;
  std::vector<CompareRow> compare;
  std::vector<LambdaRow> lambda;
  std::map<std::string, std::string> files;  // emitted file -> content hash
  std::string out_dir;
};

namespace detail {

inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("manifest: cannot re-open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(hash_string(bytes));
}

//! Nodal dump of a solution's trace at a time level.  In DG mode a node on a
//! patch boundary takes the value of the fine cell at its lower left.
inline void write_trace_field(const std::string& path, const SpaceTimeMesh& mesh, const SlabSpace& space,
                              const std::vector<double>& trace) {
  write_node_field(path, mesh, [&](double x, double y) {
    int ix = static_cast<int>(std::lround((x - mesh.config().x0) / mesh.hx()));
    int iy = static_cast<int>(std::lround((y - mesh.config().y0) / mesh.hy()));
    int cellx = std::min(ix, mesh.nx_fine() - 1);
    int celly = std::min(iy, mesh.ny_fine() - 1);
    return spatial_value_in_cell(space, trace, cellx, celly, static_cast<double>(ix - cellx),
                                 static_cast<double>(iy - celly));
  });
}

//! Initial, midpoint-slab-boundary, and terminal snapshots of a solution.
inline void dump_solution(const std::string& dir, const std::string& tag, const SpaceTimeMesh& mesh,
                          const FineSolution& u, std::vector<std::string>& written) {
  const int rt = mesh.refine_time();
  auto emit = [&](int level, const SlabSpace& space, const std::vector<double>& trace) {
    std::string name = tag + "_t" + std::to_string(level) + ".txt";
    write_trace_field(dir + "/" + name, mesh, space, trace);
    written.push_back(name);
  };
  emit(0, u.space(0), u.slabs.front().level_trace(u.space(0).region().level0, Side::plus));
  const int mid = u.n_slabs() / 2;
  if (mid > 0 && mid < u.n_slabs()) emit(mid * rt, u.space(mid - 1), u.slabs[static_cast<size_t>(mid - 1)].terminal_trace());
  emit(u.n_slabs() * rt, u.space(u.n_slabs() - 1), u.slabs.back().terminal_trace());
}

struct StageClock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace detail

//! Everything the offline stage keeps per (cell, class): one basis per
//! requested mode count, all sharing the cell's kept spectrum.
struct OfflineCell {
  std::vector<SpectralBasis> per_l;  // aligned with the pipeline's L list
};

//! Hash identifying the offline inputs: mesh shape, velocity, mode, and the
//! snapshot/selection knobs.  Cache entries embed it in their file names.
inline std::uint64_t offline_key(const RunConfig& cfg, const VelocityField& vel) {
  const MeshConfig& m = cfg.mesh;
  std::string text = std::to_string(m.nx_coarse) + "," + std::to_string(m.ny_coarse) + "," +
                     std::to_string(m.refine_space) + "," + std::to_string(m.n_slabs) + "," +
                     std::to_string(m.refine_time) + "," + std::to_string(m.oversample_layers) + "," +
                     std::to_string(m.oversample_time) + "," + mode_name(cfg.mode) + "," +
                     (cfg.oversample ? "ovs" : "plain");
  std::uint64_t h = hash_string(text);
  h = hash_combine(h, hash_doubles({m.x0, m.y0, m.x1, m.y1, m.t_final, cfg.pod_tol}));
  return hash_combine(h, hash_doubles(vel.flux));
}

//! Snapshot generation, the spectral solve, and per-L selection for every
//! (cell, slab class), optionally cached on disk and spread over threads.
//! Results are placed by task index, so thread count cannot change them.
inline std::vector<std::vector<OfflineCell>> build_offline_bases(const SpaceTimeMesh& mesh, const VelocityField& vel,
                                                                 const RunConfig& cfg, const SlabClasses& classes,
                                                                 const std::vector<int>& l_list,
                                                                 const std::string& cache_dir) {
  const int n_cells = mesh.n_coarse_cells();
  const int n_tasks = classes.n() * n_cells;
  std::vector<std::vector<OfflineCell>> out(static_cast<size_t>(classes.n()),
                                            std::vector<OfflineCell>(static_cast<size_t>(n_cells)));
  const std::uint64_t key = offline_key(cfg, vel);
  const bool use_cache = cfg.cache && !cache_dir.empty();

  auto cache_path = [&](int cell, int klass, int l) {
    std::uint64_t h = hash_combine(key, (static_cast<std::uint64_t>(cell) << 40) ^
                                            (static_cast<std::uint64_t>(klass) << 20) ^
                                            static_cast<std::uint64_t>(l));
    return cache_dir + "/basis_c" + std::to_string(cell) + "_k" + std::to_string(klass) + "_L" + std::to_string(l) +
           "_" + hex64(h) + ".bin";
  };

  auto run_task = [&](int task) {
    const int klass = task / n_cells;
    const int cell = task % n_cells;
    const int rep = classes.rep[static_cast<size_t>(klass)];
    OfflineCell& slot = out[static_cast<size_t>(klass)][static_cast<size_t>(cell)];
    slot.per_l.resize(l_list.size());

    bool all_cached = use_cache;
    if (use_cache)
      for (size_t i = 0; i < l_list.size(); ++i) {
        auto loaded = load_offline_basis(cache_path(cell, klass, l_list[i]), mesh);
        if (loaded && loaded->cell == cell && loaded->slab == rep && loaded->mode == cfg.mode &&
            loaded->requested == l_list[i]) {
          slot.per_l[i] = std::move(*loaded);
        } else {
          all_cached = false;
          break;
        }
      }
    if (all_cached) return;

    SnapshotSpace snap = generate_snapshots(mesh, vel, cfg.mode, cell, rep, cfg.oversample);
    SpectralForms forms = assemble_spectral_forms(mesh, vel, snap);
    std::vector<double> ones = constant_combination(snap);
    EigenPairs pairs = solve_generalized_eig(forms.a, forms.s, &ones);
    for (size_t i = 0; i < l_list.size(); ++i) {
      slot.per_l[i] = select_offline_basis(mesh, snap, pairs, l_list[i], cfg.pod_tol);
      if (use_cache) save_offline_basis(cache_path(cell, klass, l_list[i]), slot.per_l[i]);
    }
  };

  const int n_workers = std::max(1, std::min(cfg.threads, n_tasks));
  if (n_workers == 1) {
    for (int task = 0; task < n_tasks; ++task) run_task(task);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n_workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int task = next.fetch_add(1); task < n_tasks; task = next.fetch_add(1)) run_task(task);
        } catch (...) {
          errors[static_cast<size_t>(w)] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

//! The full experiment.  Every output lands under config.out_dir; the
//! manifest run.json echoes the config and hashes each emitted file, and is
//! byte-stable across reruns with the same config.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
  validate_config(cfg);
  PipelineResult res;
  res.config = cfg;
  res.out_dir = cfg.out_dir;
  std::vector<std::string> written;

  auto stage = [](const char* name) { std::printf("stage %s\n", name); };
  auto fail = [](const char* name, const std::exception& e) -> std::runtime_error {
    return std::runtime_error(std::string("stage ") + name + ": " + e.what());
  };

  std::filesystem::create_directories(cfg.out_dir);
  const std::string cache_dir = cfg.out_dir + "/cache";
  if (cfg.cache) std::filesystem::create_directories(cache_dir);

  SpaceTimeMesh mesh(cfg.mesh);
  res.classes = classify_slabs(mesh, cfg.oversample);

  // --- velocity ---
  VelocityField vel;
  try {
    stage("velocity");
    if (cfg.velocity.kind == "darcy" && cfg.velocity.kappa_file.empty()) {
      PermeabilityField kappa =
          generate_permeability(mesh.nx_fine(), mesh.ny_fine(), cfg.velocity.seed, cfg.velocity.contrast,
                                cfg.velocity.layout);
      save_permeability(cfg.out_dir + "/kappa.txt", kappa);
      written.push_back("kappa.txt");
      vel = solve_darcy(mesh, kappa, left_to_right_boundary_drive(mesh));
    } else {
      vel = make_velocity(mesh, cfg.velocity);
    }
    save_velocity_cell_centers(cfg.out_dir + "/velocity_cells.txt", mesh, vel);
    written.push_back("velocity_cells.txt");
  } catch (const std::exception& e) {
    throw fail("velocity", e);
  }

  // --- fine reference ---
  TransportProblem problem = make_problem(cfg);
  FineSolution fine;
  try {
    stage("fine");
    fine = solve_fine_transport(mesh, vel, cfg.mode, problem);
    detail::dump_solution(cfg.out_dir, "u_h", mesh, fine, written);
  } catch (const std::exception& e) {
    throw fail("fine", e);
  }

  // --- offline spectra (the L list covers the sweep and the equal-dimension
  // points of the polynomial comparison) ---
  std::vector<int> l_list = cfg.l_sweep;
  for (int s : cfg.poly_degrees) l_list.push_back((s + 1) * (s + 1) * (s + 1));
  std::sort(l_list.begin(), l_list.end());
  l_list.erase(std::unique(l_list.begin(), l_list.end()), l_list.end());

  std::vector<std::vector<OfflineCell>> offline;
  try {
    stage("offline");
    offline = build_offline_bases(mesh, vel, cfg, res.classes, l_list, cfg.cache ? cache_dir : "");
  } catch (const std::exception& e) {
    throw fail("offline", e);
  }

  // the class covering the most slabs is the generic interior shape; its
  // spectra feed the eigenvalue outputs and the snapshot-ratio denominator
  int generic = 0;
  {
    std::vector<int> count(static_cast<size_t>(res.classes.n()), 0);
    for (int k : res.classes.of_slab) ++count[static_cast<size_t>(k)];
    for (int k = 1; k < res.classes.n(); ++k)
      if (count[static_cast<size_t>(k)] > count[static_cast<size_t>(generic)]) generic = k;
  }

  try {
    stage("spectra");
    std::vector<SpectrumRow> rows;
    for (int k = 0; k < res.classes.n(); ++k)
      for (int cell = 0; cell < mesh.n_coarse_cells(); ++cell) {
        const std::vector<double>& lam = offline[static_cast<size_t>(k)][static_cast<size_t>(cell)].per_l[0].lambdas;
        for (int i = 0; i < static_cast<int>(lam.size()); ++i)
          rows.push_back({cell, res.classes.rep[static_cast<size_t>(k)], i, lam[static_cast<size_t>(i)]});
      }
    write_spectrum_csv(cfg.out_dir + "/spectrum.csv", rows);
    written.push_back("spectrum.csv");

    std::vector<std::vector<double>> spectra;
    for (int cell = 0; cell < mesh.n_coarse_cells(); ++cell)
      spectra.push_back(offline[static_cast<size_t>(generic)][static_cast<size_t>(cell)].per_l[0].lambdas);
    res.lambda = lambda_star_curve(spectra, cfg.l_sweep);
    write_lambda_csv(cfg.out_dir + "/lambda_star.csv", res.lambda);
    written.push_back("lambda_star.csv");
  } catch (const std::exception& e) {
    throw fail("spectra", e);
  }

  // --- coarse solves over the L list ---
  std::map<int, TableRow> by_l;
  CoarseSolver solver(mesh, vel, cfg.mode);
  const int snap_dim = snapshot_dimension(mesh, vel, res.classes.rep[static_cast<size_t>(generic)], cfg.oversample);
  try {
    stage("coarse");
    for (size_t il = 0; il < l_list.size(); ++il) {
      std::vector<CoarseSpace> spaces;
      for (int k = 0; k < res.classes.n(); ++k) {
        std::vector<SpectralBasis> bases;
        bases.reserve(static_cast<size_t>(mesh.n_coarse_cells()));
        for (int cell = 0; cell < mesh.n_coarse_cells(); ++cell)
          bases.push_back(offline[static_cast<size_t>(k)][static_cast<size_t>(cell)].per_l[il]);
        spaces.push_back(assemble_coarse_space(mesh, std::move(bases)));
      }
      CoarseSolution sol = solver.solve(problem, spaces, res.classes.of_slab);
      ErrorReport err = compute_errors(mesh, sol.expanded, fine);
      TableRow row;
      row.L = l_list[il];
      row.dim = spaces[static_cast<size_t>(generic)].dim();
      row.snapshot_ratio = static_cast<double>(row.dim) / snap_dim;
      row.e1 = err.e1;
      row.e2 = err.e2;
      by_l[row.L] = row;
      if (l_list[il] == cfg.l_sweep.back()) detail::dump_solution(cfg.out_dir, "u_H", mesh, sol.expanded, written);
    }
    for (int l : cfg.l_sweep) res.table.push_back(by_l.at(l));
    write_table_csv(cfg.out_dir + "/table1.csv", res.table);
    written.push_back("table1.csv");
  } catch (const std::exception& e) {
    throw fail("coarse", e);
  }

  // --- polynomial baselines and the equal-dimension comparison ---
  try {
    stage("baseline");
    for (int s : cfg.poly_degrees) {
      const int l_eq = (s + 1) * (s + 1) * (s + 1);
      CoarseSpace poly = polynomial_baseline_basis(mesh, cfg.mode, 0, s);
      CoarseSolution psol = solver.solve(problem, {poly});
      ErrorReport perr = compute_errors(mesh, psol.expanded, fine);
      const TableRow& ms = by_l.at(l_eq);
      res.compare.push_back({"multiscale", l_eq, ms.dim, ms.e1, ms.e2});
      res.compare.push_back({"poly", s, poly.dim(), perr.e1, perr.e2});
    }
    write_compare_csv(cfg.out_dir + "/compare_poly.csv", res.compare);
    written.push_back("compare_poly.csv");
  } catch (const std::exception& e) {
    throw fail("baseline", e);
  }

  // --- manifest ---
  try {
    stage("report");
    nlohmann::json manifest;
    manifest["config"] = run_config_to_json(cfg);
    manifest["slab_classes"] = {{"count", res.classes.n()},
                                {"representatives", res.classes.rep},
                                {"of_slab", res.classes.of_slab}};
    manifest["snapshot_dim_per_slab"] = snap_dim;
    nlohmann::json files;
    for (const std::string& name : written) {
      std::string h = detail::file_hash(cfg.out_dir + "/" + name);
      files[name] = h;
      res.files[name] = h;
    }
    manifest["files"] = files;
    std::ofstream out(cfg.out_dir + "/run.json");
    if (!out) throw std::runtime_error("cannot open " + cfg.out_dir + "/run.json");
    out << manifest.dump(2) << "\n";
  } catch (const std::exception& e) {
    throw fail("report", e);
  }
  return res;
}

}  // namespace stgms
