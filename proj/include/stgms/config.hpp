#pragma once

// One declarative JSON file drives a whole experiment: mesh sizes, where the
// velocity comes from, the transport data as expression strings, and which
// coarse spaces to build.  Presets cover the standard experiment shapes at
// desk scale.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stgms/expr.hpp"
#include "stgms/fe_core.hpp"
#include "stgms/field.hpp"
#include "stgms/fine_solver.hpp"
#include "stgms/mesh.hpp"

namespace stgms {

struct VelocityConfig {
  std::string kind = "darcy";  // darcy | uniform | rotation | shear
  // darcy: either a stored permeability file or the seeded generator
  std::string kappa_file;
  std::uint64_t seed = 7;
  double contrast = 1e4;
  PermeabilityLayout layout;
  // uniform
  double vx = 1.0, vy = 0.0;
  // rotation about (cx, cy)
  double omega = 1.0, cx = 0.5, cy = 0.5;
  // horizontal shear a*y + b
  double shear_a = 1.0, shear_b = 0.0;
};

struct RunConfig {
  std::string name = "run";
  MeshConfig mesh;
  VelocityConfig velocity;
  std::string u0 = "sin(2*x+2*y)";
  std::string inflow = "sin(2*x+2*y-4*t)";
  Mode mode = Mode::cg;
  std::vector<int> l_sweep{1, 3, 5, 7, 10};
  std::vector<int> poly_degrees{1, 2};
  bool oversample = true;
  double pod_tol = 1e-8;
  std::string out_dir = "out/run";
  bool cache = true;
  int threads = 1;
};

inline Mode parse_mode(const std::string& s) {
  if (s == "cg") return Mode::cg;
  if (s == "dg") return Mode::dg;
  throw std::invalid_argument("config: mode must be cg or dg, got '" + s + "'");
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["mesh"] = {{"x0", c.mesh.x0},
               {"y0", c.mesh.y0},
               {"x1", c.mesh.x1},
               {"y1", c.mesh.y1},
               {"nx_coarse", c.mesh.nx_coarse},
               {"ny_coarse", c.mesh.ny_coarse},
               {"refine_space", c.mesh.refine_space},
               {"t_final", c.mesh.t_final},
               {"n_slabs", c.mesh.n_slabs},
               {"refine_time", c.mesh.refine_time},
               {"oversample_layers", c.mesh.oversample_layers},
               {"oversample_time", c.mesh.oversample_time}};
  nlohmann::json v;
  v["kind"] = c.velocity.kind;
  if (c.velocity.kind == "darcy") {
    v["kappa_file"] = c.velocity.kappa_file;
    v["seed"] = c.velocity.seed;
    v["contrast"] = c.velocity.contrast;
    nlohmann::json channels = nlohmann::json::array();
    for (const auto& ch : c.velocity.layout.channels) channels.push_back({{"row", ch.row}, {"width", ch.width}});
    v["layout"] = {{"channels", channels},
                   {"random_channels", c.velocity.layout.random_channels},
                   {"random_channel_width", c.velocity.layout.random_channel_width},
                   {"random_inclusions", c.velocity.layout.random_inclusions},
                   {"inclusion_max_size", c.velocity.layout.inclusion_max_size}};
  } else if (c.velocity.kind == "uniform") {
    v["vx"] = c.velocity.vx;
    v["vy"] = c.velocity.vy;
  } else if (c.velocity.kind == "rotation") {
    v["omega"] = c.velocity.omega;
    v["cx"] = c.velocity.cx;
    v["cy"] = c.velocity.cy;
  } else if (c.velocity.kind == "shear") {
    v["a"] = c.velocity.shear_a;
    v["b"] = c.velocity.shear_b;
  }
  j["velocity"] = v;
  j["u0"] = c.u0;
  j["inflow"] = c.inflow;
  j["mode"] = mode_name(c.mode);
  j["l_sweep"] = c.l_sweep;
  j["poly_degrees"] = c.poly_degrees;
  j["oversample"] = c.oversample;
  j["pod_tol"] = c.pod_tol;
  j["out_dir"] = c.out_dir;
  j["cache"] = c.cache;
  j["threads"] = c.threads;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("mesh")) {
      const nlohmann::json& m = j.at("mesh");
      c.mesh.x0 = m.value("x0", c.mesh.x0);
      c.mesh.y0 = m.value("y0", c.mesh.y0);
      c.mesh.x1 = m.value("x1", c.mesh.x1);
      c.mesh.y1 = m.value("y1", c.mesh.y1);
      c.mesh.nx_coarse = m.value("nx_coarse", c.mesh.nx_coarse);
      c.mesh.ny_coarse = m.value("ny_coarse", c.mesh.ny_coarse);
      c.mesh.refine_space = m.value("refine_space", c.mesh.refine_space);
      c.mesh.t_final = m.value("t_final", c.mesh.t_final);
      c.mesh.n_slabs = m.value("n_slabs", c.mesh.n_slabs);
      c.mesh.refine_time = m.value("refine_time", c.mesh.refine_time);
      c.mesh.oversample_layers = m.value("oversample_layers", c.mesh.oversample_layers);
      c.mesh.oversample_time = m.value("oversample_time", c.mesh.oversample_time);
    }
    if (j.contains("velocity")) {
      const nlohmann::json& v = j.at("velocity");
      c.velocity.kind = v.value("kind", c.velocity.kind);
      c.velocity.kappa_file = v.value("kappa_file", c.velocity.kappa_file);
      c.velocity.seed = v.value("seed", c.velocity.seed);
      c.velocity.contrast = v.value("contrast", c.velocity.contrast);
      if (v.contains("layout")) {
        const nlohmann::json& l = v.at("layout");
        c.velocity.layout.channels.clear();
        for (const auto& ch : l.value("channels", nlohmann::json::array()))
          c.velocity.layout.channels.push_back({ch.at("row").get<int>(), ch.at("width").get<int>()});
        c.velocity.layout.random_channels = l.value("random_channels", c.velocity.layout.random_channels);
        c.velocity.layout.random_channel_width =
            l.value("random_channel_width", c.velocity.layout.random_channel_width);
        c.velocity.layout.random_inclusions = l.value("random_inclusions", c.velocity.layout.random_inclusions);
        c.velocity.layout.inclusion_max_size = l.value("inclusion_max_size", c.velocity.layout.inclusion_max_size);
      }
      c.velocity.vx = v.value("vx", c.velocity.vx);
      c.velocity.vy = v.value("vy", c.velocity.vy);
      c.velocity.omega = v.value("omega", c.velocity.omega);
      c.velocity.cx = v.value("cx", c.velocity.cx);
      c.velocity.cy = v.value("cy", c.velocity.cy);
      c.velocity.shear_a = v.value("a", c.velocity.shear_a);
      c.velocity.shear_b = v.value("b", c.velocity.shear_b);
    }
    c.u0 = j.value("u0", c.u0);
    c.inflow = j.value("inflow", c.inflow);
    c.mode = parse_mode(j.value("mode", std::string(mode_name(c.mode))));
    c.l_sweep = j.value("l_sweep", c.l_sweep);
    c.poly_degrees = j.value("poly_degrees", c.poly_degrees);
    c.oversample = j.value("oversample", c.oversample);
    c.pod_tol = j.value("pod_tol", c.pod_tol);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.cache = j.value("cache", c.cache);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

//! Full check of everything a run needs; throws on the first problem.
inline void validate_config(const RunConfig& c) {
  SpaceTimeMesh probe{c.mesh};  // the mesh constructor validates its block
  if (c.velocity.kind != "darcy" && c.velocity.kind != "uniform" && c.velocity.kind != "rotation" &&
      c.velocity.kind != "shear")
    throw std::invalid_argument("config: unknown velocity kind '" + c.velocity.kind + "'");
  parse_expression(c.u0);
  parse_expression(c.inflow);
  if (c.l_sweep.empty()) throw std::invalid_argument("config: l_sweep must not be empty");
  for (int l : c.l_sweep)
    if (l < 1) throw std::invalid_argument("config: l_sweep entries must be >= 1");
  for (int s : c.poly_degrees)
    if (s < 1) throw std::invalid_argument("config: poly_degrees entries must be >= 1");
  if (!(c.pod_tol > 0.0)) throw std::invalid_argument("config: pod_tol must be positive");
  if (c.threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  if (c.out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline void save_run_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot open " + path + " for writing");
  out << run_config_to_json(c).dump(2) << "\n";
  if (!out) throw std::runtime_error("config: short write to " + path);
}

//! Transport data from the expression strings; u0 is sampled at t = 0.
inline TransportProblem make_problem(const RunConfig& c) {
  Expression e0 = parse_expression(c.u0);
  Expression g = parse_expression(c.inflow);
  TransportProblem p;
  p.initial = [e0](double x, double y) { return e0(x, y, 0.0); };
  p.inflow = [g](double x, double y, double t) { return g(x, y, t); };
  return p;
}

//! Velocity per the config: seeded (or stored) Darcy flow, or one of the
//! analytic fields.
inline VelocityField make_velocity(const SpaceTimeMesh& mesh, const VelocityConfig& v) {
  if (v.kind == "uniform") return uniform_velocity(mesh, v.vx, v.vy);
  if (v.kind == "rotation") return rotation_velocity(mesh, v.omega, v.cx, v.cy);
  if (v.kind == "shear") return shear_velocity(mesh, v.shear_a, v.shear_b);
  if (v.kind != "darcy") throw std::invalid_argument("config: unknown velocity kind '" + v.kind + "'");
  PermeabilityField kappa = v.kappa_file.empty()
                                ? generate_permeability(mesh.nx_fine(), mesh.ny_fine(), v.seed, v.contrast, v.layout)
                                : load_permeability(v.kappa_file);
  return solve_darcy(mesh, kappa, left_to_right_boundary_drive(mesh));
}

//! The named experiment shapes.  Mesh sizes keep a full run in the minutes
//! range on one core while the channels stay finer than the coarse grid.
inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.name = name;
  if (name == "example1-desk" || name == "example2-desk") {
    c.mesh.nx_coarse = 5;
    c.mesh.ny_coarse = 5;
    c.mesh.refine_space = 10;  // 50x50 fine
    c.mesh.t_final = 0.08;
    c.mesh.n_slabs = 20;
    c.mesh.refine_time = 5;
    c.velocity.kind = "darcy";
    c.velocity.seed = 7;
    c.velocity.contrast = 1e4;
    c.velocity.layout.channels = {{8, 2}, {24, 1}, {40, 2}};
    c.velocity.layout.random_channels = 2;
    c.velocity.layout.random_channel_width = 1;
    c.velocity.layout.random_inclusions = 30;
    c.velocity.layout.inclusion_max_size = 3;
    c.l_sweep = {1, 3, 5, 7, 10};
    c.poly_degrees = {1, 2};
    if (name == "example2-desk") {
      c.u0 = "1-x*y";
      c.inflow = "1";
    }
  } else if (name == "constant-sanity") {
    c.mesh.nx_coarse = 3;
    c.mesh.ny_coarse = 3;
    c.mesh.refine_space = 4;
    c.mesh.t_final = 0.08;
    c.mesh.n_slabs = 4;
    c.mesh.refine_time = 2;
    c.velocity.kind = "darcy";
    c.velocity.seed = 3;
    c.velocity.contrast = 1e3;
    c.velocity.layout.channels = {{5, 2}};
    c.velocity.layout.random_inclusions = 5;
    c.u0 = "1";
    c.inflow = "1";
    c.l_sweep = {1, 2};
    c.poly_degrees = {1};
  } else {
    throw std::invalid_argument("config: unknown preset '" + name + "'");
  }
  c.out_dir = "out/" + name;
  return c;
}

inline std::vector<std::string> preset_names() { return {"example1-desk", "example2-desk", "constant-sanity"}; }

}  // namespace stgms
