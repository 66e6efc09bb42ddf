#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "pfinv/errors.hpp"
#include "pfinv/verify.hpp"

#ifndef PFINV_VERSION
#define PFINV_VERSION "unknown"
#endif
#ifndef PFINV_GIT_COMMIT
#define PFINV_GIT_COMMIT "unknown"
#endif

namespace pfinv::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Args {
  std::string config;
  std::string out = "run";
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<int> snapshot_every;
};

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

void write_json(const std::string& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ReconstructionConfig load(const Args& a) {
  if (a.config.empty()) throw ValidationError("--config is required");
  ReconstructionConfig c = load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.snapshot_every) c.pop.snapshot_every = *a.snapshot_every;
  c.validate();
  return c;
}

// Config echo and version stamp, written before any computation.
fs::path prepare_run_dir(const std::string& out, const ReconstructionConfig& c, const std::string& command) {
  const fs::path dir(out);
  fs::create_directories(dir);
  std::ofstream cfg = open_out(join(dir, "config.ini"));
  write_config(cfg, c);
  std::ofstream ver = open_out(join(dir, "version.txt"));
  ver << "pfinv " << PFINV_VERSION << " (" << PFINV_GIT_COMMIT << ")\ncommand " << command << '\n';
  return dir;
}

json cost_json(const CostBreakdown& c) {
  return {{"j_pde", c.j_pde}, {"j_gl_gradient", c.j_gl_gradient}, {"j_gl_well", c.j_gl_well},
          {"total", c.total}, {"tv", c.tv_diag}};
}

Phantom require_phantom(const ReconstructionConfig& c) {
  if (!c.has_phantom) throw ValidationError("config has no [phantom] shapes");
  return Phantom(c.phantom, c.collar);
}

struct Dataset {
  std::shared_ptr<const TriMesh> mesh;
  std::vector<MeasurementSource> sources;
};

json generate_into(const ReconstructionConfig& c, const fs::path& dir) {
  const Phantom phantom = require_phantom(c);
  const TriMesh work = build_square_mesh(c.h_target);
  const TriMesh truth = build_truth_mesh(phantom, work);
  const MeasurementSet set = generate_measurements(phantom, truth, work, c.sources, c.k, c.noise, c.seed);
  save_mesh(join(dir, "mesh.txt"), work);
  for (std::size_t i = 0; i < set.on_work_mesh.size(); ++i) {
    save_measurement_csv(join(dir, "measurement_" + std::to_string(i) + ".csv"), work, set.on_work_mesh[i].y_meas);
  }
  const Raster truth_raster = rasterize(phantom, truth);
  const VtkPointData truth_field{"indicator", truth_raster.nodal.values()};
  save_vtk(join(dir, "truth.vtk"), truth, std::span<const VtkPointData>(&truth_field, 1));
  json sources = json::array();
  for (std::size_t i = 0; i < c.sources.size(); ++i) {
    sources.push_back({{"source", c.sources[i].describe()},
                       {"file", "measurement_" + std::to_string(i) + ".csv"},
                       {"relative_noise", set.realized_noise[i]}});
  }
  json shapes = json::array();
  for (const Shape& s : c.phantom) shapes.push_back(format_shape(s));
  return {{"phantom", shapes},
          {"phantom_area", phantom.area()},
          {"noise_level", set.noise_level},
          {"seed", c.seed},
          {"sources", sources},
          {"warnings", set.warnings},
          {"work_mesh", {{"vertices", work.num_vertices()}, {"triangles", work.num_triangles()}, {"h_max", work.h_max()}}},
          {"truth_mesh",
           {{"vertices", truth.num_vertices()},
            {"triangles", truth.num_triangles()},
            {"rule", "work mesh refined uniformly twice, then one refinement of the triangles cut by the phantom"}}},
          {"transfer", "fine-mesh boundary trace sampled piecewise linearly at the work-mesh boundary vertices"}};
}

Dataset obtain_data(const Args& a, const ReconstructionConfig& c, const fs::path& dir, json& summary) {
  Dataset d;
  if (!a.data.empty()) {
    d.mesh = std::make_shared<const TriMesh>(load_mesh(join(a.data, "mesh.txt")));
    d.sources = load_measurements(a.data, *d.mesh, c.sources);
    summary["data"] = a.data;
    return d;
  }
  summary["generate"] = generate_into(c, dir);
  d.mesh = std::make_shared<const TriMesh>(load_mesh(join(dir, "mesh.txt")));
  d.sources = load_measurements(dir.string(), *d.mesh, c.sources);
  summary["data"] = dir.string();
  return d;
}

void save_pop_trace(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out = open_out(path);
  out << "iter,time,step,j_pde,j_gl_gradient,j_gl_well,total,tv,active_low,active_high\n";
  for (const TraceRow& r : trace) {
    out << r.iter << ',' << r.time << ',' << r.step << ',' << r.cost.j_pde << ',' << r.cost.j_gl_gradient << ','
        << r.cost.j_gl_well << ',' << r.cost.total << ',' << r.cost.tv_diag << ',' << r.active_low << ','
        << r.active_high << '\n';
  }
}

void save_field_vtk(const std::string& path, const TriMesh& mesh, const NodalField& u) {
  const VtkPointData data{"u", u.values()};
  save_vtk(path, mesh, std::span<const VtkPointData>(&data, 1));
}

json pop_metrics(const ReconstructionConfig& c, const PopResult& r, const std::vector<MeasurementSource>& sources) {
  json m;
  m["components"] = count_components(*r.mesh, r.state.u);
  try {
    const InterfaceWidth w = interface_width(*r.mesh, r.state.u);
    m["interface_width"] = w.width;
    m["interface_width_over_epsilon"] = w.width / c.pop.epsilon;
  } catch (const ValidationError& e) {
    m["interface_width"] = nullptr;
    m["interface_width_note"] = e.what();
  }
  if (c.has_phantom) {
    const ReconstructionMetrics e = reconstruction_error(r.state.u, require_phantom(c), *r.mesh,
                                                         sample_measurements(*r.mesh, sources), c.k);
    m["sym_diff_ratio"] = e.sym_diff_ratio;
    m["reconstructed_area"] = e.reconstructed_area;
    m["true_area"] = e.true_area;
    m["boundary_misfit"] = e.boundary_misfit;
  }
  return m;
}

json run_pop_into(const ReconstructionConfig& c, const Dataset& d, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  PopSnapshotHook hook;
  if (c.pop.snapshot_every > 0) {
    fs::create_directories(dir / "snapshots");
    hook = [&](const TriMesh& mesh, const PopState& s) {
      save_field_vtk(join(dir / "snapshots", "u_" + std::to_string(s.iter) + ".vtk"), mesh, s.u);
    };
  }
  const PopResult r = run_pop(c.pop, d.mesh, NodalField(*d.mesh), d.sources, hook);
  save_pop_trace(join(dir, "trace.csv"), r.trace);
  save_mesh(join(dir, "mesh_final.txt"), *r.mesh);
  save_field(join(dir, "u_final.field"), r.state.u.values());
  save_field_vtk(join(dir, "u_final.vtk"), *r.mesh, r.state.u);
  // The cost is re-evaluated on a new mesh after each adaptation, so steps
  // that follow one are not compared across meshes.
  int increases = 0;
  for (std::size_t i = 1; i < r.state.history.size(); ++i) {
    const bool after_adapt = std::find(r.adapt_iterations.begin(), r.adapt_iterations.end(),
                                       static_cast<int>(i) - 1) != r.adapt_iterations.end();
    if (!after_adapt && r.state.history[i].total > r.state.history[i - 1].total) ++increases;
  }
  return {{"method", "pop"},
          {"epsilon", c.pop.epsilon},
          {"alpha", c.pop.alpha},
          {"tau0", c.pop.initial_tau()},
          {"iterations", r.state.iter},
          {"fictitious_time", r.state.t},
          {"rejected_steps", r.rejected_steps},
          {"converged", r.converged},
          {"stop_reason", r.stop_reason},
          {"adapt_iterations", r.adapt_iterations},
          {"energy_increases", increases},
          {"final_cost", cost_json(r.state.history.back())},
          {"final_mesh", {{"vertices", r.mesh->num_vertices()}, {"triangles", r.mesh->num_triangles()}}},
          {"metrics", pop_metrics(c, r, d.sources)},
          {"runtime_seconds", seconds_since(t0)}};
}

int cmd_generate(const Args& a) {
  const ReconstructionConfig c = load(a);
  const fs::path dir = prepare_run_dir(a.out, c, "generate");
  json summary{{"command", "generate"}};
  summary["generate"] = generate_into(c, dir);
  write_json(join(dir, "summary.json"), summary);
  std::cout << "wrote " << c.sources.size() << " measurement files to " << dir.string() << '\n';
  return kSuccess;
}

int cmd_reconstruct_pop(const Args& a) {
  const ReconstructionConfig c = load(a);
  const fs::path dir = prepare_run_dir(a.out, c, "reconstruct-pop");
  json summary{{"command", "reconstruct-pop"}};
  try {
    const Dataset d = obtain_data(a, c, dir, summary);
    summary["result"] = run_pop_into(c, d, dir);
  } catch (const Error& e) {
    summary["error"] = e.what();
    write_json(join(dir, "summary.json"), summary);
    throw;
  }
  write_json(join(dir, "summary.json"), summary);
  const json& res = summary["result"];
  std::cout << "pop: " << res["iterations"] << " iterations, " << res["stop_reason"].get<std::string>();
  if (res["metrics"].contains("sym_diff_ratio")) std::cout << ", sym-diff ratio " << res["metrics"]["sym_diff_ratio"];
  std::cout << '\n';
  return kSuccess;
}

int cmd_reconstruct_shape(const Args& a) {
  const ReconstructionConfig c = load(a);
  const fs::path dir = prepare_run_dir(a.out, c, "reconstruct-shape");
  json summary{{"command", "reconstruct-shape"}};
  try {
    const Dataset d = obtain_data(a, c, dir, summary);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<Point2>> initial;
    for (const Shape& s : c.shape_initial) initial.push_back(shape_boundary(s, c.shape_points));
    const ShapeResult r = run_shape_descent(c.shape, *d.mesh, initial, d.sources);
    save_polylines(join(dir, "polylines.csv"), r.history);
    {
      std::ofstream out = open_out(join(dir, "trace.csv"));
      out << "iter,step,backtracks,j_pde,perimeter,total,slope,remeshed\n";
      for (const ShapeTraceRow& t : r.trace) {
        out << t.iter << ',' << t.step << ',' << t.backtracks << ',' << t.j_pde << ',' << t.perimeter << ','
            << t.total << ',' << t.slope << ',' << (t.remeshed ? 1 : 0) << '\n';
      }
    }
    save_mesh(join(dir, "mesh_final.txt"), *r.mesh);
    std::vector<double> nodal(static_cast<std::size_t>(r.mesh->num_vertices()), 0.0);
    std::vector<int> count(nodal.size(), 0);
    for (int t = 0; t < r.mesh->num_triangles(); ++t) {
      for (int v : r.mesh->triangle(t)) {
        nodal[static_cast<std::size_t>(v)] += r.tags[static_cast<std::size_t>(t)];
        ++count[static_cast<std::size_t>(v)];
      }
    }
    for (std::size_t i = 0; i < nodal.size(); ++i) nodal[i] /= std::max(1, count[i]);
    save_field_vtk(join(dir, "inclusion_final.vtk"), *r.mesh, NodalField(*r.mesh, nodal));
    int increases = 0;
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
      if (!r.trace[i].remeshed && r.trace[i].total > r.trace[i - 1].total) ++increases;
    }
    json res{{"method", "shape"},
             {"alpha", c.shape.gradient.alpha},
             {"iterations", r.trace.back().iter},
             {"converged", r.converged},
             {"stop_reason", r.stop_reason},
             {"loops", r.inclusion.loops.size()},
             {"perimeter", r.inclusion.perimeter()},
             {"final_cost", r.trace.back().total},
             {"final_j_pde", r.trace.back().j_pde},
             {"cost_increases_between_remeshes", increases},
             {"components", count_components_elements(*r.mesh, r.tags)},
             {"runtime_seconds", seconds_since(t0)}};
    if (c.has_phantom) {
      res["sym_diff_ratio"] = reconstruction_error_elements(r.tags, require_phantom(c), *r.mesh).sym_diff_ratio;
    }
    summary["result"] = res;
  } catch (const Error& e) {
    summary["error"] = e.what();
    write_json(join(dir, "summary.json"), summary);
    throw;
  }
  write_json(join(dir, "summary.json"), summary);
  const json& res = summary["result"];
  std::cout << "shape: " << res["iterations"] << " iterations, " << res["stop_reason"].get<std::string>();
  if (res.contains("sym_diff_ratio")) std::cout << ", sym-diff ratio " << res["sym_diff_ratio"];
  std::cout << '\n';
  return kSuccess;
}

int cmd_verify(const Args& a) {
  ReconstructionConfig c;
  if (!a.config.empty()) c = load(a);
  if (a.seed) c.seed = *a.seed;
  const fs::path dir = prepare_run_dir(a.out, c, "verify");
  VerifyOptions vo;
  vo.seed = c.seed;
  vo.corrupt_gradient = c.corrupt_gradient;
  const VerifyReport report = run_verification(vo);
  std::ofstream txt = open_out(join(dir, "verify_report.txt"));
  write_report(txt, report);
  write_report(std::cout, report);
  json checks = json::array();
  for (const VerifyCheck& v : report.checks) {
    checks.push_back({{"name", v.name}, {"passed", v.passed}, {"measured", v.measured}, {"threshold", v.threshold},
                      {"detail", v.detail}});
  }
  write_json(join(dir, "summary.json"), {{"command", "verify"}, {"passed", report.all_passed()}, {"checks", checks}});
  return report.all_passed() ? kSuccess : kVerification;
}

int cmd_sweep(const Args& a) {
  const ReconstructionConfig c = load(a);
  if (c.sweep_epsilon.empty()) throw ValidationError("sweep needs [sweep] epsilon = e1; e2; ...");
  const fs::path dir = prepare_run_dir(a.out, c, "sweep");
  json summary{{"command", "sweep"}};
  const Dataset d = obtain_data(a, c, dir, summary);
  json runs = json::array();
  for (std::size_t i = 0; i < c.sweep_epsilon.size(); ++i) {
    ReconstructionConfig ci = c;
    ci.pop.epsilon = c.sweep_epsilon[i];
    ci.sweep_epsilon.clear();
    const fs::path sub = prepare_run_dir((dir / ("eps_" + std::to_string(i))).string(), ci, "sweep member");
    const json res = run_pop_into(ci, d, sub);
    write_json(join(sub, "summary.json"), {{"command", "sweep member"}, {"result", res}});
    runs.push_back(res);
    std::cout << "epsilon " << ci.pop.epsilon << ": " << res["iterations"] << " iterations, interface width "
              << res["metrics"]["interface_width"] << '\n';
  }
  summary["runs"] = runs;
  write_json(join(dir, "summary.json"), summary);
  return kSuccess;
}

}  // namespace

void save_measurement_csv(const std::string& path, const TriMesh& mesh, const NodalField& y_meas) {
  require_bound(y_meas, mesh, "measurement file");
  std::ofstream out = open_out(path);
  out << "vertex,x,y,value\n";
  for (int v : mesh.boundary_vertices()) {
    out << v << ',' << mesh.vertex(v).x << ',' << mesh.vertex(v).y << ',' << y_meas[static_cast<std::size_t>(v)] << '\n';
  }
}

NodalField load_measurement_csv(const std::string& path, const TriMesh& mesh) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read measurement file " + path);
  std::string line;
  if (!std::getline(in, line) || line != "vertex,x,y,value") throw ValidationError(path + ": bad header");
  NodalField y(mesh);
  std::vector<char> seen(y.size(), 0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    long v = -1;
    double x = 0, yy = 0, value = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> v >> c1 >> x >> c2 >> yy >> c3 >> value) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ValidationError(path + ": malformed row '" + line + "'");
    }
    if (v < 0 || v >= mesh.num_vertices() || !mesh.is_boundary_vertex(static_cast<int>(v))) {
      throw ValidationError(path + ": vertex " + std::to_string(v) + " is not a boundary vertex of the mesh");
    }
    if (distance(mesh.vertex(static_cast<int>(v)), {x, yy}) > 1e-9) {
      throw ValidationError(path + ": coordinates of vertex " + std::to_string(v) + " do not match the mesh");
    }
    y[static_cast<std::size_t>(v)] = value;
    seen[static_cast<std::size_t>(v)] = 1;
  }
  for (int v : mesh.boundary_vertices()) {
    if (!seen[static_cast<std::size_t>(v)]) throw ValidationError(path + ": boundary vertex " + std::to_string(v) + " missing");
  }
  return y;
}

std::vector<MeasurementSource> load_measurements(const std::string& dir, const TriMesh& mesh,
                                                 const std::vector<SourceTerm>& sources) {
  std::vector<MeasurementSource> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const NodalField y = load_measurement_csv(join(dir, "measurement_" + std::to_string(i) + ".csv"), mesh);
    out.push_back({sources[i], BoundaryDatum(mesh, y)});
  }
  return out;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Phase-field and shape-gradient reconstruction of inclusions from boundary data"};
  app.set_version_flag("--version", std::string(PFINV_VERSION));
  app.require_subcommand(1);
  Args args;
  auto common = [&](CLI::App* sub, bool data) {
    sub->add_option("--config", args.config, "INI configuration file");
    sub->add_option("--out", args.out, "run directory")->capture_default_str();
    sub->add_option("--seed", args.seed, "overrides problem.seed");
    sub->add_option("--snapshot-every", args.snapshot_every, "write a field snapshot every N iterations");
    if (data) sub->add_option("--data", args.data, "directory written by generate (default: generate into --out)");
  };
  CLI::App* gen = app.add_subcommand("generate", "synthesize boundary measurements for the phantom");
  CLI::App* pop = app.add_subcommand("reconstruct-pop", "phase-field reconstruction");
  CLI::App* shp = app.add_subcommand("reconstruct-shape", "sharp-interface shape descent");
  CLI::App* ver = app.add_subcommand("verify", "derivative, solver and oracle checks");
  CLI::App* swp = app.add_subcommand("sweep", "phase-field runs over [sweep] epsilon values");
  common(gen, false);
  common(pop, true);
  common(shp, true);
  common(ver, false);
  common(swp, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kValidation;
  }
  try {
    if (gen->parsed()) return cmd_generate(args);
    if (pop->parsed()) return cmd_reconstruct_pop(args);
    if (shp->parsed()) return cmd_reconstruct_shape(args);
    if (ver->parsed()) return cmd_verify(args);
    return cmd_sweep(args);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << '\n';
    return kValidation;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
}

}  // namespace pfinv::cli
