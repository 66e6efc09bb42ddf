#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "pfinv/errors.hpp"

using namespace pfinv;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pfinv_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path.string();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pfinv_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

const char* kSmallConfig = R"([problem]
h = 0.2
sources = x; y
noise = 0.01
seed = 5

[phantom]
shapes = disc(0.1, 0.0, 0.4)

[pop]
alpha = 1e-3
epsilon = 1/(4*pi)
max_iterations = 20

[shape]
max_iterations = 5
initial = disc(0, 0, 0.3)
)";

}  // namespace

TEST_CASE("arithmetic expressions") {
  CHECK(evaluate_expression("1/(8*pi)") == doctest::Approx(1.0 / (8 * M_PI)).epsilon(1e-15));
  CHECK(evaluate_expression(" 2.5e-3 ") == 2.5e-3);
  CHECK(evaluate_expression("-(1+2)*3") == -9.0);
  CHECK(evaluate_expression("0.01/ (1/(8*pi))") == doctest::Approx(0.08 * M_PI));
  CHECK_THROWS_AS(evaluate_expression("1/"), ValidationError);
  CHECK_THROWS_AS(evaluate_expression("2*(3"), ValidationError);
  CHECK_THROWS_AS(evaluate_expression("1/0"), ValidationError);
  CHECK_THROWS_AS(evaluate_expression("e"), ValidationError);
}

TEST_CASE("shape descriptors round trip") {
  const auto shapes = parse_shapes("disc(0.2, 0.1, 0.4); ellipse(0,0,0.5,0.3,pi/6); rectangle(-0.5,-0.5,0.3,0.2);"
                                   " polygon(0,0, 0.5,0, 0.25,0.4)");
  REQUIRE(shapes.size() == 4);
  CHECK(std::get<Ellipse>(shapes[1]).angle == doctest::Approx(M_PI / 6));
  std::string joined;
  for (const Shape& s : shapes) joined += (joined.empty() ? "" : ";") + format_shape(s);
  const auto again = parse_shapes(joined);
  REQUIRE(again.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(describe_shape(again[i]) == describe_shape(shapes[i]));
  CHECK_THROWS_AS(parse_shapes("disc(0, 0)"), ValidationError);
  CHECK_THROWS_AS(parse_shapes("blob(0, 0, 1)"), ValidationError);
  CHECK_THROWS_AS(parse_shapes("polygon(0,0,1,0,1)"), ValidationError);
}

TEST_CASE("config defaults, overrides and validation") {
  std::istringstream empty("");
  const ReconstructionConfig d = parse_config(empty);
  CHECK(d.pop.alpha == 1e-4);
  CHECK(d.pop.epsilon == doctest::Approx(1.0 / (8 * M_PI)));
  CHECK(d.pop.initial_tau() == doctest::Approx(0.01 * 8 * M_PI));
  CHECK(d.sources.size() == 2);
  CHECK_FALSE(d.has_phantom);

  std::istringstream in(kSmallConfig);
  const ReconstructionConfig c = parse_config(in);
  CHECK(c.h_target == 0.2);
  CHECK(c.noise == 0.01);
  CHECK(c.seed == 5);
  CHECK(c.has_phantom);
  CHECK(c.pop.epsilon == doctest::Approx(1.0 / (4 * M_PI)));
  CHECK(c.shape.max_iterations == 5);

  auto bad = [](const std::string& text) {
    std::istringstream s(text);
    CHECK_THROWS_AS(parse_config(s), ValidationError);
  };
  bad("[pop]\nalpha = 0\n");
  bad("[pop]\nepsilon = -1\n");
  bad("[problem]\nk = 1\n");
  bad("[pop]\ntol = 0\n");
  bad("[pop]\ntau = -0.1\n");
  bad("[pop]\nunknown_key = 1\n");
  bad("[pop]\nmax_iterations = 2.5\n");
  bad("[pop]\nadapt = maybe\n");
  bad("[problem]\nsources = x^2\n");
}

TEST_CASE("written config parses back to the same values") {
  std::istringstream in(kSmallConfig);
  ReconstructionConfig c = parse_config(in);
  c.sources.push_back(SourceTerm{-0.5, 2.0, -1.25});
  c.sweep_epsilon = {1 / (4 * M_PI), 1 / (8 * M_PI)};
  c.pop.adapt = true;
  std::stringstream out;
  write_config(out, c);
  const ReconstructionConfig r = parse_config(out);
  CHECK(r.pop.epsilon == c.pop.epsilon);
  CHECK(r.pop.adapt);
  CHECK(r.sweep_epsilon == c.sweep_epsilon);
  REQUIRE(r.sources.size() == 3);
  CHECK(r.sources[2].a == -0.5);
  CHECK(r.sources[2].b == 2.0);
  CHECK(r.sources[2].c == -1.25);
  CHECK(describe_shape(r.phantom[0]) == describe_shape(c.phantom[0]));
}

TEST_CASE("measurement files") {
  const fs::path dir = scratch_dir("meas");
  const TriMesh m = build_square_mesh(0.5);
  const NodalField y = interpolate_nodal(m, [](const Point2& p) { return p.x - 0.3 * p.y; });
  const std::string path = (dir / "m.csv").string();
  cli::save_measurement_csv(path, m, y);
  const NodalField back = cli::load_measurement_csv(path, m);
  for (int v : m.boundary_vertices()) CHECK(back[static_cast<std::size_t>(v)] == y[static_cast<std::size_t>(v)]);
  write_file(dir / "bad.csv", "vertex,x,y,value\n0,-1,-1,oops\n");
  CHECK_THROWS_AS(cli::load_measurement_csv((dir / "bad.csv").string(), m), ValidationError);
  write_file(dir / "short.csv", "vertex,x,y,value\n0,-1,-1,0.5\n");
  CHECK_THROWS_AS(cli::load_measurement_csv((dir / "short.csv").string(), m), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("generate writes one file per source and records the noise") {
  const fs::path dir = scratch_dir("generate");
  const std::string cfg = write_file(dir / "c.ini", kSmallConfig);
  CHECK(run_cli({"generate", "--config", cfg, "--out", (dir / "run").string()}) == cli::kSuccess);
  CHECK(fs::exists(dir / "run" / "measurement_0.csv"));
  CHECK(fs::exists(dir / "run" / "measurement_1.csv"));
  CHECK_FALSE(fs::exists(dir / "run" / "measurement_2.csv"));
  CHECK(fs::exists(dir / "run" / "config.ini"));
  CHECK(fs::exists(dir / "run" / "version.txt"));
  const auto summary = nlohmann::json::parse(slurp(dir / "run" / "summary.json"));
  CHECK(summary["generate"]["noise_level"].get<double>() == 0.01);
  CHECK(summary["generate"]["sources"][0]["relative_noise"].get<double>() == doctest::Approx(0.01));

  const std::string no_phantom = write_file(dir / "np.ini", "[problem]\nh = 0.5\n");
  CHECK(run_cli({"generate", "--config", no_phantom, "--out", (dir / "x").string()}) == cli::kValidation);
  CHECK(run_cli({"generate", "--config", (dir / "missing.ini").string()}) == cli::kValidation);
  CHECK(run_cli({"nonsense"}) == cli::kValidation);
  fs::remove_all(dir);
}

TEST_CASE("reconstruction runs are reproducible") {
  const fs::path dir = scratch_dir("repro");
  const std::string cfg = write_file(dir / "c.ini", kSmallConfig);
  const std::string data = (dir / "data").string();
  REQUIRE(run_cli({"generate", "--config", cfg, "--out", data}) == cli::kSuccess);
  for (const char* name : {"a", "b"}) {
    REQUIRE(run_cli({"reconstruct-pop", "--config", cfg, "--data", data, "--out", (dir / name).string()}) ==
            cli::kSuccess);
  }
  CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
  CHECK(slurp(dir / "a" / "u_final.field") == slurp(dir / "b" / "u_final.field"));
  const auto summary = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary["result"]["iterations"].get<int>() == 20);
  CHECK(summary["result"]["energy_increases"].get<int>() == 0);
  CHECK(summary["result"]["metrics"].contains("sym_diff_ratio"));

  // A different seed changes the noise and hence the data.
  CHECK(run_cli({"generate", "--config", cfg, "--out", (dir / "other").string(), "--seed", "6"}) == cli::kSuccess);
  CHECK(slurp(dir / "other" / "measurement_0.csv") != slurp(dir / "data" / "measurement_0.csv"));
  fs::remove_all(dir);
}

TEST_CASE("shape reconstruction writes polylines") {
  const fs::path dir = scratch_dir("shape");
  const std::string cfg = write_file(dir / "c.ini", kSmallConfig);
  REQUIRE(run_cli({"reconstruct-shape", "--config", cfg, "--out", (dir / "s").string()}) == cli::kSuccess);
  CHECK(fs::exists(dir / "s" / "polylines.csv"));
  CHECK(fs::exists(dir / "s" / "trace.csv"));
  const auto summary = nlohmann::json::parse(slurp(dir / "s" / "summary.json"));
  CHECK(summary["result"]["loops"].get<int>() == 1);
  CHECK(summary["result"]["cost_increases_between_remeshes"].get<int>() == 0);
  fs::remove_all(dir);
}

TEST_CASE("verify reports a corrupted gradient") {
  const fs::path dir = scratch_dir("verify");
  const std::string cfg = write_file(dir / "c.ini", "[verify]\ncorrupt_gradient = true\n");
  CHECK(run_cli({"verify", "--config", cfg, "--out", (dir / "v").string()}) == cli::kVerification);
  const auto summary = nlohmann::json::parse(slurp(dir / "v" / "summary.json"));
  CHECK_FALSE(summary["passed"].get<bool>());
  const auto& taylor = summary["checks"][0];
  CHECK(taylor["name"] == "gradient Taylor slope");
  CHECK_FALSE(taylor["passed"].get<bool>());
  CHECK(taylor["measured"].get<double>() == doctest::Approx(1.0).epsilon(0.1));
  fs::remove_all(dir);
}
