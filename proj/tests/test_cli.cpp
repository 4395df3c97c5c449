#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "jetflow/image.hpp"
#include "jetflow/state.hpp"
#include "jetflow/textio.hpp"

using namespace jetflow;
namespace fs = std::filesystem;

namespace {

const std::string kCli = JETFLOW_CLI_PATH;
const std::string kGolden = JETFLOW_GOLDEN_DIR;

struct RunOutput {
  int exit_code;
  std::string stdout_text;
  std::string stderr_text;
};

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("jetflow_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunOutput run_cli(const std::string& args, const fs::path& dir) {
  const std::string out_file = (dir / "_stdout.txt").string();
  const std::string err_file = (dir / "_stderr.txt").string();
  const std::string cmd = kCli + " " + args + " > " + out_file + " 2> " + err_file;
  const int raw = std::system(cmd.c_str());
  RunOutput r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.stdout_text = read_file(out_file);
  r.stderr_text = read_file(err_file);
  return r;
}

bool same_bytes(const fs::path& a, const fs::path& b) { return read_file(a.string()) == read_file(b.string()); }

}  // namespace

TEST_CASE("shoot outputs are byte-identical to the golden files") {
  for (const std::string fixture : {"one_particle", "zero_momentum"}) {
    const fs::path dir = fresh_dir("shoot_" + fixture);
    const RunOutput r = run_cli("shoot " + kGolden + "/" + fixture + ".txt --steps 10 --sigma 1 --out " +
                                    (dir / "out").string(),
                                dir);
    REQUIRE(r.exit_code == 0);
    for (const std::string name : {"trajectory.csv", "hamiltonian.csv", "deformed_grid.svg"})
      CHECK(same_bytes(dir / "out" / name, fs::path(kGolden) / (fixture + "_shoot") / name));
    fs::remove_all(dir);
  }
}

TEST_CASE("flow-grid outputs are byte-identical to the golden files") {
  for (const std::string fixture : {"one_particle", "zero_momentum"}) {
    const fs::path dir = fresh_dir("flow_" + fixture);
    const RunOutput r = run_cli("flow-grid " + kGolden + "/" + fixture +
                                    ".txt 9,9,-2,2,-2,2 --steps 10 --sigma 1 --out " +
                                    (dir / "out").string(),
                                dir);
    REQUIRE(r.exit_code == 0);
    for (const std::string name : {"flow_grid.csv", "flow_grid.svg"})
      CHECK(same_bytes(dir / "out" / name, fs::path(kGolden) / (fixture + "_flow") / name));
    fs::remove_all(dir);
  }
}

TEST_CASE("identical runs produce identical bytes") {
  const fs::path dir = fresh_dir("repro");
  const std::string fixture = kGolden + "/one_particle.txt";
  REQUIRE(run_cli("shoot " + fixture + " --steps 20 --out " + (dir / "a").string(), dir).exit_code == 0);
  REQUIRE(run_cli("shoot " + fixture + " --steps 20 --out " + (dir / "b").string(), dir).exit_code == 0);
  for (const std::string name : {"trajectory.csv", "hamiltonian.csv", "deformed_grid.svg"})
    CHECK(same_bytes(dir / "a" / name, dir / "b" / name));
  fs::remove_all(dir);
}

TEST_CASE("matching identical landmarks converges at iteration zero with zero momenta") {
  const fs::path dir = fresh_dir("lm_trivial");
  write_points((dir / "pts.txt").string(), {0.0, 0.0, 1.0, 0.5}, 2);
  const RunOutput r = run_cli("match-landmarks " + (dir / "pts.txt").string() + " " +
                                  (dir / "pts.txt").string() + " --out " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 0);
  CHECK(r.stdout_text.find("iterations: 0") != std::string::npos);
  const PhasePoint optimal = read_state((dir / "out" / "optimal_phase.txt").string());
  for (double v : optimal.momentum.p) CHECK(v == 0.0);
  fs::remove_all(dir);
}

TEST_CASE("the single-pair far-field run matches the closed form") {
  const fs::path dir = fresh_dir("lm_closed");
  write_points((dir / "src.txt").string(), {0.0, 0.0}, 2);
  write_points((dir / "tgt.txt").string(), {0.012, -0.005}, 2);
  const RunOutput r = run_cli("match-landmarks " + (dir / "src.txt").string() + " " +
                                  (dir / "tgt.txt").string() +
                                  " --sigma 100 --weight 1 --max-iters 400 --grad-tol 1e-9 --out " +
                                  (dir / "out").string(),
                              dir);
  REQUIRE(r.exit_code == 0);
  const PhasePoint optimal = read_state((dir / "out" / "optimal_phase.txt").string());
  CHECK(std::abs(optimal.momentum.point(0)[0] - (2.0 / 3.0) * 0.012) <= 1e-6);
  CHECK(std::abs(optimal.momentum.point(0)[1] - (2.0 / 3.0) * -0.005) <= 1e-6);
  fs::remove_all(dir);
}

TEST_CASE("mismatched landmark counts exit with code 1 and name both counts") {
  const fs::path dir = fresh_dir("lm_counts");
  write_points((dir / "src.txt").string(), {0.0, 0.0}, 2);
  write_points((dir / "tgt.txt").string(), {0.0, 0.0, 1.0, 1.0}, 2);
  const RunOutput r = run_cli("match-landmarks " + (dir / "src.txt").string() + " " +
                                  (dir / "tgt.txt").string() + " --out " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 1);
  CHECK(r.stderr_text.find("1") != std::string::npos);
  CHECK(r.stderr_text.find("2") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("an exhausted iteration budget exits with code 2") {
  const fs::path dir = fresh_dir("lm_budget");
  write_points((dir / "src.txt").string(), {0.0, 0.0, 1.0, 0.0}, 2);
  write_points((dir / "tgt.txt").string(), {0.3, 0.4, 1.3, -0.2}, 2);
  const RunOutput r = run_cli("match-landmarks " + (dir / "src.txt").string() + " " +
                                  (dir / "tgt.txt").string() +
                                  " --max-iters 1 --grad-tol 1e-12 --out " + (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 2);
  fs::remove_all(dir);
}

TEST_CASE("malformed phase files exit with code 1 and a diagnostic") {
  const fs::path dir = fresh_dir("bad_phase");
  write_file_atomic((dir / "bad.txt").string(), "jetflow-phase 1 2 1 0\n0 0 nope 0\n");
  const RunOutput r = run_cli("shoot " + (dir / "bad.txt").string() + " --out " + (dir / "out").string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.stderr_text.find("error:") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("match-image emits re-readable files and reduces the dissimilarity") {
  const fs::path dir = fresh_dir("image");
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::GaussianBlob;
  spec.width = 32;
  spec.height = 32;
  spec.center_x = 17.0;
  spec.center_y = 16.0;
  spec.sigma = 5.0;
  write_pgm((dir / "fixed.pgm").string(), make_synthetic(spec), 255);
  spec.center_x = 14.0;
  write_pgm((dir / "moving.pgm").string(), make_synthetic(spec), 255);
  const RunOutput r = run_cli("match-image " + (dir / "fixed.pgm").string() + " " +
                                  (dir / "moving.pgm").string() +
                                  " --sigma 5 --weight 40 --stride 4 --steps 8 --max-iters 20 --out " +
                                  (dir / "out").string(),
                              dir);
  REQUIRE(r.exit_code == 2);  // tight budget: not converged, but productive
  const PhasePoint optimal = read_state((dir / "out" / "optimal_phase.txt").string());
  CHECK(optimal.state.count == 8 * 8);
  const RasterImage warped = read_pgm((dir / "out" / "warped.pgm").string());
  CHECK(warped.width == 32);
  const std::string metrics = read_file((dir / "out" / "metrics.csv").string());
  const std::size_t init_pos = metrics.find("initial_dissimilarity,");
  const std::size_t final_pos = metrics.find("final_dissimilarity,");
  REQUIRE(init_pos != std::string::npos);
  REQUIRE(final_pos != std::string::npos);
  double init_v = 0.0, final_v = 0.0;
  CHECK(parse_double(metrics.substr(init_pos + 22, metrics.find('\n', init_pos) - init_pos - 22), &init_v));
  CHECK(parse_double(metrics.substr(final_pos + 20, metrics.find('\n', final_pos) - final_pos - 20), &final_v));
  CHECK(final_v < 0.5 * init_v);
  const std::string svg = read_file((dir / "out" / "deformed_grid.svg").string());
  CHECK(svg.find("<?xml") == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("rejected jet order for image matching") {
  const fs::path dir = fresh_dir("image_jet");
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::GaussianBlob;
  spec.width = 16;
  spec.height = 16;
  spec.center_x = 8.0;
  spec.center_y = 8.0;
  spec.sigma = 3.0;
  write_pgm((dir / "img.pgm").string(), make_synthetic(spec), 255);
  const RunOutput r = run_cli("match-image " + (dir / "img.pgm").string() + " " +
                                  (dir / "img.pgm").string() + " --jet-order 1 --out " +
                                  (dir / "out").string(),
                              dir);
  CHECK(r.exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("a rotational 1-jet turns the grid locally and fades at range") {
  const fs::path dir = fresh_dir("flow_rotation");
  // one particle at the origin, zero point momentum, antisymmetric mu1
  write_file_atomic((dir / "spin.txt").string(),
                    "jetflow-phase 1 2 1 1\n"
                    "0 0  1 0 0 1  0 0  0 -0.5 0.5 0\n");
  const RunOutput r = run_cli("flow-grid " + (dir / "spin.txt").string() +
                                  " 13,13,-12,12,-12,12 --sigma 1 --steps 50 --out " +
                                  (dir / "out").string(),
                              dir);
  REQUIRE(r.exit_code == 0);
  const std::string csv = read_file((dir / "out" / "flow_grid.csv").string());
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  double near_move = 0.0;
  double far_move = 0.0;
  while (std::getline(lines, line)) {
    std::string spaced = line;
    for (char& ch : spaced)
      if (ch == ',') ch = ' ';
    const auto fields = split_fields(spaced);
    REQUIRE(fields.size() == 7);
    double x0, y0, x1, y1, det;
    REQUIRE(parse_double(fields[2], &x0));
    REQUIRE(parse_double(fields[3], &y0));
    REQUIRE(parse_double(fields[4], &x1));
    REQUIRE(parse_double(fields[5], &y1));
    REQUIRE(parse_double(fields[6], &det));
    CHECK(det > 0.0);
    const double dist = std::sqrt(x0 * x0 + y0 * y0);
    const double move = std::sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0));
    if (dist >= 10.0) far_move = std::max(far_move, move);
    if (std::abs(x0 - 2.0) < 1e-9 && std::abs(y0) < 1e-9) near_move = move;
  }
  CHECK(far_move <= 1e-12);
  CHECK(near_move >= 0.05);
  fs::remove_all(dir);
}

TEST_CASE("zero-momentum flow grids are perfectly regular") {
  const fs::path dir = fresh_dir("flow_regular");
  const RunOutput r = run_cli("flow-grid " + kGolden + "/zero_momentum.txt 5,5,-1,1,-1,1 --out " +
                                  (dir / "out").string(),
                              dir);
  REQUIRE(r.exit_code == 0);
  const std::string csv = read_file((dir / "out" / "flow_grid.csv").string());
  // every initial position equals its final position, all determinants one
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    std::string spaced = line;
    for (char& ch : spaced)
      if (ch == ',') ch = ' ';
    const auto fields = split_fields(spaced);
    REQUIRE(fields.size() == 7);
    CHECK(fields[2] == fields[4]);
    CHECK(fields[3] == fields[5]);
    CHECK(fields[6] == "1");
  }
  fs::remove_all(dir);
}
