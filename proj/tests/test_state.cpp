#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "jetflow/state.hpp"
#include "jetflow/textio.hpp"
#include "support/test_support.hpp"

using namespace jetflow;
using jetflow::testing::Rng;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("raising the order pads with identity Jacobians and zero momenta") {
  Rng rng(3);
  PhasePoint x = jetflow::testing::random_phase(rng, 2, 0, 3);
  const PhasePoint up = project_order(x, 1);
  CHECK(up.state.order == 1);
  CHECK(up.state.positions == x.state.positions);
  CHECK(up.momentum.p == x.momentum.p);
  for (int i = 0; i < 3; ++i)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        CHECK(up.state.jacobian(i)[a * 2 + b] == (a == b ? 1.0 : 0.0));
        CHECK(up.momentum.first(i)[a * 2 + b] == 0.0);
      }
}

TEST_CASE("raise then lower is the identity bit-for-bit") {
  Rng rng(4);
  for (int order = 0; order <= 2; ++order) {
    PhasePoint x = jetflow::testing::random_phase(rng, 2, order, 4);
    const PhasePoint round = project_order(project_order(x, 2), order);
    CHECK(round.state.positions == x.state.positions);
    CHECK(round.state.jacobians == x.state.jacobians);
    CHECK(round.state.hessians == x.state.hessians);
    CHECK(round.momentum.p == x.momentum.p);
    CHECK(round.momentum.mu1 == x.momentum.mu1);
    CHECK(round.momentum.mu2 == x.momentum.mu2);
  }
}

TEST_CASE("projecting through the top order equals projecting directly") {
  Rng rng(9);
  for (int start = 0; start <= 2; ++start) {
    const PhasePoint x = jetflow::testing::random_phase(rng, 2, start, 3);
    for (int k = 0; k <= 2; ++k) {
      const PhasePoint via_top = project_order(project_order(x, 2), k);
      const PhasePoint direct = project_order(x, k);
      CHECK(via_top.state.positions == direct.state.positions);
      CHECK(via_top.state.jacobians == direct.state.jacobians);
      CHECK(via_top.state.hessians == direct.state.hessians);
      CHECK(via_top.momentum.p == direct.momentum.p);
      CHECK(via_top.momentum.mu1 == direct.momentum.mu1);
      CHECK(via_top.momentum.mu2 == direct.momentum.mu2);
    }
  }
}

TEST_CASE("lowering truncates the higher slots") {
  Rng rng(5);
  PhasePoint x = jetflow::testing::random_phase(rng, 2, 1, 2);
  const PhasePoint down = project_order(x, 0);
  CHECK(down.state.order == 0);
  CHECK(down.state.positions == x.state.positions);
  CHECK(down.momentum.p == x.momentum.p);
  CHECK(down.state.jacobians.empty());
  CHECK(down.momentum.mu1.empty());
}

TEST_CASE("phase files round-trip bit-exactly") {
  Rng rng(6);
  const std::string path = temp_path("jetflow_state_roundtrip.txt");
  for (int trial = 0; trial < 30; ++trial) {
    const int dim = trial % 2 ? 3 : 2;
    const int order = trial % 3;
    const int count = trial % 5;
    const PhasePoint x = jetflow::testing::random_phase(rng, dim, order, count);
    write_state(path, x);
    const PhasePoint back = read_state(path);
    CHECK(back.state.dim == dim);
    CHECK(back.state.order == order);
    CHECK(back.state.count == count);
    CHECK(back.state.positions == x.state.positions);
    CHECK(back.state.jacobians == x.state.jacobians);
    CHECK(back.state.hessians == x.state.hessians);
    CHECK(back.momentum.p == x.momentum.p);
    CHECK(back.momentum.mu1 == x.momentum.mu1);
    CHECK(back.momentum.mu2 == x.momentum.mu2);
  }
  std::filesystem::remove(path);
}

TEST_CASE("an empty particle list is a valid phase point") {
  const std::string path = temp_path("jetflow_state_empty.txt");
  write_state(path, make_phase_point(2, 1, 0));
  const PhasePoint back = read_state(path);
  CHECK(back.state.count == 0);
  CHECK(back.state.order == 1);
  std::filesystem::remove(path);
}

TEST_CASE("duplicate positions in a file are rejected") {
  const std::string path = temp_path("jetflow_state_dup.txt");
  write_file_atomic(path,
                    "jetflow-phase 1 2 2 0\n"
                    "1 2 0.5 0.5\n"
                    "1 2 -0.5 0.25\n");
  CHECK_THROWS_AS(read_state(path), CoincidentParticlesError);
  std::filesystem::remove(path);
}

TEST_CASE("asymmetric mu2 in a file is rejected") {
  const std::string path = temp_path("jetflow_state_asym.txt");
  // order 2, one particle: pos(2) hess(8) jac(4) -> layout is pos jac hess p mu1 mu2
  std::string row = "0 0  1 0 0 1  0 0 0 0 0 0 0 0  1 0  0 0 0 0  ";
  row += "0 0.125 0.25 0 0 0 0 0\n";  // mu2[0][0][1] != mu2[0][1][0]
  write_file_atomic(path, "jetflow-phase 1 2 1 2\n" + row);
  CHECK_THROWS_AS(read_state(path), InvariantViolationError);
  std::filesystem::remove(path);
}

TEST_CASE("parse errors carry line and field diagnostics") {
  const std::string path = temp_path("jetflow_state_bad.txt");
  write_file_atomic(path, "jetflow-phase 1 2 1 0\n0.5 oops 1 2\n");
  try {
    read_state(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2:") != std::string::npos);
    CHECK(msg.find("field 2") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("truncated files are rejected") {
  const std::string path = temp_path("jetflow_state_trunc.txt");
  write_file_atomic(path, "jetflow-phase 1 2 3 0\n0 0 1 1\n");
  CHECK_THROWS_AS(read_state(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("validation rejects singular Jacobian slots") {
  JetState s = make_jet_state(2, 1, 1);
  s.jacobian(0)[0] = 0.0;
  s.jacobian(0)[3] = 0.0;
  CHECK_THROWS_AS(validate(s), InvariantViolationError);
}

TEST_CASE("points files round-trip") {
  const std::string path = temp_path("jetflow_points.txt");
  const std::vector<double> pts = {0.5, -1.0, 2.25, 3.5};
  write_points(path, pts, 2);
  int dim = 0;
  const std::vector<double> back = read_points(path, &dim);
  CHECK(dim == 2);
  CHECK(back == pts);
  std::filesystem::remove(path);
}
