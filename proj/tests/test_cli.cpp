#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "experiment.hpp"
#include "richop/error.hpp"

using namespace richop;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RICHOP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string body(const fs::path& p) {
  std::ifstream is(p);
  std::string first;
  std::getline(is, first);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("richop_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(1);
  return p;
}

const std::string smoke = std::string(RICHOP_CONFIG_DIR) + "/square_smoke.json";

}  // namespace

TEST_CASE("config defaults and validation") {
  const auto c = cli::parse_config(json::object());
  CHECK(c.problem.alpha == 1.0);
  CHECK(c.problem.beta == 0.5);
  CHECK(c.domain_name == "square");
  CHECK(c.hash.size() == 16);

  auto bad = [](const char* text, const char* needle) {
    try {
      cli::parse_config(json::parse(text));
      FAIL("accepted " << text);
    } catch (const ConfigError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  bad(R"({"problem": {"beta": 1.0}})", "0 < beta < alpha");
  bad(R"({"problem": {"beta": 0.0}})", "0 < beta < alpha");
  bad(R"({"mesh": {"hh": 0.1}})", "unknown key mesh.hh");
  bad(R"({"mesh": {"h": "fine"}})", "mesh.h has the wrong type");
  bad(R"({"epsilon": 2})", "epsilon must lie in (0, 1)");
  bad(R"({"training": {"count": 5, "n": 6}})", "training.n");
  bad(R"({"domain": "circle"})", "domain must be");
  bad(R"({"family": {"type": "rough"}})", "family.type");
  bad(R"({"beta_mode": "loose"})", "beta mode");
  bad(R"({"sweep": {"epsilon": [0.1, 0]}})", "sweep.epsilon");
  bad(R"({"seed": -4})", "seed has the wrong type");
}

TEST_CASE("config hash follows content and seed override") {
  const json j = json::parse(R"({"name": "a", "seed": 3, "epsilon": 0.05})");
  const auto a = cli::parse_config(j), b = cli::parse_config(j);
  CHECK(a.hash == b.hash);
  const auto c = cli::parse_config(j, 4);
  CHECK(c.seed == 4);
  CHECK(c.hash != a.hash);
  CHECK(cli::parse_config(j, 3).hash == a.hash);
}

TEST_CASE("polygon domains and graded meshes parse") {
  const auto c = cli::parse_config(json::parse(
      R"({"domain": {"polygon": [[0, 0], [2, 0], [2, 1], [0, 1]]}, "mesh": {"h": 0.25, "grading": {"exponent": 0.5, "levels": 1}}})"));
  CHECK(c.domain.vertices().size() == 4);
  CHECK(c.mesh.grading.value() == 0.5);
  CHECK(c.mesh.levels == 1);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  CHECK(run_cli("build --config " + (dir / "missing.json").string()) == 1);
  CHECK(run_cli("build --config " + write_config(dir, json::parse(R"({"problem": {"beta": 1.5}})")).string() +
                " --out " + (dir / "a").string()) == 1);
  CHECK(run_cli("nosuch --config x") == 1);
  CHECK(run_cli("build --config " + write_config(dir, json::parse(R"({"mesh": {"h": 5.0}})")).string() +
                " --out " + (dir / "b").string()) == 2);

  // A bundle whose recorded tolerance is far below what the network achieves.
  const auto cfg = write_config(dir, json::parse(R"({"mesh": {"h": 0.125}, "training": {"count": 10, "n": 4},
                                                     "epsilon": 0.1, "nncheck": {"samples": 10}})"));
  REQUIRE(run_cli("build --config " + cfg.string() + " --out " + (dir / "c").string()) == 0);
  const auto certs = dir / "c" / "operator" / "certificates.json";
  json j = json::parse(std::ifstream(certs));
  j["epsilon"] = 1e-12;
  std::ofstream(certs) << j.dump(1);
  CHECK(run_cli("nncheck --config " + cfg.string() + " --out " + (dir / "d").string() + " --bundle " +
                (dir / "c" / "operator").string()) == 3);
  fs::remove_all(dir);
}

TEST_CASE("smoke config runs and is reproducible") {
  const auto a = scratch("smoke_a"), b = scratch("smoke_b");
  REQUIRE(run_cli("run --config " + smoke + " --out " + a.string()) == 0);
  REQUIRE(run_cli("run --config " + smoke + " --out " + b.string() + " --threads 2") == 0);
  const auto cfg = cli::load_config(smoke);
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const auto name = e.path().filename();
    CHECK_MESSAGE(body(a / name) == body(b / name), name.string());
    std::istringstream is(body(a / name));
    std::string line;
    std::getline(is, line);
    CHECK(line.rfind("config_hash,", 0) == 0);
    while (std::getline(is, line)) CHECK(line.rfind(cfg.hash + ",", 0) == 0);
  }
  CHECK(files >= 12);
  for (const char* f : {"contraction.csv", "convergence.csv", "sweep_epsilon.csv"}) CHECK(fs::exists(a / f));
  std::istringstream sweep(body(a / "sweep_epsilon.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(sweep, line)) ++rows;
  CHECK(rows == static_cast<int>(cfg.sweep_epsilon.size()));

  // --seed overrides the config and changes the hash.
  const auto c = scratch("smoke_c");
  REQUIRE(run_cli("mesh --config " + smoke + " --out " + c.string() + " --seed 99") == 0);
  CHECK(body(c / "mesh.csv").rfind(cli::load_config(smoke, 99).hash, std::string::npos) != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}
