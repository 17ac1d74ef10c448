#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "richop/pipeline.hpp"

namespace richop::cli {

struct MeshSpec {
  double h = 0.0625;
  int degree = 1;
  // Corner grading toward the reentrant corners: exponent and uniform levels.
  std::optional<double> grading;
  int levels = 0;
};

struct ExperimentConfig {
  nlohmann::json raw;  // as read, with the seed override applied
  std::string hash;    // 16 hex digits of FNV-1a over raw.dump()
  std::string name;
  std::uint64_t seed = 1;

  std::string domain_name = "square";
  Polygon domain = Polygon::unit_square();
  MeshSpec mesh;
  ProblemConfig problem;
  DataFamily family;

  std::size_t training_count = 40;
  int n = 10;
  double gamma = 1.0;
  EncoderSpec encoder;
  double epsilon = 1e-2;
  BetaMode beta_mode = BetaMode::envelope;
  int envelope_grid = 100;

  std::size_t test_count = 20;
  std::uint64_t test_seed = 2;
  int iteration_steps = 30;
  std::size_t iteration_samples = 20;
  std::vector<double> sweep_epsilon;
  std::vector<int> sweep_n;
  std::size_t nncheck_samples = 200;
  std::uint64_t nncheck_seed = 3;

  OperatorSpec operator_spec() const;
};

// Throws ConfigError naming the offending key or violated invariant.
ExperimentConfig parse_config(nlohmann::json doc, std::optional<std::uint64_t> seed_override = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = {});

struct RunOptions {
  std::filesystem::path out = "out";
  bool timing = false;
  std::optional<std::filesystem::path> bundle;  // eval: load instead of build
};

// Subcommands: mesh snapshots greedy build eval sweep nncheck decompose run.
// Errors propagate as richop exceptions; see exit_code.
void run_command(const std::string& command, const ExperimentConfig& config, const RunOptions& options);
const std::vector<std::string>& command_names();

// 1 config, 2 build or numerical failure, 3 certificate violation.
int exit_code(const std::exception& e);

}  // namespace richop::cli
