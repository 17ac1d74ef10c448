#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "richop/error.hpp"
#include "richop/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Reduced-basis Richardson neural operators: experiment driver"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool timing = false;
  std::string bundle;

  const std::map<std::string, std::string> about = {
      {"mesh", "triangulate the domain"},
      {"snapshots", "solve the training coefficients"},
      {"greedy", "weak greedy trace and test-set delta curve"},
      {"build", "build the neural operator and write its bundle"},
      {"eval", "evaluate the operator on test coefficients"},
      {"sweep", "network cost over the epsilon and N axes"},
      {"nncheck", "Monte-Carlo check of the network certificate"},
      {"decompose", "per-sample error decomposition"},
      {"run", "all stages in order"},
  };
  for (const auto& name : richop::cli::command_names()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "artifact directory");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--threads", threads, "worker threads (default: RICHOP_THREADS, else 1)");
    sub->add_flag("--timing", timing, "add wall-clock columns (not reproducible)");
    if (name == "eval" || name == "nncheck" || name == "decompose")
      sub->add_option("--bundle", bundle, "operator bundle to load instead of building");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (threads > 0) richop::set_thread_count(threads);
    const auto config = richop::cli::load_config(config_path, seed);
    richop::cli::RunOptions options;
    options.out = out_dir;
    options.timing = timing;
    if (!bundle.empty()) options.bundle = bundle;
    richop::cli::run_command(command, config, options);
  } catch (const std::exception& e) {
    const int rc = richop::cli::exit_code(e);
    std::cerr << "richop " << command << ": "
              << (rc == 1 ? "config error: " : rc == 3 ? "certificate violation: " : "build failure: ") << e.what()
              << '\n';
    return rc;
  }
  return 0;
}
