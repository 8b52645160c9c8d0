#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "poisson_malliavin/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace pm::cli;
  CLI::App app{"Normal approximation of Kabanov-Skorohod integrals on Poisson space"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", workers, "override the worker count");
    sub->add_option("--out", out, "output path ('-' for stdout)");
  };
  auto* oracle = app.add_subcommand("oracle", "exact identity suite on an atomic space");
  auto* study = app.add_subcommand("study", "bound terms and empirical distances as CSV");
  auto* sample = app.add_subcommand("sample", "raw KS-integral samples, one per line");
  for (auto* sub : {oracle, study, sample}) {
    add_common(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::usage;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
    }
    if (workers) {
      cfg.workers = *workers;
    }
    if (out) {
      cfg.output = *out;
    }
    validate(cfg);
    if (oracle->parsed()) {
      return cmd_oracle(cfg, std::cout);
    }
    if (study->parsed()) {
      return cmd_study(cfg);
    }
    return cmd_sample(cfg);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const pm::numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return exit_code::numeric_failure;
  } catch (const pm::feasibility_error& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::usage;
  }
}
