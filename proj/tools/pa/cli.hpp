#ifndef PA_CLI_HPP
#define PA_CLI_HPP

#include "pa/commands.hpp"

#include <CLI11.hpp>

#include <cstdlib>

namespace pa {

/// Flag beats environment beats config file.
inline void apply_overrides(RunConfig& cfg, const std::string& out, int workers, const std::optional<std::uint64_t>& seed) {
  if (const char* e = std::getenv("PA_OUT"); e && *e) cfg.output = e;
  if (const char* e = std::getenv("PA_WORKERS"); e && *e) {
    char* end = nullptr;
    const long w = std::strtol(e, &end, 10);
    if (*end != '\0' || w < 1) throw ConfigError(std::string("PA_WORKERS: expected a positive integer, got '") + e + "'");
    cfg.workers = static_cast<int>(w);
  }
  if (!out.empty()) cfg.output = out;
  if (workers > 0) cfg.workers = workers;
  if (seed) cfg.seed = *seed;
}

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Periodic solutions, periodic adjoints and gradients on the periodic manifold", "pa"};
  app.require_subcommand(1);
  std::string config_path, out;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  for (const auto& [name, fn] : commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (YAML)")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "random seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }
  const auto* chosen = app.get_subcommands().front();
  try {
    RunConfig cfg = load_config(config_path);
    apply_overrides(cfg, out, workers, seed);
    return commands().at(chosen->get_name())(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "pa " << chosen->get_name() << ": config error: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "pa " << chosen->get_name() << ": " << e.what() << '\n';
    return numerical_failure;
  }
}

}  // namespace pa

#endif  // PA_CLI_HPP
