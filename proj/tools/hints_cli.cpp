#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hints/config.hpp"
#include "hints/error.hpp"
#include "hints/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Hybrid DeepONet / classical iterative solver for the Helmholtz equation"};
  app.require_subcommand(0, 1);

  std::string config_path;
  long long seed = -1;
  std::string out;
  bool strict = false, print_config = false, timing = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_flag("--strict", strict, "exit nonzero when any run diverges");
  app.add_flag("--timing", timing, "fill the seconds column of the report");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  app.add_option("--set", overrides, "override one field, as key=value (repeatable)")->allow_extra_args(false);

  for (const char* name : {"generate", "train", "solve", "sweep", "diagnose"}) app.add_subcommand(name)->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    hints::ExperimentConfig cfg = config_path.empty() ? hints::ExperimentConfig{} : hints::load_config(config_path);
    for (auto* sub : app.get_subcommands()) cfg.mode = sub->get_name();
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw hints::ConfigError("--set: expected key=value, got '" + kv + "'");
      try {
        cfg.set(hints::detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
      } catch (const hints::ConfigError& e) {
        throw hints::ConfigError(std::string("--set: ") + e.what());
      }
    }
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out.empty()) cfg.out = out;
    if (strict) cfg.strict = true;
    if (timing) cfg.timing = true;

    if (print_config) {
      std::cout << cfg.render();
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << "no subcommand given (generate, train, solve, sweep, diagnose)\n";
      return 2;
    }
    auto summary = hints::run(cfg, std::cout);
    for (const auto& f : summary.files) std::cout << "wrote " << f << "\n";
    return summary.exit_code;
  } catch (const hints::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
