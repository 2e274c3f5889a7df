#include "cookielife/cli.hpp"

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "cookielife/error.hpp"
#include "cookielife/stages.hpp"

namespace cookielife {

namespace {

struct Flags {
  std::string input;
  std::string out = ".";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> threshold;
  std::optional<std::string> restrictions;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--input", f.input, "Input file or directory (defaults to --out)");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--config", f.config, "JSON config file, or 'default'");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--threshold", f.threshold, "Censoring threshold in days")->check(CLI::IsMember({7, 28}));
  cmd->add_option("--restrictions", f.restrictions, "Comma-separated lifetime limits in days");
}

RunConfig resolve_run_config(const Flags& f, const EnvLookup& env) {
  RunConfig cfg = apply_env_overrides(load_run_config(f.config), env);
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (f.threshold) cfg.threshold_days = *f.threshold;
  if (f.restrictions) cfg.restrictions = parse_restrictions(*f.restrictions);
  cfg.validate();
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Cookie lifetime value and lifetime-restriction loss pipeline", "cookielife"};
  app.require_subcommand(0, 1);

  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "Generate a synthetic impression log with ground truth"},
      {"panel", "Sample cookies and build the daily panel"},
      {"survival", "Classify censoring, fit lifetime models and uncensor lifetimes"},
      {"regress", "Fit per-cookie value regressions"},
      {"simulate", "Value cookies and simulate lifetime restrictions"},
      {"validate", "Holdout validation of the lifetime models on a newborn cohort"},
      {"report", "Bundle stage outputs into the final report"},
      {"all", "Run panel, survival, regress, simulate, validate and report"},
  };
  for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), flags);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }
  if (app.get_subcommands().empty()) {
    err << "error: a subcommand is required\n" << app.help();
    return 1;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    const fs::path outdir = flags.out;
    const fs::path input = flags.input.empty() ? outdir : fs::path(flags.input);
    if (cmd == "gen") {
      const GenConfig gen = apply_env_overrides(load_gen_config(flags.config), env);
      const RunConfig defaults;
      stage_gen(gen, flags.seed.value_or(defaults.seed), flags.threads.value_or(1), outdir);
    } else {
      const RunConfig cfg = resolve_run_config(flags, env);
      if (cmd == "panel") {
        stage_panel(cfg, input, outdir);
      } else if (cmd == "survival") {
        stage_survival(cfg, input, outdir);
      } else if (cmd == "regress") {
        stage_regress(cfg, input, outdir);
      } else if (cmd == "simulate") {
        stage_simulate(cfg, input, outdir);
      } else if (cmd == "validate") {
        stage_validate(cfg, input, outdir);
      } else if (cmd == "report") {
        stage_report(cfg, input, outdir);
      } else {
        stage_all(cfg, input, outdir);
      }
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const ConvergenceError& e) {
    err << "convergence error: " << e.what() << "\n";
    return 3;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace cookielife
