#include "fedsim/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/diagnostics.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/orchestrator.hpp"

namespace fedsim {

namespace fs = std::filesystem;

namespace {

void apply_toggle(Hyperparams& hp, const std::string& toggle) {
  const std::size_t eq = toggle.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--toggle expects name=on|off, got '" + toggle + "'");
  }
  const std::string name = toggle.substr(0, eq);
  const std::string value = toggle.substr(eq + 1);
  bool on;
  if (value == "on") on = true;
  else if (value == "off") on = false;
  else throw ConfigError("--toggle value must be on or off, got '" + value + "'");
  if (name == "gfa") hp.gfa = on;
  else if (name == "glf") hp.glf = on;
  else if (name == "gpc") hp.gpc = on;
  else if (name == "da") hp.da = on;
  else throw ConfigError("--toggle name must be one of gfa, glf, gpc, da");
}

int run_command(const std::string& config_path, bool seed_set,
                std::uint64_t seed, const std::string& out_dir,
                const std::string& algorithm, bool rounds_set,
                std::uint64_t rounds, const std::vector<std::string>& toggles) {
  ExperimentConfig cfg =
      ExperimentConfig::from_document(ConfigDoc::parse_file(config_path));
  if (seed_set) cfg.master_seed = seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (!algorithm.empty()) cfg.algorithm = algorithm_from_name(algorithm);
  if (rounds_set) cfg.rounds = rounds;
  for (const auto& t : toggles) apply_toggle(cfg.hp, t);
  cfg.validate();
  if (cfg.out_dir.empty()) {
    throw ConfigError("no output directory (set output.dir or pass --out)");
  }

  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    ExperimentConfig one = cfg;
    one.master_seed = cfg.master_seed + r;
    one.out_dir = cfg.repeats == 1
                      ? cfg.out_dir
                      : (fs::path(cfg.out_dir) /
                         ("seed_" + std::to_string(one.master_seed)))
                            .string();
    RunArtifact art = run_experiment(one);
    write_artifact(art, one.out_dir);
    const RoundReport& last = art.rounds.back();
    std::cout << algorithm_name(one.algorithm) << " seed " << one.master_seed
              << ": " << art.rounds.size() << " rounds, final acc "
              << format_double(last.mean_acc) << " +- "
              << format_double(last.std_acc) << ", loss "
              << format_double(last.mean_loss) << ", descent "
              << (art.descent.ok ? "ok" : "violated") << " -> " << one.out_dir
              << "\n";
  }
  return 0;
}

int summarize_command(const std::vector<std::string>& dirs) {
  std::vector<nlohmann::json> runs;
  for (const auto& dir : dirs) {
    const fs::path path = fs::path(dir) / "run.json";
    std::ifstream f(path);
    if (!f) throw ConfigError("no run.json under " + dir);
    nlohmann::json j;
    f >> j;
    runs.push_back(std::move(j));
  }
  write_summary(std::cout, summarize(runs));
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Deterministic federated-learning simulator"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path;
  run->add_option("--config", config_path, "Config file path")->required();
  std::uint64_t seed = 0;
  auto* seed_opt = run->add_option("--seed", seed, "Master seed override");
  std::string out_dir;
  run->add_option("--out", out_dir, "Output directory override");
  std::string algorithm;
  run->add_option("--algorithm", algorithm,
                  "Algorithm override (local, fedavg, ft_fedavg, fedprox, "
                  "fedrep, fedecouple)");
  std::uint64_t rounds = 0;
  auto* rounds_opt = run->add_option("--rounds", rounds, "Rounds override");
  std::vector<std::string> toggles;
  run->add_option("--toggle", toggles,
                  "Component toggle override, e.g. gfa=off (repeatable)");

  // summarize
  auto* summ = app.add_subcommand("summarize", "Summarize runs across seeds");
  std::vector<std::string> in_dirs;
  summ->add_option("--in", in_dirs, "Run directory (repeatable)")->required();

  // gradcheck / selftest
  auto* grad = app.add_subcommand(
      "gradcheck", "Check analytic gradients against finite differences");
  auto* self = app.add_subcommand("selftest", "Run cross-module invariants");

  std::vector<const char*> argv;
  argv.push_back("fedsim");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (run->parsed()) {
      return run_command(config_path, seed_opt->count() > 0, seed, out_dir,
                         algorithm, rounds_opt->count() > 0, rounds, toggles);
    }
    if (summ->parsed()) {
      return summarize_command(in_dirs);
    }
    if (grad->parsed()) {
      return run_gradcheck(std::cout) ? 0 : 2;
    }
    if (self->parsed()) {
      return run_selftest(std::cout) ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace fedsim
