// Command-line front end for running one experiment (or a seed sweep).

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "sagin/harness.hpp"

namespace {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kRuntime = 3, kNumerical = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace sagin;
  CLI::App app{"Task offloading scheduler for space-air-ground networks"};

  std::string config_path;
  std::uint64_t seed = 0;
  std::string algo;
  std::string scenario;
  int episodes = -1;
  std::string out_dir = "out";
  bool desk = false;
  bool deterministic = false;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "JSON config file (empty file = defaults)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Run seed (falls back to SAGIN_SCHED_SEED)");
  app.add_option("--algo", algo, "Scheduler")
      ->check(CLI::IsMember({"cmaddpg", "maddpg", "maac", "greedy", "random", "local"}));
  app.add_option("--scenario", scenario, "Workload preset")->check(CLI::IsMember({"balanced", "delay", "compute"}));
  app.add_option("--episodes", episodes, "Training episodes")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--desk", desk, "Desk-scale preset (12 UAVs, 6 BSs, 1.25 km side)");
  app.add_flag("--deterministic-channel", deterministic, "Disable shadowing");
  app.add_option("--set", overrides, "Config override key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    // Preset and flags are applied before --set so explicit overrides win.
    std::vector<std::string> all;
    if (desk) all.emplace_back("desk=true");
    if (!algo.empty()) all.push_back("algorithm=\"" + algo + "\"");
    if (!scenario.empty()) all.push_back("scenario=\"" + scenario + "\"");
    if (episodes >= 0) all.push_back("episodes=" + std::to_string(episodes));
    if (deterministic) all.emplace_back("deterministic_channel=true");
    if (seed_opt->count() > 0) {
      all.push_back("seeds=[" + std::to_string(seed) + "]");
    } else if (const char* env_seed = std::getenv("SAGIN_SCHED_SEED"); env_seed != nullptr && *env_seed != '\0') {
      try {
        std::size_t used = 0;
        const auto s = std::stoull(env_seed, &used);
        if (used != std::string(env_seed).size()) throw std::invalid_argument("trailing characters");
        all.push_back("seeds=[" + std::to_string(s) + "]");
      } catch (const std::exception&) {
        throw harness::ConfigError(std::string("SAGIN_SCHED_SEED: not an unsigned integer: ") + env_seed);
      }
    }
    all.insert(all.end(), overrides.begin(), overrides.end());

    const auto cfg = harness::load_config(config_path, all);
    const auto results = harness::run_experiment(cfg, out_dir);
    for (const auto& r : results)
      std::cout << "seed " << r.seed << ": mean final profit " << r.totals.mean_final_profit << ", completion rate "
                << r.totals.final_completion_rate << ", wrote " << r.directory.string() << '\n';
    return kOk;
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const sagin::ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return kUsage;
  } catch (const nn::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::runtime_error& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}
