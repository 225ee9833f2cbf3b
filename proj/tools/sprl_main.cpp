#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sprl/config.hpp"
#include "sprl/errors.hpp"
#include "sprl/study.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

void print_final_row(const sprl::StudySummary& s) {
  if (s.rows.empty()) return;
  const auto& r = s.rows.back();
  std::cout << "final iteration " << r.iteration << " over " << s.seeds.size() << " seed(s)\n"
            << "  eval reward   q10 " << r.eval_reward.q10 << "  q50 " << r.eval_reward.q50 << "  q90 "
            << r.eval_reward.q90 << '\n'
            << "  success rate  q10 " << r.success_rate.q10 << "  q50 " << r.success_rate.q50 << "  q90 "
            << r.success_rate.q90 << '\n';
}

int cmd_run(const std::string& config_path, const std::vector<std::uint64_t>& seeds, std::string out_dir, int jobs,
            bool debug_trajectories) {
  sprl::ExperimentConfig config;
  try {
    config = sprl::load_config(config_path);
    if (!seeds.empty()) {
      config.seeds = seeds;
      sprl::validate(config);
    }
  } catch (const sprl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  if (out_dir.empty()) out_dir = "results/" + to_string(config.environment) + "-" + to_string(config.learner.algorithm);

  sprl::StudyOptions options;
  options.out_dir = out_dir;
  options.jobs = jobs;
  options.debug_trajectories = debug_trajectories;
  try {
    const sprl::StudyResult result = sprl::run_study(config, options);
    if (result.summary.rows.empty()) {
      std::cerr << "error: every seed failed\n";
      return kExitRuntime;
    }
    print_final_row(result.summary);
    std::cout << "wrote " << out_dir << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_summarize(const std::string& dir) {
  try {
    const sprl::StudySummary s = sprl::summarize(std::filesystem::path(dir));
    std::cout << sprl::kSummaryCsvHeader << '\n';
    for (const auto& r : s.rows) {
      std::cout << r.iteration;
      for (const auto* b : {&r.eval_reward, &r.success_rate, &r.alpha}) {
        std::cout << ',' << sprl::format_number(b->q10) << ',' << sprl::format_number(b->q50) << ','
                  << sprl::format_number(b->q90);
      }
      std::cout << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_validate(const std::string& config_path) {
  try {
    const sprl::ExperimentConfig config = sprl::load_config(config_path);
    std::cout << sprl::to_json(config).dump(2) << '\n';
  } catch (const sprl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-paced contextual policy search experiments"};
  app.set_version_flag("--version", sprl::version_string() + " (" + sprl::commit_string() + ")");
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int jobs = 1;
  bool debug_trajectories = false;
  auto* run = app.add_subcommand("run", "Run every seed of a study and write CSVs and a manifest");
  run->add_option("config", config_path, "Experiment config (YAML)")->required();
  run->add_option("--seeds", seeds, "Override the config's seed list")->delimiter(',');
  run->add_option("--out-dir", out_dir, "Output directory (default results/<environment>-<algorithm>)");
  run->add_option("--jobs", jobs, "Seeds to run in parallel")->check(CLI::PositiveNumber);
  run->add_flag("--debug-trajectories", debug_trajectories, "Dump final-policy rollouts as CSV");

  std::string summarize_dir;
  auto* summarize = app.add_subcommand("summarize", "Print quantiles over the runs in a study directory");
  summarize->add_option("dir", summarize_dir, "Study output directory")->required();

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  validate->add_option("config", validate_path, "Experiment config (YAML)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  if (*run) return cmd_run(config_path, seeds, out_dir, jobs, debug_trajectories);
  if (*summarize) return cmd_summarize(summarize_dir);
  return cmd_validate(validate_path);
}
