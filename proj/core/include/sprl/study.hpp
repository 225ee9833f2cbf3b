#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sprl/config.hpp"
#include "sprl/curriculum.hpp"

namespace sprl {

/// Linear interpolation between order statistics at h = (n - 1) p.
double quantile(std::vector<double> values, double p);

struct QuantileBand {
  double q10 = 0.0;
  double q50 = 0.0;
  double q90 = 0.0;
};

QuantileBand quantile_band(const std::vector<double>& values);

struct SummaryRow {
  int iteration = 0;
  QuantileBand eval_reward;
  QuantileBand success_rate;
  QuantileBand alpha;
};

struct FinalSampler {
  std::uint64_t seed = 0;
  Vector mean;
  Matrix cov;
};

struct StudySummary {
  std::vector<SummaryRow> rows;
  std::vector<FinalSampler> final_samplers;
  std::vector<std::uint64_t> seeds;  ///< seeds that contributed
};

struct RunOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<IterationRecord> records;
  std::optional<Gaussian> final_sampler;
  std::optional<LinearGaussianConditional> final_policy;
};

struct StudyOptions {
  /// Empty: nothing is written.
  std::filesystem::path out_dir;
  int jobs = 1;
  bool debug_trajectories = false;
  /// Warnings about failed seeds; defaults to stderr.
  std::function<void(const std::string&)> warn;
  /// Replaces the environment the config names; must outlive the call.
  const Environment* environment = nullptr;
};

struct StudyResult {
  std::vector<RunOutcome> runs;  ///< in config seed order
  StudySummary summary;
};

/// Quantiles over the successful runs. Throws std::invalid_argument if there
/// are none or if their iteration counts differ.
StudySummary summarize(const std::vector<RunOutcome>& runs);

/// Reads runs/seed_*.csv (and final_samplers.csv when present) from a study
/// directory.
StudySummary summarize(const std::filesystem::path& dir);

StudyResult run_study(const ExperimentConfig& config, const StudyOptions& options = {});

inline const char* const kRunCsvHeader = "k,mean_reward,eval_reward,success_rate,alpha,kl_to_target,trust_region_kl";
inline const char* const kSummaryCsvHeader =
    "k,eval_reward_q10,eval_reward_q50,eval_reward_q90,success_rate_q10,success_rate_q50,success_rate_q90,"
    "alpha_q10,alpha_q50,alpha_q90";

void write_run_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& records);
void write_summary_csv(const std::filesystem::path& path, const StudySummary& summary);
void write_final_samplers_csv(const std::filesystem::path& path, const std::vector<FinalSampler>& samplers);

/// Shortest text that reads back to the same double.
std::string format_number(double x);

std::string version_string();
std::string commit_string();

}  // namespace sprl
