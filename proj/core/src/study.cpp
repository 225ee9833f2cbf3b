#include "sprl/study.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#ifndef SPRL_VERSION
#define SPRL_VERSION "0.0.0"
#endif
#ifndef SPRL_GIT_COMMIT
#define SPRL_GIT_COMMIT "unknown"
#endif

namespace sprl {

std::string version_string() { return SPRL_VERSION; }
std::string commit_string() { return SPRL_GIT_COMMIT; }

std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

QuantileBand quantile_band(const std::vector<double>& values) {
  return {quantile(values, 0.1), quantile(values, 0.5), quantile(values, 0.9)};
}

StudySummary summarize(const std::vector<RunOutcome>& runs) {
  std::vector<const RunOutcome*> ok;
  for (const auto& r : runs) {
    if (r.ok) ok.push_back(&r);
  }
  if (ok.empty()) throw std::invalid_argument("no successful runs to summarize");
  const std::size_t k = ok.front()->records.size();
  for (const auto* r : ok) {
    if (r->records.size() != k) {
      throw std::invalid_argument("runs have inconsistent iteration counts (" + std::to_string(k) + " vs " +
                                  std::to_string(r->records.size()) + " for seed " + std::to_string(r->seed) + ")");
    }
  }

  StudySummary s;
  s.rows.reserve(k);
  std::vector<double> reward(ok.size()), success(ok.size()), alpha(ok.size());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < ok.size(); ++j) {
      const IterationRecord& rec = ok[j]->records[i];
      reward[j] = rec.eval_reward;
      success[j] = rec.success_rate;
      alpha[j] = rec.alpha;
    }
    s.rows.push_back({ok.front()->records[i].iteration, quantile_band(reward), quantile_band(success),
                      quantile_band(alpha)});
  }
  for (const auto* r : ok) {
    s.seeds.push_back(r->seed);
    if (r->final_sampler) s.final_samplers.push_back({r->seed, r->final_sampler->mean(), r->final_sampler->cov()});
  }
  return s;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_number(const std::string& s, const std::filesystem::path& file, int line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument(file.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<IterationRecord> read_run_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kRunCsvHeader) {
    throw std::invalid_argument(path.string() + ": unexpected header");
  }
  std::vector<IterationRecord> out;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 7) throw std::invalid_argument(path.string() + ":" + std::to_string(n) + ": expected 7 columns");
    IterationRecord r;
    r.iteration = static_cast<int>(parse_number(cells[0], path, n));
    r.mean_reward = parse_number(cells[1], path, n);
    r.eval_reward = parse_number(cells[2], path, n);
    r.success_rate = parse_number(cells[3], path, n);
    r.alpha = parse_number(cells[4], path, n);
    r.kl_to_target = parse_number(cells[5], path, n);
    r.trust_region_kl = parse_number(cells[6], path, n);
    out.push_back(r);
  }
  return out;
}

std::map<std::uint64_t, FinalSampler> read_final_samplers(const std::filesystem::path& path) {
  std::map<std::uint64_t, FinalSampler> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  if (!std::getline(in, line)) return out;
  const auto header = split_csv(line);
  const auto cols = static_cast<Index>(header.size()) - 1;
  // d + d^2 columns after the seed
  Index d = 0;
  while (d + d * d < cols) ++d;
  if (d + d * d != cols) throw std::invalid_argument(path.string() + ": unexpected header");
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != cols + 1) throw std::invalid_argument(path.string() + ": ragged row");
    FinalSampler f;
    f.seed = static_cast<std::uint64_t>(std::stoull(cells[0]));
    f.mean.resize(d);
    f.cov.resize(d, d);
    for (Index i = 0; i < d; ++i) f.mean[i] = parse_number(cells[1 + static_cast<std::size_t>(i)], path, n);
    for (Index i = 0; i < d * d; ++i) {
      f.cov(i / d, i % d) = parse_number(cells[1 + static_cast<std::size_t>(d + i)], path, n);
    }
    out[f.seed] = f;
  }
  return out;
}

}  // namespace

void write_run_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& records) {
  std::ofstream out = open_for_write(path);
  out << kRunCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.iteration << ',' << format_number(r.mean_reward) << ',' << format_number(r.eval_reward) << ','
        << format_number(r.success_rate) << ',' << format_number(r.alpha) << ',' << format_number(r.kl_to_target)
        << ',' << format_number(r.trust_region_kl) << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path, const StudySummary& summary) {
  std::ofstream out = open_for_write(path);
  out << kSummaryCsvHeader << '\n';
  for (const auto& row : summary.rows) {
    out << row.iteration;
    for (const QuantileBand* b : {&row.eval_reward, &row.success_rate, &row.alpha}) {
      out << ',' << format_number(b->q10) << ',' << format_number(b->q50) << ',' << format_number(b->q90);
    }
    out << '\n';
  }
}

void write_final_samplers_csv(const std::filesystem::path& path, const std::vector<FinalSampler>& samplers) {
  if (samplers.empty()) return;
  const Index d = samplers.front().mean.size();
  std::ofstream out = open_for_write(path);
  out << "seed";
  for (Index i = 0; i < d; ++i) out << ",mean_" << i;
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) out << ",cov_" << i << '_' << j;
  }
  out << '\n';
  for (const auto& f : samplers) {
    out << f.seed;
    for (Index i = 0; i < d; ++i) out << ',' << format_number(f.mean[i]);
    for (Index i = 0; i < d; ++i) {
      for (Index j = 0; j < d; ++j) out << ',' << format_number(f.cov(i, j));
    }
    out << '\n';
  }
}

StudySummary summarize(const std::filesystem::path& dir) {
  const std::filesystem::path runs_dir = dir / "runs";
  if (!std::filesystem::is_directory(runs_dir)) throw std::invalid_argument("no runs/ directory in " + dir.string());
  std::map<std::uint64_t, std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("seed_", 0) != 0 || entry.path().extension() != ".csv") continue;
    const std::string digits = name.substr(5, name.size() - 9);
    std::uint64_t seed = 0;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) continue;
    files[seed] = entry.path();
  }
  if (files.empty()) throw std::invalid_argument("no run files in " + runs_dir.string());

  const auto finals = read_final_samplers(dir / "final_samplers.csv");
  std::vector<RunOutcome> runs;
  for (const auto& [seed, path] : files) {
    RunOutcome r;
    r.seed = seed;
    r.ok = true;
    r.records = read_run_csv(path);
    if (auto it = finals.find(seed); it != finals.end()) r.final_sampler = Gaussian(it->second.mean, it->second.cov);
    runs.push_back(std::move(r));
  }
  return summarize(runs);
}

namespace {

RunOutcome run_one(const ExperimentConfig& config, const Environment& env, std::uint64_t seed,
                   const StudyOptions& options) {
  RunOutcome out;
  out.seed = seed;
  try {
    Matrix eval_contexts;
    out.records = run(config.learner, env, seed, [&](const LearnerState& s, const IterationRecord& r) {
      if (r.iteration == config.learner.iterations) {
        out.final_sampler = s.sampler;
        out.final_policy = s.policy;
        eval_contexts = s.eval_contexts;
      }
    });
    out.ok = true;
    if (options.debug_trajectories && !options.out_dir.empty() && out.final_policy) {
      const Index n = std::min<Index>(10, eval_contexts.rows());
      const RandomStream root = RandomStream(seed).split(0xdeb9);
      for (Index j = 0; j < n; ++j) {
        const Vector c = eval_contexts.row(j).transpose();
        RandomStream rng = root.split(static_cast<std::uint64_t>(j));
        const RolloutResult r = env.rollout(out.final_policy->mean(c), c, rng, true);
        if (r.trajectory.empty()) continue;
        write_trajectory_csv(options.out_dir / "trajectories" / ("seed_" + std::to_string(seed)) /
                                 ("rollout_" + std::to_string(j) + ".csv"),
                             r.trajectory);
      }
    }
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.records.clear();
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const ExperimentConfig& config,
                    const std::vector<RunOutcome>& runs) {
  nlohmann::json m;
  m["format"] = 1;
  m["version"] = version_string();
  m["commit"] = commit_string();
  m["config"] = to_json(config);
  m["seeds"] = config.seeds;
  nlohmann::json completed = nlohmann::json::array();
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& r : runs) {
    if (r.ok) {
      completed.push_back(r.seed);
    } else {
      failed.push_back({{"seed", r.seed}, {"error", r.error}});
    }
  }
  m["completed_seeds"] = completed;
  m["failed_seeds"] = failed;
  std::ofstream out = open_for_write(path);
  out << m.dump(2) << '\n';
}

}  // namespace

StudyResult run_study(const ExperimentConfig& config, const StudyOptions& options) {
  validate(config);
  const std::unique_ptr<Environment> owned = options.environment ? nullptr : make_environment(config);
  const Environment* env = options.environment ? options.environment : owned.get();
  const auto warn = options.warn ? options.warn : [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };

  StudyResult result;
  result.runs.resize(config.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      result.runs[i] = run_one(config, *env, config.seeds[i], options);
    }
  };
  const auto jobs = static_cast<std::size_t>(std::clamp<int>(options.jobs, 1, static_cast<int>(config.seeds.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  for (const auto& r : result.runs) {
    if (!r.ok) warn("seed " + std::to_string(r.seed) + " failed and is excluded: " + r.error);
  }
  const bool any_ok = std::any_of(result.runs.begin(), result.runs.end(), [](const RunOutcome& r) { return r.ok; });
  if (any_ok) result.summary = summarize(result.runs);

  if (!options.out_dir.empty()) {
    for (const auto& r : result.runs) {
      if (r.ok) write_run_csv(options.out_dir / "runs" / ("seed_" + std::to_string(r.seed) + ".csv"), r.records);
    }
    if (any_ok) {
      write_summary_csv(options.out_dir / "summary.csv", result.summary);
      write_final_samplers_csv(options.out_dir / "final_samplers.csv", result.summary.final_samplers);
    }
    write_manifest(options.out_dir / "manifest.json", config, result.runs);
  }
  return result;
}

}  // namespace sprl
