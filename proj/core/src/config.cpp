#include "sprl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "sprl/errors.hpp"

namespace sprl {

std::string to_string(EnvironmentKind e) {
  switch (e) {
    case EnvironmentKind::gate_precision:
      return "gate-precision";
    case EnvironmentKind::gate_global:
      return "gate-global";
    case EnvironmentKind::quadratic:
      return "quadratic";
  }
  return "unknown";
}

EnvironmentKind environment_from_string(const std::string& s) {
  if (s == "gate-precision") return EnvironmentKind::gate_precision;
  if (s == "gate-global") return EnvironmentKind::gate_global;
  if (s == "quadratic") return EnvironmentKind::quadratic;
  throw std::invalid_argument("unknown environment '" + s + "' (expected gate-precision, gate-global or quadratic)");
}

ExperimentConfig default_config(EnvironmentKind environment, Algorithm algorithm) {
  ExperimentConfig c;
  c.environment = environment;
  c.learner.algorithm = algorithm;
  for (std::uint64_t s = 1; s <= 10; ++s) c.seeds.push_back(s);
  LearnerConfig& l = c.learner;
  switch (environment) {
    case EnvironmentKind::gate_precision:
      l.epsilon = 0.4;
      l.zeta = 0.02;
      l.k_alpha = 140;
      l.buffer_size = 10;
      l.samples_per_iteration = 100;
      l.iterations = 200;
      l.target_mean = Eigen::Vector2d(2.5, 0.1);
      l.target_cov = Eigen::Vector2d(4e-2, 1.6e-3).asDiagonal();
      l.value_feature_grid = {5, 5};
      l.initial_policy_std = Vector::Constant(1, 2.0);
      break;
    case EnvironmentKind::gate_global:
      l.epsilon = 0.25;
      l.zeta = 0.002;
      l.k_alpha = 140;
      l.buffer_size = 10;
      l.samples_per_iteration = 100;
      l.iterations = 250;
      l.target_mean = Eigen::Vector2d(0.0, 4.0);
      l.target_cov = Eigen::Vector2d(4.0, 1.0).asDiagonal();
      l.value_feature_grid = {5, 5};
      l.initial_policy_std = Vector::Constant(1, 2.0);
      break;
    case EnvironmentKind::quadratic:
      l.epsilon = 0.5;
      l.zeta = 0.1;
      l.k_alpha = 10;
      l.buffer_size = 5;
      l.samples_per_iteration = 50;
      l.iterations = 30;
      l.target_mean = Vector::Zero(2);
      l.target_cov = 0.25 * Matrix::Identity(2, 2);
      l.value_feature_grid = {3, 3};
      l.initial_policy_std = Vector::Constant(1, 1.0);
      break;
  }
  return c;
}

namespace {

int line_of(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  return m.line >= 0 ? m.line + 1 : 0;
}

[[noreturn]] void fail(const std::string& field, const std::string& what, int line) {
  std::ostringstream msg;
  msg << field << ": " << what;
  if (line > 0) msg << " (line " << line << ")";
  throw ConfigError(msg.str(), field, line);
}

template <class T>
T scalar(const YAML::Node& n, const std::string& field, const char* expected) {
  if (!n.IsScalar()) fail(field, std::string("expected ") + expected, line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(field, std::string("expected ") + expected + ", got '" + n.Scalar() + "'", line_of(n));
  }
}

double real(const YAML::Node& n, const std::string& field) { return scalar<double>(n, field, "a number"); }
int integer(const YAML::Node& n, const std::string& field) { return scalar<int>(n, field, "an integer"); }
bool boolean(const YAML::Node& n, const std::string& field) { return scalar<bool>(n, field, "true or false"); }
std::string string_value(const YAML::Node& n, const std::string& field) { return scalar<std::string>(n, field, "a string"); }

/// A number or a list of numbers.
Vector real_vector(const YAML::Node& n, const std::string& field) {
  if (n.IsScalar()) return Vector::Constant(1, real(n, field));
  if (!n.IsSequence()) fail(field, "expected a number or a list of numbers", line_of(n));
  Vector v(static_cast<Index>(n.size()));
  for (std::size_t i = 0; i < n.size(); ++i) v[static_cast<Index>(i)] = real(n[i], field);
  return v;
}

Matrix real_matrix(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence() || n.size() == 0) fail(field, "expected a list of rows", line_of(n));
  const std::size_t rows = n.size();
  std::size_t cols = 0;
  Matrix m;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!n[i].IsSequence()) fail(field, "expected a list of rows", line_of(n[i]));
    if (i == 0) {
      cols = n[i].size();
      m.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    } else if (n[i].size() != cols) {
      fail(field, "rows have different lengths", line_of(n[i]));
    }
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = real(n[i][j], field);
  }
  return m;
}

std::vector<int> int_list(const YAML::Node& n, const std::string& field) {
  if (n.IsScalar()) return {integer(n, field)};
  if (!n.IsSequence()) fail(field, "expected an integer or a list of integers", line_of(n));
  std::vector<int> out;
  for (const auto& e : n) out.push_back(integer(e, field));
  return out;
}

std::vector<std::uint64_t> seed_list(const YAML::Node& n, const std::string& field) {
  if (!n.IsSequence()) fail(field, "expected a list of non-negative integers", line_of(n));
  std::vector<std::uint64_t> out;
  for (const auto& e : n) {
    if (e.IsScalar() && !e.Scalar().empty() && e.Scalar().front() == '-') {
      fail(field, "seeds must be non-negative", line_of(e));
    }
    out.push_back(scalar<std::uint64_t>(e, field, "a non-negative integer"));
  }
  return out;
}

const YAML::Node& require_map(const YAML::Node& n, const std::string& field) {
  if (!n.IsMap()) fail(field, "expected a mapping", line_of(n));
  return n;
}

void parse_target(const YAML::Node& n, LearnerConfig& l) {
  require_map(n, "target");
  bool has_variance = false;
  bool has_covariance = false;
  for (const auto& kv : n) {
    const std::string key = kv.first.Scalar();
    const std::string field = "target." + key;
    if (key == "mean") {
      l.target_mean = real_vector(kv.second, field);
    } else if (key == "variance") {
      l.target_cov = real_vector(kv.second, field).asDiagonal();
      has_variance = true;
    } else if (key == "covariance") {
      l.target_cov = real_matrix(kv.second, field);
      has_covariance = true;
    } else {
      fail(field, "unknown key", line_of(kv.first));
    }
  }
  if (has_variance && has_covariance) fail("target", "give either variance or covariance, not both", line_of(n));
}

void parse_initial_sampler(const YAML::Node& n, LearnerConfig& l) {
  require_map(n, "initial_sampler");
  for (const auto& kv : n) {
    const std::string key = kv.first.Scalar();
    const std::string field = "initial_sampler." + key;
    if (key == "mean") {
      l.initial_sampler_mean = real_vector(kv.second, field);
    } else if (key == "std") {
      l.initial_sampler_std = real_vector(kv.second, field);
    } else {
      fail(field, "unknown key", line_of(kv.first));
    }
  }
}

void apply(const std::string& key, const YAML::Node& value, ExperimentConfig& c) {
  LearnerConfig& l = c.learner;
  if (key == "version") {
    if (integer(value, key) != kConfigVersion) {
      fail(key, "unsupported version (expected " + std::to_string(kConfigVersion) + ")", line_of(value));
    }
  } else if (key == "algorithm" || key == "environment") {
    // consumed before defaults are chosen
  } else if (key == "epsilon") {
    l.epsilon = real(value, key);
  } else if (key == "zeta") {
    l.zeta = real(value, key);
  } else if (key == "k_alpha") {
    l.k_alpha = integer(value, key);
  } else if (key == "buffer_size") {
    l.buffer_size = integer(value, key);
  } else if (key == "samples_per_iteration") {
    l.samples_per_iteration = integer(value, key);
  } else if (key == "iterations") {
    l.iterations = integer(value, key);
  } else if (key == "eval_contexts") {
    l.eval_contexts = integer(value, key);
  } else if (key == "seeds") {
    c.seeds = seed_list(value, key);
  } else if (key == "value_features") {
    l.value_feature_grid = int_list(value, key);
  } else if (key == "target") {
    parse_target(value, l);
  } else if (key == "initial_sampler") {
    parse_initial_sampler(value, l);
  } else if (key == "initial_policy_std") {
    l.initial_policy_std = real_vector(value, key);
  } else if (key == "context_variance_floor") {
    l.context_variance_floor = real_vector(value, key);
  } else if (key == "importance_clip") {
    l.importance_clip = real(value, key);
  } else if (key == "corrected_policy_weights") {
    l.corrected_policy_weights = boolean(value, key);
  } else if (key == "bound_reverse_context_kl") {
    l.bound_reverse_context_kl = boolean(value, key);
  } else if (key == "evaluate_policy_mean") {
    l.evaluate_policy_mean = boolean(value, key);
  } else if (key == "alpha") {
    if (value.IsNull()) {
      l.alpha_override.reset();
    } else {
      l.alpha_override = real(value, key);
    }
  } else if (key == "kappa") {
    c.kappa = real(value, key);
  } else if (key == "nu") {
    c.nu = real(value, key);
  } else if (key == "tau") {
    c.tau = real(value, key);
  } else {
    fail(key, "unknown key", line_of(value));
  }
}

Index context_dim(EnvironmentKind) { return 2; }

Index param_dim(EnvironmentKind e) { return e == EnvironmentKind::quadratic ? 2 : GateParams::kDim; }

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what, field);
}

bool positive(const Vector& v) { return v.size() > 0 && v.allFinite() && (v.array() > 0.0).all(); }

}  // namespace

void validate(const ExperimentConfig& c) {
  const LearnerConfig& l = c.learner;
  const Index dc = context_dim(c.environment);
  const Index dp = param_dim(c.environment);
  require(std::isfinite(l.epsilon) && l.epsilon > 0.0, "epsilon", "must be positive");
  require(std::isfinite(l.zeta) && l.zeta >= 0.0, "zeta", "must be non-negative");
  require(l.k_alpha >= 0, "k_alpha", "must be non-negative");
  require(l.buffer_size >= 1, "buffer_size", "must be at least 1");
  require(l.samples_per_iteration >= 4, "samples_per_iteration", "must be at least 4");
  require(l.iterations >= 1, "iterations", "must be at least 1");
  require(l.eval_contexts >= 1, "eval_contexts", "must be at least 1");
  require(!c.seeds.empty(), "seeds", "must not be empty");
  require(std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() == c.seeds.size(), "seeds",
          "must be distinct");
  require(l.target_mean.size() == dc && l.target_mean.allFinite(), "target.mean",
          "must have " + std::to_string(dc) + " finite entries");
  require(l.target_cov.rows() == dc && l.target_cov.cols() == dc && l.target_cov.allFinite(), "target.covariance",
          "must be " + std::to_string(dc) + "x" + std::to_string(dc));
  try {
    (void)l.target();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("target.covariance: ") + e.what(), "target.covariance");
  }
  require(static_cast<Index>(l.value_feature_grid.size()) == dc, "value_features",
          "needs one count per context dimension");
  require(std::all_of(l.value_feature_grid.begin(), l.value_feature_grid.end(), [](int n) { return n >= 1; }),
          "value_features", "counts must be at least 1");
  require(l.initial_sampler_mean.size() == 0 || (l.initial_sampler_mean.size() == dc && l.initial_sampler_mean.allFinite()),
          "initial_sampler.mean", "must have " + std::to_string(dc) + " finite entries");
  require(l.initial_sampler_std.size() == 0 ||
              ((l.initial_sampler_std.size() == 1 || l.initial_sampler_std.size() == dc) && positive(l.initial_sampler_std)),
          "initial_sampler.std", "must be positive with 1 or " + std::to_string(dc) + " entries");
  require((l.initial_policy_std.size() == 1 || l.initial_policy_std.size() == dp) && positive(l.initial_policy_std),
          "initial_policy_std", "must be positive with 1 or " + std::to_string(dp) + " entries");
  require((l.context_variance_floor.size() == 1 || l.context_variance_floor.size() == dc) &&
              positive(l.context_variance_floor),
          "context_variance_floor", "must be positive with 1 or " + std::to_string(dc) + " entries");
  require(std::isfinite(l.importance_clip) && l.importance_clip > 0.0, "importance_clip", "must be positive");
  require(!l.alpha_override || (std::isfinite(*l.alpha_override) && *l.alpha_override >= 0.0), "alpha",
          "must be non-negative");
  require(std::isfinite(c.kappa) && c.kappa > 0.0, "kappa", "must be positive");
  require(std::isfinite(c.nu) && c.nu >= 0.0, "nu", "must be non-negative");
  require(std::isfinite(c.tau) && c.tau > 0.0, "tau", "must be positive");
}

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    const int line = e.mark.line >= 0 ? e.mark.line + 1 : 0;
    throw ConfigError("parse error at line " + std::to_string(line) + ": " + e.msg, "", line);
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping of keys to values", "", line_of(root));

  const YAML::Node algorithm = root["algorithm"];
  const YAML::Node environment = root["environment"];
  if (!algorithm) throw ConfigError("algorithm: required key missing", "algorithm");
  if (!environment) throw ConfigError("environment: required key missing", "environment");
  Algorithm a{};
  EnvironmentKind e{};
  try {
    a = algorithm_from_string(string_value(algorithm, "algorithm"));
  } catch (const std::invalid_argument& ex) {
    fail("algorithm", ex.what(), line_of(algorithm));
  }
  try {
    e = environment_from_string(string_value(environment, "environment"));
  } catch (const std::invalid_argument& ex) {
    fail("environment", ex.what(), line_of(environment));
  }

  ExperimentConfig c = default_config(e, a);
  for (const auto& kv : root) {
    if (!kv.first.IsScalar()) fail("<key>", "keys must be plain strings", line_of(kv.first));
    apply(kv.first.Scalar(), kv.second, c);
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

namespace {

nlohmann::json vector_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(m.row(i).transpose()));
  return out;
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  const LearnerConfig& l = c.learner;
  nlohmann::json j;
  j["version"] = kConfigVersion;
  j["algorithm"] = to_string(l.algorithm);
  j["environment"] = to_string(c.environment);
  j["epsilon"] = l.epsilon;
  j["zeta"] = l.zeta;
  j["k_alpha"] = l.k_alpha;
  j["buffer_size"] = l.buffer_size;
  j["samples_per_iteration"] = l.samples_per_iteration;
  j["iterations"] = l.iterations;
  j["eval_contexts"] = l.eval_contexts;
  j["seeds"] = c.seeds;
  j["value_features"] = l.value_feature_grid;
  j["target"] = {{"mean", vector_json(l.target_mean)}, {"covariance", matrix_json(l.target_cov)}};
  if (l.initial_sampler_mean.size() || l.initial_sampler_std.size()) {
    nlohmann::json s = nlohmann::json::object();
    if (l.initial_sampler_mean.size()) s["mean"] = vector_json(l.initial_sampler_mean);
    if (l.initial_sampler_std.size()) s["std"] = vector_json(l.initial_sampler_std);
    j["initial_sampler"] = s;
  }
  j["initial_policy_std"] = vector_json(l.initial_policy_std);
  j["context_variance_floor"] = vector_json(l.context_variance_floor);
  j["importance_clip"] = l.importance_clip;
  j["corrected_policy_weights"] = l.corrected_policy_weights;
  j["bound_reverse_context_kl"] = l.bound_reverse_context_kl;
  j["evaluate_policy_mean"] = l.evaluate_policy_mean;
  j["alpha"] = l.alpha_override ? nlohmann::json(*l.alpha_override) : nlohmann::json(nullptr);
  j["kappa"] = c.kappa;
  j["nu"] = c.nu;
  j["tau"] = c.tau;
  return j;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return to_json(a) == to_json(b); }

std::unique_ptr<Environment> make_environment(const ExperimentConfig& c) {
  if (c.environment == EnvironmentKind::quadratic) return std::make_unique<QuadraticEnvironment>();
  GateSettings s;
  s.kappa = c.kappa;
  s.nu = c.nu;
  s.tau = c.tau;
  return std::make_unique<GateEnvironment>(s);
}

}  // namespace sprl
