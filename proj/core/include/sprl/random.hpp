#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace sprl {

/// Counter-based random stream.
///
/// Each output is a SplitMix64 hash of (key, counter), so a stream is fully
/// described by two integers and child streams can be derived without
/// touching the parent. All randomness in a run descends from one seed
/// through `split`.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Independent child stream; does not advance this stream.
  [[nodiscard]] RandomStream split(std::uint64_t index) const;

  double uniform();
  double normal();
  Eigen::VectorXd normal_vector(Eigen::Index n);

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace sprl
