#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace condmkv {

enum class Purpose : std::uint32_t {
  initial = 1,
  common_noise = 2,
  individual_noise = 3,
  coupling = 4,
  direction = 5,
  bootstrap = 6,
  generic = 7,
};

/// Structured identity of a random stream. Two distinct ids give
/// independent streams under the same master seed.
struct StreamId {
  std::uint64_t experiment = 0;
  std::uint64_t replication = 0;
  std::uint64_t particle = 0;
  Purpose purpose = Purpose::generic;
};

/// Stable 64-bit tag for an experiment name (FNV-1a).
std::uint64_t experiment_tag(std::string_view name) noexcept;

/// Counter-based stream: the n-th output is a pure function of
/// (seed, id, n), so results never depend on how work is scheduled.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, const StreamId& id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace condmkv
