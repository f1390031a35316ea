#pragma once

#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tape {

using ObsKey = std::string;
using StateKey = std::string;
using JointAction = std::vector<int>;

/// Thrown when a configuration value violates a documented bound.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a caller breaks an operation precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 1469598103934665603ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

/// A privately owned random stream. Components (environment, exploration,
/// topology sampling, search, ...) each derive their own stream from the
/// master seed so they cannot perturb one another's draw sequences.
class RngStream {
 public:
  RngStream() : engine_(0) {}
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  static RngStream derive(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0) {
    std::uint64_t s = fnv1a64(tag);
    s ^= master + 0x9e3779b97f4a7c15ULL;
    s ^= index * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL;
    std::uint64_t seed = splitmix64(s);
    return RngStream(seed);
  }

  std::mt19937_64& engine() { return engine_; }

  double uniform01() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

 private:
  std::mt19937_64 engine_;
};

/// Fixed formatting used by every CSV writer so reruns are byte-identical.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::string(buf);
}

/// Round-trip-exact formatting for checkpoints.
inline std::string format_double_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace tape
