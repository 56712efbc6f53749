#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace arsls {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

/// One labelled random stream. Draw helpers avoid std distributions so the
/// sequence is identical on every standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::mt19937_64 engine_;
};

/// Root generator that hands out independent substreams keyed by label, so
/// adding a new draw site never perturbs the existing ones.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  RngStream& stream(std::string_view label);

  friend bool operator==(const SplitRng&, const SplitRng&) = default;

 private:
  std::uint64_t seed_;
  std::map<std::string, RngStream, std::less<>> streams_;
};

}  // namespace arsls
