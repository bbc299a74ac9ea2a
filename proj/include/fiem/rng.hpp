#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace fiem {

// Counter-based generator: the j-th output is a pure function of (key, j), so
// a stream can be reproduced, skipped or split without shared state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

// Named substreams used by the engines. Algorithms that consume a different
// number of draws per iteration still see aligned index sequences because each
// role owns its own stream.
namespace streams {
inline constexpr std::string_view kIndicesI = "indices-I";
inline constexpr std::string_view kIndicesJ = "indices-J";
inline constexpr std::string_view kTermination = "termination";
inline constexpr std::string_view kData = "data";
}  // namespace streams

std::uint64_t mix64(std::uint64_t x);

// Stream keyed by (seed, name).
CounterRng substream(std::uint64_t seed, std::string_view name);

// Seed of replica `index` derived from a parent seed.
std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index);

// Uniform index in [0, n).
std::size_t uniform_index(CounterRng& rng, std::size_t n);

// `size` indices drawn uniformly from [0, n) with replacement.
std::vector<std::size_t> sample_with_replacement(CounterRng& rng, std::size_t n, std::size_t size);

// `size` distinct indices; draws are rejected until unseen, so the first index
// coincides with the first draw of sample_with_replacement on the same stream.
std::vector<std::size_t> sample_without_replacement(CounterRng& rng, std::size_t n, std::size_t size);

}  // namespace fiem
