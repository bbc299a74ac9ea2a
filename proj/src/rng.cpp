#include "fiem/rng.hpp"

#include <algorithm>

#include "fiem/errors.hpp"

namespace fiem {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

CounterRng::result_type CounterRng::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double CounterRng::uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

CounterRng substream(std::uint64_t seed, std::string_view name) {
  return CounterRng(mix64(mix64(seed) ^ fnv1a(name)));
}

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed ^ 0x5851F42D4C957F2DULL) + (index + 1) * kGolden);
}

std::size_t uniform_index(CounterRng& rng, std::size_t n) {
  if (n == 0) throw ArgumentError("uniform_index: empty range");
  // Lemire's multiply-shift with rejection; fixed arithmetic so that index
  // streams are identical across standard library implementations.
  const std::uint64_t range = n;
  unsigned __int128 product = static_cast<unsigned __int128>(rng()) * range;
  auto low = static_cast<std::uint64_t>(product);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      product = static_cast<unsigned __int128>(rng()) * range;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::size_t>(product >> 64);
}

std::vector<std::size_t> sample_with_replacement(CounterRng& rng, std::size_t n, std::size_t size) {
  std::vector<std::size_t> out(size);
  for (auto& index : out) index = uniform_index(rng, n);
  return out;
}

std::vector<std::size_t> sample_without_replacement(CounterRng& rng, std::size_t n, std::size_t size) {
  if (size > n) throw ArgumentError("sample_without_replacement: batch larger than population");
  std::vector<std::size_t> out;
  out.reserve(size);
  std::vector<bool> seen(n, false);
  while (out.size() < size) {
    const std::size_t index = uniform_index(rng, n);
    if (seen[index]) continue;
    seen[index] = true;
    out.push_back(index);
  }
  return out;
}

}  // namespace fiem
