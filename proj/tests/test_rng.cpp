#include <doctest.h>

#include <algorithm>
#include <set>

#include "fiem/rng.hpp"

using namespace fiem;

TEST_CASE("counter streams are pure functions of key and position") {
  CounterRng a(42);
  CounterRng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  CounterRng skipped(42, 50);
  CounterRng walked(42);
  for (int i = 0; i < 50; ++i) walked();
  CHECK(skipped() == walked());
}

TEST_CASE("named substreams and child seeds differ") {
  CHECK(substream(7, streams::kIndicesI)() != substream(7, streams::kIndicesJ)());
  CHECK(substream(7, streams::kIndicesI)() == substream(7, streams::kIndicesI)());
  std::set<std::uint64_t> seeds;
  for (std::uint64_t r = 0; r < 1000; ++r) seeds.insert(child_seed(3, r));
  CHECK(seeds.size() == 1000);
}

TEST_CASE("uniform01 lies in [0, 1) with the right mean") {
  CounterRng rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 100000.0 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("uniform_index is unbiased on a small range") {
  CounterRng rng(9);
  std::vector<int> counts(7, 0);
  const int draws = 70000;
  for (int i = 0; i < draws; ++i) ++counts[uniform_index(rng, 7)];
  for (int c : counts) CHECK(std::abs(c - draws / 7) < 5 * 100);
}

TEST_CASE("sampling with and without replacement") {
  CounterRng a(5);
  const auto with = sample_with_replacement(a, 10, 1000);
  CHECK(std::all_of(with.begin(), with.end(), [](std::size_t i) { return i < 10; }));

  CounterRng b(5);
  CounterRng c(5);
  const auto without = sample_without_replacement(b, 10, 10);
  std::set<std::size_t> distinct(without.begin(), without.end());
  CHECK(distinct.size() == 10);
  CHECK(without.front() == sample_with_replacement(c, 10, 1).front());
}
