#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fiem::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// suite: theorem1 | prop2 | identities | all; scale: desk | paper.
std::vector<CheckResult> run_check_suite(std::string_view suite, std::string_view scale, std::uint64_t seed,
                                         std::size_t threads);

}  // namespace fiem::cli
