#include "fiem/model.hpp"

#include <algorithm>
#include <numeric>

namespace fiem {

ModelConstants ModelConstants::make(double v_min, double v_max, std::vector<double> lipschitz_i,
                                    double lipschitz_gradv) {
  ModelConstants out;
  out.v_min = v_min;
  out.v_max = v_max;
  out.lipschitz_i = std::move(lipschitz_i);
  out.lipschitz_gradv = lipschitz_gradv;
  if (out.lipschitz_i.empty()) throw ArgumentError("ModelConstants: empty Lipschitz list");
  double sum_sq = 0.0;
  for (double l : out.lipschitz_i) sum_sq += l * l;
  out.lipschitz_rms = std::sqrt(sum_sq / static_cast<double>(out.lipschitz_i.size()));
  out.validate();
  return out;
}

void ModelConstants::validate() const {
  if (!(v_min > 0.0) || !(v_min <= v_max) || !std::isfinite(v_max)) {
    throw ConfigurationError("ModelConstants: need 0 < v_min <= v_max");
  }
  if (!(lipschitz_gradv > 0.0) || !std::isfinite(lipschitz_gradv)) {
    throw ConfigurationError("ModelConstants: L_Vdot must be positive");
  }
  if (lipschitz_i.empty()) throw ConfigurationError("ModelConstants: empty Lipschitz list");
  double sum_sq = 0.0;
  for (double l : lipschitz_i) {
    if (!(l > 0.0) || !std::isfinite(l)) throw ConfigurationError("ModelConstants: L_i must be positive");
    sum_sq += l * l;
  }
  const double mean_sq = sum_sq / static_cast<double>(lipschitz_i.size());
  if (std::abs(lipschitz_rms * lipschitz_rms - mean_sq) > 1e-12 * mean_sq) {
    throw ConfigurationError("ModelConstants: L^2 differs from the mean of L_i^2");
  }
}

double ModelConstants::max_lipschitz_i() const {
  if (lipschitz_i.empty()) throw ConfigurationError("ModelConstants: empty Lipschitz list");
  return *std::max_element(lipschitz_i.begin(), lipschitz_i.end());
}

}  // namespace fiem
