#include "fiem/algorithms.hpp"

#include <numeric>

namespace fiem {

std::string_view algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::EM:
      return "em";
    case Algorithm::IEM:
      return "iem";
    case Algorithm::OnlineEM:
      return "online-em";
    case Algorithm::FIEM:
      return "fiem";
    case Algorithm::OptFIEM:
      return "opt-fiem";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "em") return Algorithm::EM;
  if (name == "iem") return Algorithm::IEM;
  if (name == "online-em" || name == "onlineem" || name == "oem") return Algorithm::OnlineEM;
  if (name == "fiem") return Algorithm::FIEM;
  if (name == "opt-fiem" || name == "optfiem") return Algorithm::OptFIEM;
  throw ArgumentError("unknown algorithm '" + std::string(name) + "'");
}

StepSchedule::StepSchedule(std::vector<double> gammas) : gammas_(std::move(gammas)) {
  for (double g : gammas_) {
    if (!(g > 0.0) || !std::isfinite(g)) throw ArgumentError("StepSchedule: step sizes must be positive");
  }
}

StepSchedule StepSchedule::constant(std::size_t k_max, double gamma) {
  return StepSchedule(std::vector<double>(k_max, gamma));
}

bool StepSchedule::is_constant() const {
  return std::all_of(gammas_.begin(), gammas_.end(), [&](double g) { return g == gammas_.front(); });
}

TerminationRule::TerminationRule(std::vector<double> weights) : weights_(std::move(weights)) {
  if (weights_.empty()) throw ArgumentError("TerminationRule: empty weights");
  double total = 0.0;
  cumulative_.reserve(weights_.size());
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("TerminationRule: negative weight");
    total += w;
    cumulative_.push_back(total);
  }
  if (std::abs(total - 1.0) > 1e-12) throw ArgumentError("TerminationRule: weights must sum to 1");
}

TerminationRule TerminationRule::uniform(std::size_t k_max) {
  if (k_max == 0) throw ArgumentError("TerminationRule: k_max must be positive");
  std::vector<double> w(k_max, 1.0 / static_cast<double>(k_max));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  w.back() += 1.0 - total;
  return TerminationRule(std::move(w));
}

TerminationRule TerminationRule::point_mass(std::size_t k_max, std::size_t index) {
  if (index >= k_max) throw ArgumentError("TerminationRule: point mass outside range");
  std::vector<double> w(k_max, 0.0);
  w[index] = 1.0;
  return TerminationRule(std::move(w));
}

double TerminationRule::max_weight() const {
  if (weights_.empty()) throw StateError("TerminationRule: empty");
  return *std::max_element(weights_.begin(), weights_.end());
}

std::size_t TerminationRule::sample(CounterRng& rng) const {
  if (weights_.empty()) throw StateError("TerminationRule: empty");
  const double u = rng.uniform01() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  std::size_t k = static_cast<std::size_t>(it - cumulative_.begin());
  if (k >= weights_.size()) k = weights_.size() - 1;
  while (weights_[k] == 0.0 && k > 0) --k;
  return k;
}

std::size_t examples_per_iteration(Algorithm algorithm, std::size_t n, std::size_t batch) {
  switch (algorithm) {
    case Algorithm::EM:
      return n;
    case Algorithm::IEM:
    case Algorithm::OnlineEM:
      return batch;
    case Algorithm::FIEM:
    case Algorithm::OptFIEM:
      return 2 * batch;
  }
  return 0;
}

std::size_t iterations_per_epoch(Algorithm algorithm, std::size_t n, std::size_t batch) {
  if (batch == 0) throw ArgumentError("iterations_per_epoch: batch must be positive");
  return std::max<std::size_t>(1, n / examples_per_iteration(algorithm, n, batch));
}

BatchSampling default_sampling(Algorithm algorithm) {
  return algorithm == Algorithm::OnlineEM ? BatchSampling::WithoutReplacement : BatchSampling::WithReplacement;
}

std::size_t HybridPlan::switch_iteration(std::size_t n) const {
  return kswitch_epochs * iterations_per_epoch(Algorithm::OnlineEM, n, batch_size);
}

std::size_t HybridPlan::total_iterations(std::size_t n) const {
  return switch_iteration(n) + (total_epochs - kswitch_epochs) * iterations_per_epoch(Algorithm::FIEM, n, batch_size);
}

}  // namespace fiem
