#pragma once

// EM, incremental EM, Online EM, FIEM and opt-FIEM in the expectation space.
//
// Every stochastic method is a stochastic-approximation update
//   S^{k+1} = S^k + gamma_{k+1} * (oracle - S^k + lambda * control),
// where the control variate (S~^{k+1} - S_{k+1,J}) is built from a memory
// table refreshed on a first batch I and evaluated on a second batch J.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fiem/errors.hpp"
#include "fiem/memory_table.hpp"
#include "fiem/model.hpp"
#include "fiem/rng.hpp"

namespace fiem {

using IndexBatch = std::vector<std::size_t>;

enum class Algorithm { EM, IEM, OnlineEM, FIEM, OptFIEM };

std::string_view algorithm_name(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);

// gamma_1, ..., gamma_{K_max}; gammas[k] is used by the update k -> k+1.
class StepSchedule {
 public:
  StepSchedule() = default;
  explicit StepSchedule(std::vector<double> gammas);
  static StepSchedule constant(std::size_t k_max, double gamma);

  std::size_t size() const { return gammas_.size(); }
  double operator[](std::size_t k) const { return gammas_[k]; }
  const std::vector<double>& values() const { return gammas_; }
  bool is_constant() const;

 private:
  std::vector<double> gammas_;
};

// Distribution of the termination index K over {0, ..., K_max - 1}.
class TerminationRule {
 public:
  TerminationRule() = default;
  explicit TerminationRule(std::vector<double> weights);
  static TerminationRule uniform(std::size_t k_max);
  static TerminationRule point_mass(std::size_t k_max, std::size_t index);

  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  double max_weight() const;
  std::size_t sample(CounterRng& rng) const;

 private:
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

enum class DomainPolicy { Warn, Abort };
enum class BatchSampling { WithReplacement, WithoutReplacement };

std::size_t examples_per_iteration(Algorithm algorithm, std::size_t n, std::size_t batch);
// Iterations that process n examples; at least 1.
std::size_t iterations_per_epoch(Algorithm algorithm, std::size_t n, std::size_t batch);
BatchSampling default_sampling(Algorithm algorithm);

// ---------------------------------------------------------------------------
// Single steps.

namespace detail {

template <FiniteSumModel M>
SuffStat batch_mean_sbar(const M& model, const typename M::Parameter& theta, std::span<const std::size_t> batch) {
  if (batch.empty()) throw ArgumentError("empty mini-batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  SuffStat acc = SuffStat::Zero(static_cast<Eigen::Index>(model.stat_dim()));
  for (std::size_t i : batch) {
    if (i >= model.size()) throw ArgumentError("mini-batch index out of range");
    model.accumulate_sbar_i(theta, i, weight, acc);
  }
  return acc;
}

inline SuffStat sa_update(const SuffStat& s, const SuffStat& oracle, double gamma, const SuffStat* control,
                          double lambda) {
  SuffStat direction = oracle - s;
  if (control != nullptr && lambda != 0.0) direction += lambda * (*control);
  return s + gamma * direction;
}

inline void require_step(double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ArgumentError("step size must be finite and >= 0");
}

// Replaces S_i by sbar_i(theta) for every distinct index of the batch, in
// order of first appearance.
template <FiniteSumModel M>
void refresh_memory(const M& model, const typename M::Parameter& theta, MemoryTable& memory,
                    std::span<const std::size_t> batch) {
  if (!memory.initialized()) throw StateError("memory table is not initialized");
  if (batch.empty()) throw ArgumentError("empty mini-batch");
  SuffStat value(static_cast<Eigen::Index>(model.stat_dim()));
  std::vector<std::size_t> done;
  done.reserve(batch.size());
  for (std::size_t i : batch) {
    if (i >= model.size()) throw ArgumentError("mini-batch index out of range");
    if (std::find(done.begin(), done.end(), i) != done.end()) continue;
    done.push_back(i);
    value.setZero();
    model.accumulate_sbar_i(theta, i, 1.0, value);
    memory.replace(i, value);
  }
}

// lambda* = -n^{-1} sum_j <sbar_j(theta), S~ - S_j> / n^{-1} sum_j |S~ - S_j|^2.
// nullopt when the control variate has (numerically) zero variance.
template <FiniteSumModel M>
std::optional<double> optimal_lambda(const M& model, const typename M::Parameter& theta, const MemoryTable& memory) {
  const std::size_t n = model.size();
  const SuffStat& tilde = memory.mean();
  SuffStat value(static_cast<Eigen::Index>(model.stat_dim()));
  double numerator = 0.0;
  double denominator = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    value.setZero();
    model.accumulate_sbar_i(theta, j, 1.0, value);
    const SuffStat centered = tilde - memory.row(j);
    numerator += value.dot(centered);
    denominator += centered.squaredNorm();
  }
  numerator /= static_cast<double>(n);
  denominator /= static_cast<double>(n);
  if (denominator < 1e-14 * (1.0 + tilde.squaredNorm())) return std::nullopt;
  return -numerator / denominator;
}

struct ControlledStep {
  SuffStat next;
  double lambda = 1.0;
  std::optional<double> lambda_star;  // set when lambda* was evaluated
};

// Memory refresh on I, then S + gamma (sbar_J - S + lambda (S~ - S_J)).
// forced_lambda: nullopt selects lambda* (lambda = 1 when degenerate).
template <FiniteSumModel M>
ControlledStep controlled_update(const M& model, const SuffStat& s, const typename M::Parameter& theta,
                                 MemoryTable& memory, std::span<const std::size_t> batch_i,
                                 std::span<const std::size_t> batch_j, double gamma,
                                 std::optional<double> forced_lambda) {
  require_step(gamma);
  refresh_memory(model, theta, memory, batch_i);
  ControlledStep out;
  if (forced_lambda) {
    out.lambda = *forced_lambda;
  } else {
    out.lambda_star = optimal_lambda(model, theta, memory);
    out.lambda = out.lambda_star.value_or(1.0);
  }
  const SuffStat oracle = batch_mean_sbar(model, theta, batch_j);
  const SuffStat control = memory.mean() - memory.batch_mean(batch_j);
  out.next = sa_update(s, oracle, gamma, &control, out.lambda);
  return out;
}

}  // namespace detail

// sbar(T(s)).
template <FiniteSumModel M>
SuffStat em_step(const M& model, const SuffStat& s) {
  return sbar(model, checked_tmap(model, s));
}

// s + gamma (|B|^{-1} sum_{i in B} sbar_i(T(s)) - s).
template <FiniteSumModel M>
SuffStat online_em_step(const M& model, const SuffStat& s, std::span<const std::size_t> batch, double gamma) {
  detail::require_step(gamma);
  if (batch.empty()) throw ArgumentError("online_em_step: empty batch");
  const auto theta = checked_tmap(model, s);
  return detail::sa_update(s, detail::batch_mean_sbar(model, theta, batch), gamma, nullptr, 0.0);
}

// Memory refresh on the batch, then (1 - gamma) s + gamma S~.
template <FiniteSumModel M>
SuffStat iem_step(const M& model, const SuffStat& s, MemoryTable& memory, std::span<const std::size_t> batch,
                  double gamma) {
  detail::require_step(gamma);
  const auto theta = checked_tmap(model, s);
  detail::refresh_memory(model, theta, memory, batch);
  return (1.0 - gamma) * s + gamma * memory.mean();
}

template <FiniteSumModel M>
SuffStat fiem_step(const M& model, const SuffStat& s, MemoryTable& memory, std::span<const std::size_t> batch_i,
                   std::span<const std::size_t> batch_j, double gamma) {
  const auto theta = checked_tmap(model, s);
  return detail::controlled_update(model, s, theta, memory, batch_i, batch_j, gamma, 1.0).next;
}

// Expects the memory rows to be current (already refreshed on I).
template <FiniteSumModel M>
std::optional<double> opt_fiem_lambda(const M& model, const SuffStat& s, const MemoryTable& memory) {
  if (!memory.initialized()) throw StateError("opt_fiem_lambda: memory table is not initialized");
  return detail::optimal_lambda(model, checked_tmap(model, s), memory);
}

struct OptFiemStep {
  SuffStat next;
  double lambda = 1.0;
  bool degenerate = false;
};

template <FiniteSumModel M>
OptFiemStep opt_fiem_step(const M& model, const SuffStat& s, MemoryTable& memory,
                          std::span<const std::size_t> batch_i, std::span<const std::size_t> batch_j, double gamma,
                          std::optional<double> forced_lambda = std::nullopt) {
  const auto theta = checked_tmap(model, s);
  auto step = detail::controlled_update(model, s, theta, memory, batch_i, batch_j, gamma, forced_lambda);
  return OptFiemStep{std::move(step.next), step.lambda, !forced_lambda && !step.lambda_star};
}

// ---------------------------------------------------------------------------
// Runs.

struct DiagnosticsFlags {
  bool mean_field = true;   // |h(S^k)|^2, |B h|^2 and the control-variate gap
  bool increments = true;   // |S^{k+1} - S^k|^2
  bool lambda_star = true;  // opt-FIEM only
  bool objective = false;   // V(S^k) = F(theta^k)
};

// Quantities of iteration k (state S^k before the update); NaN when not tracked.
struct IterationRecord {
  double h_sq = std::numeric_limits<double>::quiet_NaN();
  double gap_sq = std::numeric_limits<double>::quiet_NaN();
  double increment_sq = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  double theta_error = std::numeric_limits<double>::quiet_NaN();
  double vdot_sq = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
};

struct RunDiagnostics {
  Algorithm algorithm = Algorithm::EM;
  std::vector<IterationRecord> records;
  std::size_t termination_index = 0;
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  double final_theta_error = std::numeric_limits<double>::quiet_NaN();
  SuffStat final_stat;
  std::size_t domain_violations = 0;
  std::string first_violation;
  std::size_t examples_processed = 0;
  std::size_t initialization_evaluations = 0;
  std::size_t degenerate_lambda_count = 0;
};

template <FiniteSumModel M>
struct RunOptions {
  using Parameter = typename M::Parameter;
  using Observer = std::function<void(std::size_t k, const SuffStat& s, const Parameter& theta)>;

  std::size_t batch_size = 1;
  SuffStat initial_stat;
  // theta^0 used by the first iteration and to fill the memory table; T(S^0) when unset.
  std::optional<Parameter> initial_parameter;
  std::optional<double> forced_lambda;  // opt-FIEM: bypass lambda*
  std::optional<BatchSampling> sampling;
  DiagnosticsFlags diagnostics;
  std::optional<Parameter> theta_ref;
  DomainPolicy domain_policy = DomainPolicy::Warn;
  std::size_t memory_refresh_period = 0;  // 0: every n replacements
  Observer observer;                      // called at k = 0..K_max (k = K_max after the last update)
};

namespace detail {

template <FiniteSumModel M>
class Engine {
 public:
  using Parameter = typename M::Parameter;

  Engine(const M& model, const StepSchedule& schedule, const TerminationRule& termination, std::uint64_t seed,
         const RunOptions<M>& options)
      : model_(model),
        schedule_(schedule),
        options_(options),
        stream_i_(substream(seed, streams::kIndicesI)),
        stream_j_(substream(seed, streams::kIndicesJ)) {
    if (options.batch_size == 0) throw ArgumentError("run: batch size must be positive");
    if (options.batch_size > model.size()) throw ArgumentError("run: batch size exceeds the number of examples");
    require_stat_dim(model, options.initial_stat, "run initial statistic");
    if (termination.size() > 0) {
      if (termination.size() != schedule.size()) {
        throw ConfigurationError("run: termination rule and schedule have different lengths");
      }
      CounterRng stream_k = substream(seed, streams::kTermination);
      diagnostics_.termination_index = termination.sample(stream_k);
    }
    state_ = options.initial_stat;
  }

  // Runs iterations [first, last) with the algorithm chosen by `algorithm_at`.
  template <typename Selector>
  void advance(std::size_t first, std::size_t last, Selector&& algorithm_at) {
    for (std::size_t k = first; k < last; ++k) iterate(k, algorithm_at(k));
  }

  RunDiagnostics finish(Algorithm label) {
    diagnostics_.algorithm = label;
    const std::size_t k_max = schedule_.size();
    try {
      Parameter theta = parameter_for(k_max);
      if (options_.observer) options_.observer(k_max, state_, theta);
      if constexpr (HasObjective<M>) {
        if (options_.diagnostics.objective) diagnostics_.final_objective = model_.objective(theta);
      }
      if constexpr (HasParameterDistance<M>) {
        if (options_.theta_ref) diagnostics_.final_theta_error = model_.parameter_distance(theta, *options_.theta_ref);
      }
    } catch (const DomainError& error) {
      throw RunAborted(k_max, error.what());
    }
    diagnostics_.final_stat = state_;
    return std::move(diagnostics_);
  }

  // Fills the memory table from the current parameter (used at start and at a hybrid switch).
  void initialize_memory(std::size_t k) {
    try {
      memory_ = MemoryTable::from_model(model_, parameter_for(k), options_.memory_refresh_period);
    } catch (const DomainError& error) {
      throw RunAborted(k, error.what());
    }
    diagnostics_.initialization_evaluations += model_.size();
  }

 private:
  Parameter parameter_for(std::size_t k) {
    if (k == 0 && options_.initial_parameter) return *options_.initial_parameter;
    if (auto violation = model_.admissibility(state_)) {
      ++diagnostics_.domain_violations;
      if (diagnostics_.first_violation.empty()) diagnostics_.first_violation = *violation;
      if (options_.domain_policy == DomainPolicy::Abort) throw RunAborted(k, *violation);
    }
    return model_.tmap(state_);
  }

  IndexBatch draw(CounterRng& stream, BatchSampling sampling) {
    const std::size_t n = model_.size();
    return sampling == BatchSampling::WithReplacement ? sample_with_replacement(stream, n, options_.batch_size)
                                                      : sample_without_replacement(stream, n, options_.batch_size);
  }

  void iterate(std::size_t k, Algorithm algorithm) {
    try {
      step(k, algorithm);
    } catch (const DomainError& error) {
      throw RunAborted(k, error.what());
    }
  }

  void step(std::size_t k, Algorithm algorithm) {
    const std::size_t n = model_.size();
    const double gamma = schedule_[k];
    const DiagnosticsFlags& flags = options_.diagnostics;
    IterationRecord record;
    record.gamma = gamma;

    const Parameter theta = parameter_for(k);
    if (options_.observer) options_.observer(k, state_, theta);

    std::optional<SuffStat> mean_at_theta;
    if (flags.mean_field || algorithm == Algorithm::EM) mean_at_theta = sbar(model_, theta);
    if (flags.mean_field) {
      const SuffStat h = *mean_at_theta - state_;
      record.h_sq = h.squaredNorm();
      if constexpr (HasCurvature<M>) record.vdot_sq = (model_.curvature(state_) * h).squaredNorm();
    }
    if constexpr (HasObjective<M>) {
      if (flags.objective) record.objective = model_.objective(theta);
    }
    if constexpr (HasParameterDistance<M>) {
      if (options_.theta_ref) record.theta_error = model_.parameter_distance(theta, *options_.theta_ref);
    }

    const BatchSampling sampling = options_.sampling.value_or(default_sampling(algorithm));
    SuffStat next;
    switch (algorithm) {
      case Algorithm::EM:
        next = *mean_at_theta;
        break;
      case Algorithm::OnlineEM: {
        require_step(gamma);
        const IndexBatch batch = draw(stream_j_, sampling);
        next = sa_update(state_, batch_mean_sbar(model_, theta, batch), gamma, nullptr, 0.0);
        break;
      }
      case Algorithm::IEM: {
        require_step(gamma);
        require_memory(k);
        const IndexBatch batch = draw(stream_i_, sampling);
        refresh_memory(model_, theta, memory_, batch);
        next = (1.0 - gamma) * state_ + gamma * memory_.mean();
        break;
      }
      case Algorithm::FIEM:
      case Algorithm::OptFIEM: {
        require_memory(k);
        const IndexBatch batch_i = draw(stream_i_, sampling);
        const IndexBatch batch_j = draw(stream_j_, sampling);
        std::optional<double> forced = 1.0;
        if (algorithm == Algorithm::OptFIEM) forced = options_.forced_lambda;
        ControlledStep update = controlled_update(model_, state_, theta, memory_, batch_i, batch_j, gamma, forced);
        if (algorithm == Algorithm::OptFIEM && flags.lambda_star) record.lambda = update.lambda;
        if (algorithm == Algorithm::OptFIEM && !forced && !update.lambda_star) ++diagnostics_.degenerate_lambda_count;
        next = std::move(update.next);
        break;
      }
    }
    if (flags.mean_field && algorithm != Algorithm::EM && algorithm != Algorithm::OnlineEM) {
      record.gap_sq = (memory_.mean() - *mean_at_theta).squaredNorm();
    }
    if (flags.increments) record.increment_sq = (next - state_).squaredNorm();
    if (!next.allFinite()) throw DomainError("non-finite statistic after update");
    state_ = std::move(next);
    diagnostics_.examples_processed += examples_per_iteration(algorithm, n, options_.batch_size);
    diagnostics_.records.push_back(record);
  }

  void require_memory(std::size_t k) {
    if (!memory_.initialized()) initialize_memory(k);
  }

  const M& model_;
  const StepSchedule& schedule_;
  const RunOptions<M>& options_;
  CounterRng stream_i_;
  CounterRng stream_j_;
  SuffStat state_;
  MemoryTable memory_;
  RunDiagnostics diagnostics_;
};

}  // namespace detail

// Executes schedule.size() iterations of `algorithm` from options.initial_stat.
// The termination index K is drawn before the run from the "termination"
// stream; index batches come from the "indices-I"/"indices-J" streams of
// `seed`, so runs of different algorithms with one seed share their draws.
template <FiniteSumModel M>
RunDiagnostics run(Algorithm algorithm, const M& model, const StepSchedule& schedule,
                   const TerminationRule& termination, std::uint64_t seed, const RunOptions<M>& options) {
  detail::Engine<M> engine(model, schedule, termination, seed, options);
  engine.advance(0, schedule.size(), [algorithm](std::size_t) { return algorithm; });
  return engine.finish(algorithm);
}

struct HybridPlan {
  std::size_t batch_size = 1;
  std::size_t kswitch_epochs = 0;
  std::size_t total_epochs = 1;

  std::size_t switch_iteration(std::size_t n) const;
  std::size_t total_iterations(std::size_t n) const;
};

// h-FIEM: Online EM for kswitch epochs, then FIEM with a memory table filled
// from the parameter reached at the switch. schedule.size() must equal
// plan.total_iterations(n); options.batch_size is overridden by the plan.
template <FiniteSumModel M>
RunDiagnostics h_fiem_run(const M& model, const StepSchedule& schedule, const HybridPlan& plan,
                          const TerminationRule& termination, std::uint64_t seed, RunOptions<M> options) {
  if (plan.kswitch_epochs > plan.total_epochs) throw ArgumentError("h_fiem_run: kswitch exceeds total epochs");
  const std::size_t n = model.size();
  const std::size_t switch_at = plan.switch_iteration(n);
  const std::size_t total = plan.total_iterations(n);
  if (schedule.size() != total) {
    throw ConfigurationError("h_fiem_run: schedule length " + std::to_string(schedule.size()) + " != " +
                             std::to_string(total) + " iterations");
  }
  options.batch_size = plan.batch_size;
  detail::Engine<M> engine(model, schedule, termination, seed, options);
  engine.advance(0, switch_at, [](std::size_t) { return Algorithm::OnlineEM; });
  if (switch_at < total) {
    engine.initialize_memory(switch_at);
    engine.advance(switch_at, total, [](std::size_t) { return Algorithm::FIEM; });
  }
  return engine.finish(switch_at < total ? Algorithm::FIEM : Algorithm::OnlineEM);
}

}  // namespace fiem
