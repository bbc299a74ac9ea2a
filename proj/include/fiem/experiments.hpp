#pragma once

// Seeded, replicated Monte Carlo runs and their summaries.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fiem/algorithms.hpp"
#include "fiem/gmm.hpp"
#include "fiem/model.hpp"
#include "fiem/rng.hpp"
#include "fiem/stepsize.hpp"

namespace fiem {

enum class Metric { HSq, GapSq, IncrementSq, Lambda, Objective, ThetaError, VdotSq };

std::string_view metric_name(Metric metric);
double metric_value(const IterationRecord& record, Metric metric);

struct ExperimentConfig {
  std::vector<Algorithm> algorithms;
  StepSchedule schedule;
  TerminationRule termination;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> checkpoints;  // iteration indices; empty selects default_checkpoints
  std::vector<Metric> metrics{Metric::HSq};
  std::size_t threads = 0;  // 0: hardware concurrency

  void validate() const;
};

// Paper grid {1e2, 5e2, 1e3, 5e3, 1e4, 1.5e4, 2e4} scaled by n / 1000, clipped
// to [0, k_max), plus the last iteration.
std::vector<std::size_t> default_checkpoints(std::size_t k_max, std::size_t n);

struct ReplicatedRuns {
  std::vector<Algorithm> algorithms;
  // runs[a][r]; empty optional when replica r of algorithm a aborted.
  std::vector<std::vector<std::optional<RunDiagnostics>>> runs;
  std::vector<std::vector<std::string>> abort_reasons;

  bool complete() const;
  std::size_t completed(std::size_t algorithm_index) const;
  std::vector<RunDiagnostics> completed_runs(std::size_t algorithm_index) const;
};

// Calls job(i) for i in [0, count) on up to `threads` workers. Exceptions are
// rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& job);

// Replica r runs with seed child_seed(seed, r); within a replica every
// algorithm sees the same index streams.
template <FiniteSumModel M>
ReplicatedRuns run_replicated(const M& model, const ExperimentConfig& config, const RunOptions<M>& options) {
  config.validate();
  ReplicatedRuns out;
  out.algorithms = config.algorithms;
  const std::size_t a_count = config.algorithms.size();
  out.runs.assign(a_count, std::vector<std::optional<RunDiagnostics>>(config.replicas));
  out.abort_reasons.assign(a_count, std::vector<std::string>(config.replicas));
  parallel_for(a_count * config.replicas, config.threads, [&](std::size_t job) {
    const std::size_t a = job / config.replicas;
    const std::size_t r = job % config.replicas;
    try {
      out.runs[a][r] = run(config.algorithms[a], model, config.schedule, config.termination,
                           child_seed(config.seed, r), options);
    } catch (const RunAborted& error) {
      out.abort_reasons[a][r] = error.what();
    }
  });
  return out;
}

struct AggregateRow {
  std::string algorithm;
  std::size_t k = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  std::size_t count = 0;
};

struct ResultTable {
  std::vector<AggregateRow> rows;
  bool complete = true;

  void write_csv(std::ostream& out) const;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single value)
  double q25 = 0.0;
  double q75 = 0.0;
  double se() const;
  std::size_t count = 0;
};

// NaN values are skipped; quantiles use linear interpolation.
Summary summarize(std::vector<double> values);

ResultTable aggregate(const ReplicatedRuns& runs, const std::vector<std::size_t>& checkpoints,
                      const std::vector<Metric>& metrics);

// Long-format rows (algorithm, replica, k, metric, value) at the checkpoints.
void write_diagnostics_csv(std::ostream& out, const ReplicatedRuns& runs, const std::vector<std::size_t>& checkpoints,
                           const std::vector<Metric>& metrics);

struct Estimate {
  double value = 0.0;
  double se = 0.0;
  std::size_t replicas = 0;
};

struct EEstimates {
  std::optional<Estimate> e0;
  Estimate e1;
  std::optional<Estimate> e2;
};

// Monte Carlo estimates at each run's own termination index. E0 needs v_max
// and the |B h|^2 records; E2 needs the control-variate gap records.
EEstimates estimate_E(const std::vector<RunDiagnostics>& runs, bool want_e2, std::optional<double> v_max = {});

// Mean of V(S^0) - V(S^{K_max}) over the runs with its standard error.
Estimate estimate_delta_v(const std::vector<RunDiagnostics>& runs);

struct Theorem1Report {
  double lhs = 0.0;      // sum_k alpha_k E|h|^2 + sum_k delta_k E|gap|^2
  double rhs = 0.0;      // Delta V
  double se = 0.0;       // standard error of lhs - rhs
  double margin_sigmas = 0.0;  // (rhs - lhs) / se
  std::size_t replicas = 0;
  bool passed = false;   // lhs <= rhs + 3 se
};

Theorem1Report verify_theorem1(const std::vector<RunDiagnostics>& runs, const Theorem1Coefficients& coefficients);

// Mean over runs of the lambda records in iterations [first, last).
Summary lambda_window(const std::vector<RunDiagnostics>& runs, std::size_t first, std::size_t last);

// Ratio E[metric of numerator] / E[metric of denominator] at each checkpoint.
std::vector<double> ratio_of_means(const ResultTable& table, std::string_view numerator, std::string_view denominator,
                                   std::string_view metric, const std::vector<std::size_t>& checkpoints);

// Mixture experiments in epochs.

struct GmmExperimentConfig {
  std::vector<std::string> algorithms{"em", "iem", "online-em", "h-fiem"};
  double gamma = kGmmPresetGamma;  // Online EM, FIEM, h-FIEM
  double iem_gamma = 1.0;
  std::size_t batch_size = 100;
  std::size_t epochs = 100;
  std::size_t kswitch = 6;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  DomainPolicy domain_policy = DomainPolicy::Warn;
  std::size_t threads = 0;
};

struct GmmPath {
  std::string algorithm;
  std::size_t replica = 0;
  std::vector<double> loglik;                 // index e: after e epochs
  std::vector<Eigen::VectorXd> weights;       // same indexing
  std::vector<double> total_mass;             // same indexing
  std::vector<double> min_mass;               // same indexing
  std::size_t iterations = 0;
  std::size_t examples_processed = 0;
  std::size_t domain_violations = 0;
  std::string first_violation;
  std::string abort_reason;                   // non-empty when the run stopped early
};

struct GmmExperimentResult {
  std::vector<GmmPath> paths;  // algorithm-major, then replica
  double initial_loglik = 0.0;
};

// Iteration indices at which each epoch ends (index 0 is the start).
std::vector<std::size_t> epoch_boundaries(std::string_view algorithm, std::size_t n, std::size_t batch,
                                          std::size_t epochs, std::size_t kswitch);

GmmExperimentResult run_gmm_experiment(const GmmModel& model, const GmmParams& initial,
                                       const GmmExperimentConfig& config);

// Rows: algorithm, epoch, mean, std over replicas of the normalized log-likelihood.
void write_epoch_table_csv(std::ostream& out, const GmmExperimentResult& result,
                           const std::vector<std::size_t>& epochs);
// Rows: algorithm, replica, epoch, iterations, examples, loglik, weights...
void write_gmm_trajectories_csv(std::ostream& out, const GmmExperimentResult& result,
                                const GmmExperimentConfig& config, std::size_t n);

}  // namespace fiem
