#include "fiem/experiments.hpp"

#include <fmt/format.h>

#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <ostream>

#include "fiem/dataset_io.hpp"
#include "fiem/errors.hpp"

namespace fiem {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t resolve_threads(std::size_t threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

double quantile(const std::vector<double>& sorted, double level) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = level * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::HSq:
      return "h_sq";
    case Metric::GapSq:
      return "gap_sq";
    case Metric::IncrementSq:
      return "increment_sq";
    case Metric::Lambda:
      return "lambda";
    case Metric::Objective:
      return "objective";
    case Metric::ThetaError:
      return "theta_error";
    case Metric::VdotSq:
      return "vdot_sq";
  }
  return "unknown";
}

double metric_value(const IterationRecord& record, Metric metric) {
  switch (metric) {
    case Metric::HSq:
      return record.h_sq;
    case Metric::GapSq:
      return record.gap_sq;
    case Metric::IncrementSq:
      return record.increment_sq;
    case Metric::Lambda:
      return record.lambda;
    case Metric::Objective:
      return record.objective;
    case Metric::ThetaError:
      return record.theta_error;
    case Metric::VdotSq:
      return record.vdot_sq;
  }
  return kNaN;
}

void ExperimentConfig::validate() const {
  if (replicas < 1) throw ConfigurationError("experiment: replicas must be >= 1");
  if (schedule.size() < 1) throw ConfigurationError("experiment: K_max must be >= 1");
  if (algorithms.empty()) throw ConfigurationError("experiment: no algorithms");
  if (termination.size() != 0 && termination.size() != schedule.size()) {
    throw ConfigurationError("experiment: termination rule length differs from K_max");
  }
  for (std::size_t k : checkpoints) {
    if (k >= schedule.size()) throw ConfigurationError("experiment: checkpoint beyond K_max");
  }
}

std::vector<std::size_t> default_checkpoints(std::size_t k_max, std::size_t n) {
  static constexpr double grid[] = {1e2, 5e2, 1e3, 5e3, 1e4, 1.5e4, 2e4};
  std::vector<std::size_t> out;
  const double scale = static_cast<double>(n) / 1000.0;
  for (double g : grid) {
    const auto k = static_cast<std::size_t>(std::llround(g * scale));
    if (k < k_max) out.push_back(k);
  }
  if (k_max > 0) out.push_back(k_max - 1);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool ReplicatedRuns::complete() const {
  for (const auto& per_algorithm : runs) {
    for (const auto& run : per_algorithm) {
      if (!run) return false;
    }
  }
  return true;
}

std::size_t ReplicatedRuns::completed(std::size_t algorithm_index) const {
  const auto& per = runs.at(algorithm_index);
  return static_cast<std::size_t>(std::count_if(per.begin(), per.end(), [](const auto& r) { return r.has_value(); }));
}

std::vector<RunDiagnostics> ReplicatedRuns::completed_runs(std::size_t algorithm_index) const {
  std::vector<RunDiagnostics> out;
  for (const auto& run : runs.at(algorithm_index)) {
    if (run) out.push_back(*run);
  }
  return out;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::min(resolve_threads(threads), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

double Summary::se() const { return count > 0 ? std / std::sqrt(static_cast<double>(count)) : kNaN; }

Summary summarize(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }), values.end());
  Summary out;
  out.count = values.size();
  if (values.empty()) {
    out.mean = out.std = out.q25 = out.q75 = kNaN;
    return out;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  out.q25 = quantile(values, 0.25);
  out.q75 = quantile(values, 0.75);
  return out;
}

void ResultTable::write_csv(std::ostream& out) const {
  out << "algorithm,k,metric,mean,std,q25,q75,count\n";
  for (const auto& row : rows) {
    out << row.algorithm << ',' << row.k << ',' << row.metric << ',' << format_double(row.mean) << ','
        << format_double(row.std) << ',' << format_double(row.q25) << ',' << format_double(row.q75) << ','
        << row.count << '\n';
  }
}

ResultTable aggregate(const ReplicatedRuns& runs, const std::vector<std::size_t>& checkpoints,
                      const std::vector<Metric>& metrics) {
  ResultTable table;
  table.complete = runs.complete();
  for (std::size_t a = 0; a < runs.algorithms.size(); ++a) {
    for (std::size_t k : checkpoints) {
      for (Metric metric : metrics) {
        std::vector<double> values;
        for (const auto& run : runs.runs[a]) {
          if (run && k < run->records.size()) values.push_back(metric_value(run->records[k], metric));
        }
        const Summary s = summarize(std::move(values));
        table.rows.push_back(AggregateRow{std::string(algorithm_name(runs.algorithms[a])), k,
                                          std::string(metric_name(metric)), s.mean, s.std, s.q25, s.q75, s.count});
      }
    }
  }
  return table;
}

void write_diagnostics_csv(std::ostream& out, const ReplicatedRuns& runs, const std::vector<std::size_t>& checkpoints,
                           const std::vector<Metric>& metrics) {
  out << "algorithm,replica,k,metric,value\n";
  for (std::size_t a = 0; a < runs.algorithms.size(); ++a) {
    for (std::size_t r = 0; r < runs.runs[a].size(); ++r) {
      const auto& run = runs.runs[a][r];
      if (!run) continue;
      for (std::size_t k : checkpoints) {
        if (k >= run->records.size()) continue;
        for (Metric metric : metrics) {
          out << algorithm_name(runs.algorithms[a]) << ',' << r << ',' << k << ',' << metric_name(metric) << ','
              << format_double(metric_value(run->records[k], metric)) << '\n';
        }
      }
    }
  }
}

EEstimates estimate_E(const std::vector<RunDiagnostics>& runs, bool want_e2, std::optional<double> v_max) {
  if (runs.empty()) throw ArgumentError("estimate_E: no runs");
  std::vector<double> e0;
  std::vector<double> e1;
  std::vector<double> e2;
  for (const auto& run : runs) {
    if (run.termination_index >= run.records.size()) throw ConfigurationError("estimate_E: K beyond the records");
    const IterationRecord& rec = run.records[run.termination_index];
    if (std::isnan(rec.h_sq)) throw ConfigurationError("estimate_E: mean-field diagnostics were not recorded");
    e1.push_back(rec.h_sq);
    if (want_e2) {
      if (std::isnan(rec.gap_sq)) throw ConfigurationError("estimate_E: E2 requested without gap diagnostics");
      e2.push_back(rec.gap_sq);
    }
    if (v_max) e0.push_back(rec.vdot_sq / (*v_max * *v_max));
  }
  auto to_estimate = [](std::vector<double> values) {
    const Summary s = summarize(std::move(values));
    return Estimate{s.mean, s.se(), s.count};
  };
  EEstimates out;
  out.e1 = to_estimate(std::move(e1));
  if (want_e2) out.e2 = to_estimate(std::move(e2));
  if (v_max) {
    for (double v : e0) {
      if (std::isnan(v)) throw ConfigurationError("estimate_E: E0 needs curvature diagnostics");
    }
    out.e0 = to_estimate(std::move(e0));
  }
  return out;
}

Estimate estimate_delta_v(const std::vector<RunDiagnostics>& runs) {
  if (runs.empty()) throw ArgumentError("estimate_delta_v: no runs");
  std::vector<double> values;
  for (const auto& run : runs) {
    if (run.records.empty() || std::isnan(run.records.front().objective) || std::isnan(run.final_objective)) {
      throw ConfigurationError("estimate_delta_v: objective diagnostics were not recorded");
    }
    values.push_back(run.records.front().objective - run.final_objective);
  }
  const Summary s = summarize(std::move(values));
  return Estimate{s.mean, s.se(), s.count};
}

Theorem1Report verify_theorem1(const std::vector<RunDiagnostics>& runs, const Theorem1Coefficients& coefficients) {
  if (runs.empty()) throw ArgumentError("verify_theorem1: no runs");
  const std::size_t k_max = coefficients.alphas.size();
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> diff;
  for (const auto& run : runs) {
    if (run.records.size() != k_max) throw ConfigurationError("verify_theorem1: run length differs from K_max");
    double value = 0.0;
    for (std::size_t k = 0; k < k_max; ++k) {
      const IterationRecord& rec = run.records[k];
      if (std::isnan(rec.h_sq) || std::isnan(rec.gap_sq)) {
        throw ConfigurationError("verify_theorem1: mean-field and gap diagnostics are required");
      }
      value += coefficients.alphas[k] * rec.h_sq + coefficients.deltas[k] * rec.gap_sq;
    }
    if (std::isnan(run.records.front().objective) || std::isnan(run.final_objective)) {
      throw UnsupportedCapability("verify_theorem1: runs carry no objective values");
    }
    const double dv = run.records.front().objective - run.final_objective;
    lhs.push_back(value);
    rhs.push_back(dv);
    diff.push_back(value - dv);
  }
  const Summary l = summarize(lhs);
  const Summary r = summarize(rhs);
  const Summary d = summarize(diff);
  Theorem1Report report;
  report.lhs = l.mean;
  report.rhs = r.mean;
  report.se = d.se();
  report.replicas = d.count;
  report.margin_sigmas = report.se > 0.0 ? (report.rhs - report.lhs) / report.se
                                         : (report.rhs >= report.lhs ? std::numeric_limits<double>::infinity()
                                                                     : -std::numeric_limits<double>::infinity());
  report.passed = d.mean <= 3.0 * report.se;
  return report;
}

Summary lambda_window(const std::vector<RunDiagnostics>& runs, std::size_t first, std::size_t last) {
  std::vector<double> values;
  for (const auto& run : runs) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = first; k < std::min(last, run.records.size()); ++k) {
      if (!std::isnan(run.records[k].lambda)) {
        sum += run.records[k].lambda;
        ++count;
      }
    }
    if (count > 0) values.push_back(sum / static_cast<double>(count));
  }
  return summarize(std::move(values));
}

std::vector<double> ratio_of_means(const ResultTable& table, std::string_view numerator, std::string_view denominator,
                                   std::string_view metric, const std::vector<std::size_t>& checkpoints) {
  std::map<std::pair<std::string, std::size_t>, double> means;
  for (const auto& row : table.rows) {
    if (row.metric == metric) means[{row.algorithm, row.k}] = row.mean;
  }
  std::vector<double> out;
  for (std::size_t k : checkpoints) {
    const auto top = means.find({std::string(numerator), k});
    const auto bottom = means.find({std::string(denominator), k});
    if (top == means.end() || bottom == means.end()) throw ArgumentError("ratio_of_means: missing rows");
    out.push_back(top->second / bottom->second);
  }
  return out;
}

std::vector<std::size_t> epoch_boundaries(std::string_view algorithm, std::size_t n, std::size_t batch,
                                          std::size_t epochs, std::size_t kswitch) {
  std::vector<std::size_t> out{0};
  if (algorithm == "h-fiem") {
    if (kswitch > epochs) throw ArgumentError("kswitch exceeds the number of epochs");
    const std::size_t online = iterations_per_epoch(Algorithm::OnlineEM, n, batch);
    const std::size_t fiem = iterations_per_epoch(Algorithm::FIEM, n, batch);
    for (std::size_t e = 1; e <= epochs; ++e) {
      out.push_back(e <= kswitch ? e * online : kswitch * online + (e - kswitch) * fiem);
    }
    return out;
  }
  const std::size_t per = iterations_per_epoch(parse_algorithm(algorithm), n, batch);
  for (std::size_t e = 1; e <= epochs; ++e) out.push_back(e * per);
  return out;
}

GmmExperimentResult run_gmm_experiment(const GmmModel& model, const GmmParams& initial,
                                       const GmmExperimentConfig& config) {
  if (config.replicas < 1) throw ConfigurationError("gmm experiment: replicas must be >= 1");
  if (config.batch_size == 0 || config.batch_size > model.size()) {
    throw ConfigurationError("gmm experiment: batch size must lie in [1, n]");
  }
  const std::size_t n = model.size();
  const GmmParameter theta0 = model.make_parameter(initial);
  const SuffStat s0 = sbar_by_summation(model, theta0);

  GmmExperimentResult result;
  result.initial_loglik = model.loglik(theta0);
  const std::size_t a_count = config.algorithms.size();
  result.paths.resize(a_count * config.replicas);

  parallel_for(result.paths.size(), config.threads, [&](std::size_t job) {
    const std::string& name = config.algorithms[job / config.replicas];
    const std::size_t r = job % config.replicas;
    GmmPath& path = result.paths[job];
    path.algorithm = name;
    path.replica = r;
    const std::vector<std::size_t> bounds = epoch_boundaries(name, n, config.batch_size, config.epochs, config.kswitch);
    const std::size_t total = bounds.back();
    path.loglik.assign(config.epochs + 1, kNaN);
    path.weights.assign(config.epochs + 1, Eigen::VectorXd());
    path.total_mass.assign(config.epochs + 1, kNaN);
    path.min_mass.assign(config.epochs + 1, kNaN);
    std::map<std::size_t, std::size_t> epoch_of;
    for (std::size_t e = 0; e < bounds.size(); ++e) epoch_of[bounds[e]] = e;

    RunOptions<GmmModel> options;
    options.batch_size = name == "em" ? 1 : config.batch_size;
    options.initial_stat = s0;
    options.initial_parameter = theta0;
    options.diagnostics = DiagnosticsFlags{false, false, false, false};
    options.domain_policy = config.domain_policy;
    options.observer = [&](std::size_t k, const SuffStat& s, const GmmParameter& theta) {
      const auto it = epoch_of.find(k);
      if (it == epoch_of.end()) return;
      const std::size_t e = it->second;
      path.loglik[e] = model.loglik(theta);
      path.weights[e] = theta.params.weights;
      const Eigen::VectorXd m = model.masses(s);
      path.total_mass[e] = m.sum();
      path.min_mass[e] = m.minCoeff();
    };
    const std::uint64_t seed = child_seed(config.seed, r);
    try {
      RunDiagnostics diag;
      if (name == "h-fiem") {
        HybridPlan plan{config.batch_size, config.kswitch, config.epochs};
        diag = h_fiem_run(model, StepSchedule::constant(total, config.gamma), plan, TerminationRule(), seed, options);
      } else {
        const Algorithm algorithm = parse_algorithm(name);
        double gamma = config.gamma;
        if (algorithm == Algorithm::EM) gamma = 1.0;
        if (algorithm == Algorithm::IEM) gamma = config.iem_gamma;
        diag = run(algorithm, model, StepSchedule::constant(total, gamma), TerminationRule(), seed, options);
      }
      path.iterations = diag.records.size();
      path.examples_processed = diag.examples_processed;
      path.domain_violations = diag.domain_violations;
      path.first_violation = diag.first_violation;
    } catch (const RunAborted& error) {
      path.abort_reason = error.what();
    }
  });
  return result;
}

void write_epoch_table_csv(std::ostream& out, const GmmExperimentResult& result,
                           const std::vector<std::size_t>& epochs) {
  out << "algorithm,epoch,mean,std,count\n";
  std::vector<std::string> order;
  for (const auto& path : result.paths) {
    if (std::find(order.begin(), order.end(), path.algorithm) == order.end()) order.push_back(path.algorithm);
  }
  for (const auto& name : order) {
    for (std::size_t e : epochs) {
      std::vector<double> values;
      for (const auto& path : result.paths) {
        if (path.algorithm == name && e < path.loglik.size()) values.push_back(path.loglik[e]);
      }
      const Summary s = summarize(std::move(values));
      out << name << ',' << e << ',' << format_double(s.mean) << ',' << format_double(s.std) << ',' << s.count
          << '\n';
    }
  }
}

void write_gmm_trajectories_csv(std::ostream& out, const GmmExperimentResult& result,
                                const GmmExperimentConfig& config, std::size_t n) {
  std::size_t g = 0;
  for (const auto& path : result.paths) {
    for (const auto& w : path.weights) g = std::max<std::size_t>(g, static_cast<std::size_t>(w.size()));
  }
  out << "algorithm,replica,epoch,iterations,examples,loglik,total_mass,min_mass";
  for (std::size_t l = 0; l < g; ++l) out << ",w" << l + 1;
  out << '\n';
  for (const auto& path : result.paths) {
    const auto bounds = epoch_boundaries(path.algorithm, n, config.batch_size, config.epochs, config.kswitch);
    for (std::size_t e = 0; e < path.loglik.size(); ++e) {
      std::size_t examples = 0;
      if (path.algorithm == "em") {
        examples = e * n;
      } else if (path.algorithm == "h-fiem") {
        const std::size_t online = std::min(e, config.kswitch);
        examples = bounds[online] * config.batch_size + (bounds[e] - bounds[online]) * 2 * config.batch_size;
      } else {
        examples = bounds[e] * examples_per_iteration(parse_algorithm(path.algorithm), n, config.batch_size);
      }
      out << path.algorithm << ',' << path.replica << ',' << e << ',' << bounds[e] << ',' << examples << ','
          << format_double(path.loglik[e]) << ',' << format_double(path.total_mass[e]) << ','
          << format_double(path.min_mass[e]);
      for (std::size_t l = 0; l < g; ++l) {
        const auto& w = path.weights[e];
        out << ',' << format_double(static_cast<Eigen::Index>(l) < w.size() ? w(static_cast<Eigen::Index>(l)) : kNaN);
      }
      out << '\n';
    }
  }
}

}  // namespace fiem
