#include "checks.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

#include "fiem/algorithms.hpp"
#include "fiem/errors.hpp"
#include "fiem/experiments.hpp"
#include "fiem/stepsize.hpp"
#include "fiem/toy_model.hpp"

namespace fiem::cli {

namespace {

struct Scale {
  std::size_t theorem1_replicas;
  std::size_t prop_n;
  std::size_t prop_replicas;
};

Scale scale_for(std::string_view scale) {
  if (scale == "desk") return {10000, 100, 100};
  if (scale == "paper") return {100000, 1000, 1000};
  throw ArgumentError("unknown scale '" + std::string(scale) + "'");
}

std::vector<SuffStat> trajectory(Algorithm algorithm, const ToyModel& model, const StepSchedule& schedule,
                                 std::uint64_t seed, std::optional<double> forced_lambda) {
  std::vector<SuffStat> path;
  RunOptions<ToyModel> options;
  options.initial_stat = SuffStat::Zero(static_cast<Eigen::Index>(model.stat_dim()));
  options.diagnostics = DiagnosticsFlags{false, false, false, false};
  options.forced_lambda = forced_lambda;
  options.observer = [&](std::size_t, const SuffStat& s, const ToyParameter&) { path.push_back(s); };
  run(algorithm, model, schedule, TerminationRule(), seed, options);
  return path;
}

bool bitwise_equal(const std::vector<SuffStat>& a, const std::vector<SuffStat>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].size() != b[k].size()) return false;
    for (Eigen::Index j = 0; j < a[k].size(); ++j) {
      if (a[k](j) != b[k](j)) return false;
    }
  }
  return true;
}

void theorem1_suite(std::vector<CheckResult>& out, const Scale& scale, std::uint64_t seed, std::size_t threads) {
  ToyGenerationConfig gen;
  gen.dims = ToyDims{5, 4, 3};
  const ToyModel model(generate_toy(seed, 10, gen));
  const ModelConstants c = model.constants();
  const PlannerInputs inputs = PlannerInputs::from_constants(c, 10, 50);
  const StepSizePlan plan = plan_case1(inputs);
  const Theorem1Coefficients coeffs =
      theorem1_coeffs(plan.gammas, default_betas(50, 10, inputs.lambda), 10, c.v_min, c.lipschitz_rms,
                      c.lipschitz_gradv);

  ExperimentConfig config;
  config.algorithms = {Algorithm::FIEM};
  config.schedule = plan.gammas;
  config.termination = plan.termination;
  config.replicas = scale.theorem1_replicas;
  config.seed = seed;
  config.threads = threads;
  RunOptions<ToyModel> options;
  options.initial_stat = SuffStat::Zero(3);
  options.diagnostics = DiagnosticsFlags{true, false, false, true};
  const ReplicatedRuns runs = run_replicated(model, config, options);
  const Theorem1Report report = verify_theorem1(runs.completed_runs(0), coeffs);
  out.push_back({"theorem1 inequality (toy n=10, K_max=50, case1)", report.passed,
                 fmt::format("lhs={:.6g} rhs={:.6g} se={:.3g} margin={:.2f} sigmas over {} replicas", report.lhs,
                             report.rhs, report.se, report.margin_sigmas, report.replicas)});
}

void prop2_suite(std::vector<CheckResult>& out, const Scale& scale, std::uint64_t seed, std::size_t threads) {
  const std::size_t n = scale.prop_n;
  const ToyModel model(generate_toy(seed, n));
  const ModelConstants c = model.constants();
  const PlannerInputs inputs = PlannerInputs::from_constants(c, n, 20 * n);
  const StepSizePlan plan = plan_case1(inputs);

  ExperimentConfig config;
  config.algorithms = {Algorithm::FIEM};
  config.schedule = plan.gammas;
  config.termination = plan.termination;
  config.replicas = scale.prop_replicas;
  config.seed = seed;
  config.threads = threads;
  RunOptions<ToyModel> options;
  options.initial_stat = SuffStat::Zero(static_cast<Eigen::Index>(model.stat_dim()));
  options.diagnostics = DiagnosticsFlags{true, false, false, true};
  const ReplicatedRuns runs = run_replicated(model, config, options);
  const auto completed = runs.completed_runs(0);
  const EEstimates e = estimate_E(completed, true, c.v_max);
  const bool e0_ok = e.e0->value <= e.e1.value + 3.0 * e.e1.se;
  out.push_back({"E0 <= E1 (toy FIEM)", e0_ok,
                 fmt::format("E0={:.6g} E1={:.6g} se={:.3g}", e.e0->value, e.e1.value, e.e1.se)});

  const Estimate dv = estimate_delta_v(completed);
  const double bound = plan.bound_value * dv.value;
  const bool bound_ok = e.e1.value <= bound + 3.0 * e.e1.se;
  out.push_back({"E1 below the n^{2/3} bound (toy FIEM)", bound_ok,
                 fmt::format("E1={:.6g} bound={:.6g} (DeltaV={:.6g})", e.e1.value, bound, dv.value)});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const auto q = static_cast<Eigen::Index>(model.stat_dim());
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < 1000; ++t) {
    SuffStat s(q);
    for (Eigen::Index j = 0; j < q; ++j) s(j) = 10.0 * normal(rng);
    const SuffStat h = mean_field(model, s);
    const double lhs = h.dot(-model.curvature(s) * h);
    const double rhs = -c.v_min * h.squaredNorm();
    worst = std::max(worst, (lhs - rhs) / (1.0 + std::abs(rhs)));
  }
  out.push_back({"<h, Vdot> <= -v_min |h|^2 on 1000 states", worst <= 1e-10,
                 fmt::format("max relative excess {:.3g}", worst)});
}

void identities_suite(std::vector<CheckResult>& out, std::uint64_t seed) {
  const ToyModel model(generate_toy(seed, 20));
  const StepSchedule schedule = StepSchedule::constant(200, 0.05);
  const auto online = trajectory(Algorithm::OnlineEM, model, schedule, seed, std::nullopt);
  const auto fiem = trajectory(Algorithm::FIEM, model, schedule, seed, std::nullopt);
  const auto opt0 = trajectory(Algorithm::OptFIEM, model, schedule, seed, 0.0);
  const auto opt1 = trajectory(Algorithm::OptFIEM, model, schedule, seed, 1.0);
  out.push_back({"opt-FIEM with lambda=0 reproduces Online EM", bitwise_equal(online, opt0), "bitwise"});
  out.push_back({"opt-FIEM with lambda=1 reproduces FIEM", bitwise_equal(fiem, opt1), "bitwise"});

  ToyModelSpec single = generate_toy(seed, 1);
  const ToyModel one(single);
  const auto path = trajectory(Algorithm::FIEM, one, schedule, seed, std::nullopt);
  SuffStat s = SuffStat::Zero(static_cast<Eigen::Index>(one.stat_dim()));
  double worst = 0.0;
  for (std::size_t k = 0; k < path.size(); ++k) {
    worst = std::max(worst, (path[k] - s).cwiseAbs().maxCoeff() / (1.0 + s.cwiseAbs().maxCoeff()));
    if (k < schedule.size()) s = s + schedule[k] * mean_field(one, s);
  }
  out.push_back({"n=1 FIEM equals the deterministic recursion", worst <= 1e-14, fmt::format("max error {:.3g}", worst)});

  PlannerInputs inputs;
  inputs.n = 1000000;
  inputs.k_max = 1000;
  const double C = solve_C_case1(inputs);
  const double target = 2.0 * inputs.mu * inputs.v_min * inputs.l_rms / inputs.l_gradv;
  const double residual = std::abs(std::sqrt(C) * f_n(C, inputs.lambda, inputs.n) - target) / target;
  out.push_back({"solved C satisfies its equation", residual <= 1e-12, fmt::format("relative residual {:.3g}", residual)});

  const double c_eq = solve_C_equal_lambda(inputs);
  const double cp = c_plus(inputs.mu, inputs.v_min, inputs.l_rms, inputs.l_gradv);
  out.push_back({"C <= C+ when lambda = C", c_eq <= cp, fmt::format("C={:.9g} C+={:.9g}", c_eq, cp)});

  PlannerInputs half = inputs;
  half.mu = 0.5;
  half.k_max = 50;
  const StepSizePlan uniform = nonuniform_plan(half, std::vector<double>(50, 1.0 / 50.0));
  const double gamma1 = gamma_case1(half, solve_C_case1(half));
  double gap = 0.0;
  for (double g : uniform.gammas.values()) gap = std::max(gap, std::abs(g - gamma1) / gamma1);
  out.push_back({"uniform non-uniform plan equals case1 at mu=1/2", gap <= 1e-12, fmt::format("max relative gap {:.3g}", gap)});
}

}  // namespace

std::vector<CheckResult> run_check_suite(std::string_view suite, std::string_view scale_name, std::uint64_t seed,
                                         std::size_t threads) {
  const Scale scale = scale_for(scale_name);
  const bool all = suite == "all";
  if (!all && suite != "theorem1" && suite != "prop2" && suite != "identities") {
    throw ArgumentError("unknown suite '" + std::string(suite) + "'");
  }
  std::vector<CheckResult> out;
  if (all || suite == "identities") identities_suite(out, seed);
  if (all || suite == "theorem1") theorem1_suite(out, scale, seed, threads);
  if (all || suite == "prop2") prop2_suite(out, scale, seed, threads);
  return out;
}

}  // namespace fiem::cli
