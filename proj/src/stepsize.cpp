#include "fiem/stepsize.hpp"

#include <algorithm>
#include <cmath>

#include "fiem/errors.hpp"

namespace fiem {

namespace {

double cbrt_n(std::size_t n) { return std::cbrt(static_cast<double>(n)); }

double n_two_thirds(std::size_t n) {
  const double c = cbrt_n(n);
  return c * c;
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) throw ArgumentError(std::string(name) + " must be positive");
}

// Closest root of sqrt(C) g(C) = target with g increasing, on (0, hi).
double solve_sqrt_equation(const std::function<double(double)>& lhs, double target, double hi) {
  if (!(hi > 0.0)) throw InfeasibleError("empty bracket for C");
  return bisect_increasing([&](double c) { return lhs(c) - target; }, 0.0, hi, 1e-13 * target);
}

}  // namespace

PlannerInputs PlannerInputs::from_constants(const ModelConstants& constants, std::size_t n, std::size_t k_max,
                                            double mu, double lambda) {
  PlannerInputs in;
  in.n = n;
  in.k_max = k_max;
  in.v_min = constants.v_min;
  in.l_rms = constants.lipschitz_rms;
  in.l_gradv = constants.lipschitz_gradv;
  in.mu = mu;
  in.lambda = lambda;
  in.validate();
  return in;
}

void PlannerInputs::validate() const {
  if (n < 2) throw ArgumentError("planner: n must be >= 2");
  if (k_max < 1) throw ArgumentError("planner: k_max must be >= 1");
  require_positive(v_min, "planner: v_min");
  require_positive(l_rms, "planner: L");
  require_positive(l_gradv, "planner: L_Vdot");
  if (!(mu > 0.0 && mu < 1.0)) throw ArgumentError("planner: mu must lie in (0, 1)");
  if (!(lambda > 0.0 && lambda < 1.0)) throw ArgumentError("planner: lambda must lie in (0, 1)");
  if (!(delta_v >= 0.0) || !std::isfinite(delta_v)) throw ArgumentError("planner: delta_v must be >= 0");
}

std::string_view strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::Case1:
      return "case1";
    case Strategy::Case2:
      return "case2";
    case Strategy::NonUniform:
      return "nonuniform";
    case Strategy::Karimi:
      return "karimi";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "case1") return Strategy::Case1;
  if (name == "case2") return Strategy::Case2;
  if (name == "nonuniform") return Strategy::NonUniform;
  if (name == "karimi") return Strategy::Karimi;
  throw ArgumentError("unknown strategy '" + std::string(name) + "'");
}

nlohmann::ordered_json plan_to_json(const StepSizePlan& plan) {
  nlohmann::ordered_json out;
  out["strategy"] = strategy_name(plan.strategy);
  out["n"] = plan.inputs.n;
  out["k_max"] = plan.inputs.k_max;
  out["mu"] = plan.inputs.mu;
  out["lambda"] = plan.inputs.lambda;
  out["C"] = plan.C;
  if (plan.gammas.is_constant() && plan.gammas.size() > 0) {
    out["gamma"] = plan.gammas[0];
  } else {
    out["gamma"] = plan.gammas.values();
  }
  out["bound_constant"] = plan.bound_constant;
  out["bound_value"] = plan.bound_value;
  out["feasible"] = plan.feasible;
  if (!plan.feasible) out["violated_condition"] = plan.violated_condition;
  return out;
}

nlohmann::ordered_json infeasible_plan_json(Strategy strategy, const PlannerInputs& inputs,
                                            const std::string& condition) {
  nlohmann::ordered_json out;
  out["strategy"] = strategy_name(strategy);
  out["n"] = inputs.n;
  out["k_max"] = inputs.k_max;
  out["mu"] = inputs.mu;
  out["lambda"] = inputs.lambda;
  out["feasible"] = false;
  out["violated_condition"] = condition;
  return out;
}

double bisect_increasing(const std::function<double(double)>& f, double lo, double hi, double tolerance) {
  double f_lo = f(lo);
  double f_hi = f(hi);
  if (f_lo > 0.0 || f_hi < 0.0) throw InfeasibleError("no sign change on the bracket");
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double f_mid = f(mid);
    if (!std::isfinite(f_mid) || f_mid > 0.0) {
      hi = mid;
      f_hi = f_mid;
    } else {
      lo = mid;
      f_lo = f_mid;
    }
    if (std::isfinite(f_mid) && std::abs(f_mid) <= tolerance) return mid;
  }
  if (!std::isfinite(f_hi)) return lo;
  return std::abs(f_lo) <= std::abs(f_hi) ? lo : hi;
}

double f_n(double C, double lambda, std::size_t n) {
  const double gap = lambda - C / cbrt_n(n);
  if (!(gap > 0.0)) throw InfeasibleError("C n^{-1/3} < lambda");
  const double nd = static_cast<double>(n);
  return 1.0 / n_two_thirds(n) + C / gap * (1.0 / nd + 1.0 / (1.0 - lambda));
}

double f_tilde_n(double C, double lambda, std::size_t n, std::size_t k_max) {
  const double nd = static_cast<double>(n);
  const double nk = nd * static_cast<double>(k_max);
  return 1.0 / std::cbrt(nk) + C * (1.0 / nd + 1.0 / (1.0 - lambda));
}

double c_plus(double mu, double v_min, double l_rms, double l_gradv) {
  const double a = mu * v_min * l_rms / l_gradv;
  return (std::sqrt(1.0 + 16.0 * a * a) - 1.0) / (4.0 * a);
}

double c_star(double v_min, double l_rms, double l_gradv) { return 0.25 * std::pow(v_min * l_rms / l_gradv, 2.0 / 3.0); }

double solve_C_case1(const PlannerInputs& inputs) {
  inputs.validate();
  const double target = 2.0 * inputs.mu * inputs.v_min * inputs.l_rms / inputs.l_gradv;
  const double hi = inputs.lambda * cbrt_n(inputs.n);
  return solve_sqrt_equation(
      [&](double c) {
        if (!(inputs.lambda - c / cbrt_n(inputs.n) > 0.0)) return std::numeric_limits<double>::infinity();
        return std::sqrt(c) * f_n(c, inputs.lambda, inputs.n);
      },
      target, hi);
}

double solve_C_equal_lambda(const PlannerInputs& inputs) {
  inputs.validate();
  const double target = 2.0 * inputs.mu * inputs.v_min * inputs.l_rms / inputs.l_gradv;
  return solve_sqrt_equation(
      [&](double c) {
        if (c <= 0.0) return 0.0;
        if (c >= 1.0) return std::numeric_limits<double>::infinity();
        return std::sqrt(c) * f_n(c, c, inputs.n);
      },
      target, 1.0);
}

double gamma_case1(const PlannerInputs& inputs, double C) {
  require_positive(C, "gamma_case1: C");
  return std::sqrt(C) / (n_two_thirds(inputs.n) * inputs.l_rms);
}

BoundValue bound_case1(const PlannerInputs& inputs, double C) {
  const double mu = inputs.mu;
  BoundValue out;
  out.constant =
      inputs.l_gradv * f_n(C, inputs.lambda, inputs.n) / (2.0 * mu * (1.0 - mu) * inputs.v_min * inputs.v_min);
  out.value = n_two_thirds(inputs.n) / static_cast<double>(inputs.k_max) * out.constant * inputs.delta_v;
  return out;
}

StepSizePlan plan_case1(const PlannerInputs& inputs) {
  StepSizePlan plan;
  plan.strategy = Strategy::Case1;
  plan.inputs = inputs;
  plan.C = solve_C_case1(inputs);
  plan.gammas = StepSchedule::constant(inputs.k_max, gamma_case1(inputs, plan.C));
  plan.termination = TerminationRule::uniform(inputs.k_max);
  const BoundValue bound = bound_case1(inputs, plan.C);
  plan.bound_constant = bound.constant;
  plan.bound_value = bound.value;
  const double ratio = plan.C / inputs.lambda;
  if (!(static_cast<double>(inputs.n) > ratio * ratio * ratio)) {
    throw InfeasibleError("n > (C/lambda)^3");
  }
  return plan;
}

StepSizePlan solve_case2(const PlannerInputs& inputs) {
  inputs.validate();
  const double nd = static_cast<double>(inputs.n);
  const double kd = static_cast<double>(inputs.k_max);
  const double target = 2.0 * inputs.mu * inputs.v_min * inputs.l_rms / inputs.l_gradv;
  const double a = 1.0 / nd + 1.0 / (1.0 - inputs.lambda);
  const double root_nk = std::cbrt(nd * kd);
  const double hi = std::min(std::pow(target / a, 2.0 / 3.0), std::pow(target * root_nk, 2.0));
  const double C = solve_sqrt_equation(
      [&](double c) { return std::sqrt(c) * f_tilde_n(c, inputs.lambda, inputs.n, inputs.k_max); }, target, hi);
  if (!(std::cbrt(nd) / std::pow(kd, 2.0 / 3.0) <= inputs.lambda / C)) {
    throw InfeasibleError("n^{1/3} K_max^{-2/3} <= lambda / C");
  }
  StepSizePlan plan;
  plan.strategy = Strategy::Case2;
  plan.inputs = inputs;
  plan.C = C;
  plan.gammas = StepSchedule::constant(inputs.k_max, std::sqrt(C) / (root_nk * inputs.l_rms));
  plan.termination = TerminationRule::uniform(inputs.k_max);
  const double mu = inputs.mu;
  plan.bound_constant = inputs.l_gradv * f_tilde_n(C, inputs.lambda, inputs.n, inputs.k_max) /
                        (2.0 * mu * (1.0 - mu) * inputs.v_min * inputs.v_min);
  plan.bound_value = std::cbrt(nd) / std::pow(kd, 2.0 / 3.0) * plan.bound_constant * inputs.delta_v;
  return plan;
}

double solve_lambda_star(double v_min, double l_rms, double l_gradv, double tau) {
  require_positive(v_min, "v_min");
  require_positive(l_rms, "L");
  require_positive(l_gradv, "L_Vdot");
  require_positive(tau, "tau");
  const double a = std::pow(v_min * l_rms, 2.0) * tau * tau * tau;
  const double b = std::pow(2.0 * l_gradv, 2.0);
  const double scale = a + b;
  return bisect_increasing([&](double x) { return (b * x * x * x - a * (1.0 - x) * (1.0 - x)) / scale; }, 0.0, 1.0,
                           0.0);
}

Strategy recommend(double epsilon, std::size_t n) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ArgumentError("recommend: epsilon must lie in (0, 1)");
  if (n < 2) throw ArgumentError("recommend: n must be >= 2");
  const double e = -std::log(epsilon) / std::log(static_cast<double>(n));
  return e < 1.0 / 3.0 ? Strategy::Case2 : Strategy::Case1;
}

StepSizePlan karimi_plan(const PlannerInputs& inputs, const std::vector<double>& lipschitz_i) {
  inputs.validate();
  if (lipschitz_i.empty()) throw ArgumentError("karimi_plan: empty Lipschitz list");
  double max_l = inputs.l_gradv;
  for (double l : lipschitz_i) {
    require_positive(l, "karimi_plan: L_i");
    max_l = std::max(max_l, l);
  }
  const double factor = std::max(6.0, 1.0 + 4.0 * inputs.v_min);
  const double n23 = n_two_thirds(inputs.n);
  const double gamma = inputs.v_min / (n23 * factor * max_l);
  StepSizePlan plan;
  plan.strategy = Strategy::Karimi;
  plan.inputs = inputs;
  const double root_c = gamma * n23 * inputs.l_rms;
  plan.C = root_c * root_c;
  plan.gammas = StepSchedule::constant(inputs.k_max, gamma);
  plan.termination = TerminationRule::uniform(inputs.k_max);
  plan.bound_constant = factor * factor * max_l / (inputs.v_min * inputs.v_min);
  plan.bound_value = n23 / static_cast<double>(inputs.k_max) * plan.bound_constant * inputs.delta_v;
  return plan;
}

double nonuniform_F(const PlannerInputs& inputs, double C, double x) {
  const double lv = inputs.l_gradv;
  const double l = inputs.l_rms;
  return lv / (2.0 * l * l * n_two_thirds(inputs.n)) * x *
         (2.0 * inputs.v_min * l / lv - x * f_n(C, inputs.lambda, inputs.n));
}

double nonuniform_F_inverse(const PlannerInputs& inputs, double C, double y) {
  const double fn = f_n(C, inputs.lambda, inputs.n);
  const double vertex = inputs.v_min * inputs.l_rms / (inputs.l_gradv * fn);
  const double top = nonuniform_F(inputs, C, vertex);
  if (!(y > 0.0) || y > top * (1.0 + 1e-12)) throw ArgumentError("nonuniform_F_inverse: value outside (0, max F]");
  if (y >= top) return vertex;
  return bisect_increasing([&](double x) { return nonuniform_F(inputs, C, x) - y; }, 0.0, vertex, 0.0);
}

double solve_C_nonuniform(const PlannerInputs& inputs) {
  inputs.validate();
  const double target = inputs.v_min * inputs.l_rms / inputs.l_gradv;
  const double hi = inputs.lambda * cbrt_n(inputs.n);
  return solve_sqrt_equation(
      [&](double c) {
        if (!(inputs.lambda - c / cbrt_n(inputs.n) > 0.0)) return std::numeric_limits<double>::infinity();
        return std::sqrt(c) * f_n(c, inputs.lambda, inputs.n);
      },
      target, hi);
}

StepSizePlan nonuniform_plan(const PlannerInputs& inputs, const std::vector<double>& weights) {
  inputs.validate();
  if (weights.size() != inputs.k_max) throw ArgumentError("nonuniform_plan: need k_max weights");
  for (double p : weights) {
    if (!(p > 0.0)) throw ArgumentError("nonuniform_plan: weights must be positive");
  }
  StepSizePlan plan;
  plan.strategy = Strategy::NonUniform;
  plan.inputs = inputs;
  plan.termination = TerminationRule(weights);
  plan.C = solve_C_nonuniform(inputs);
  const double fn = f_n(plan.C, inputs.lambda, inputs.n);
  const double n23 = n_two_thirds(inputs.n);
  const double max_p = *std::max_element(weights.begin(), weights.end());
  const double scale = inputs.v_min * inputs.v_min / (2.0 * inputs.l_gradv * fn * n23);
  std::vector<double> gammas(inputs.k_max);
  for (std::size_t k = 0; k < inputs.k_max; ++k) {
    // At the vertex F^{-1} returns sqrt(C); the bisection would only approach it.
    const double x = weights[k] == max_p ? std::sqrt(plan.C)
                                         : nonuniform_F_inverse(inputs, plan.C, weights[k] / max_p * scale);
    gammas[k] = x / (n23 * inputs.l_rms);
  }
  plan.gammas = StepSchedule(std::move(gammas));
  plan.bound_constant = 2.0 * inputs.l_gradv * fn / (inputs.v_min * inputs.v_min);
  plan.bound_value = n23 * max_p * plan.bound_constant * inputs.delta_v;
  return plan;
}

std::vector<double> default_betas(std::size_t k_max, std::size_t n, double lambda) {
  return std::vector<double>(k_max, (1.0 - lambda) / static_cast<double>(n));
}

Theorem1Coefficients theorem1_coeffs(const StepSchedule& schedule, const std::vector<double>& betas, std::size_t n,
                                     double v_min, double l_rms, double l_gradv) {
  const std::size_t k_max = schedule.size();
  if (k_max == 0) throw ArgumentError("theorem1_coeffs: empty schedule");
  if (betas.size() != k_max) throw ArgumentError("theorem1_coeffs: need one beta per step");
  for (double b : betas) require_positive(b, "theorem1_coeffs: beta");
  const double l2 = l_rms * l_rms;
  const double nd = static_cast<double>(n);
  auto gamma = [&](std::size_t l) { return schedule[l - 1]; };
  auto beta = [&](std::size_t l) { return betas[l - 1]; };
  auto rho = [&](std::size_t l) { return 1.0 - 1.0 / nd + beta(l) + gamma(l) * gamma(l) * l2; };

  Theorem1Coefficients out;
  out.betas = betas;
  out.alphas.resize(k_max);
  out.deltas.resize(k_max);
  out.lambdas_big.assign(k_max, 0.0);
  double tail = 0.0;  // sum_{j=k+1}^{K_max-1} gamma_{j+1}^2 prod_{l=k+2}^{j} rho_l
  for (std::size_t k = k_max; k-- > 0;) {
    if (k + 1 < k_max) {
      tail = gamma(k + 2) * gamma(k + 2) + rho(k + 2) * tail;
      out.lambdas_big[k] = (1.0 + 1.0 / beta(k + 1)) * tail;
    }
    const double g = gamma(k + 1);
    const double big = out.lambdas_big[k];
    out.alphas[k] = g * v_min - g * g * (1.0 + big * l2) * l_gradv / 2.0;
    out.deltas[k] = g * g * (1.0 + big * beta(k + 1) * l2 / (1.0 + beta(k + 1))) * l_gradv / 2.0;
  }
  return out;
}

}  // namespace fiem
