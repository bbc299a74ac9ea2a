#pragma once

// Step-size planners for FIEM and the bound calculators that go with them.

#include <cstddef>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fiem/algorithms.hpp"
#include "fiem/model.hpp"

namespace fiem {

struct PlannerInputs {
  std::size_t n = 2;
  std::size_t k_max = 1;
  double v_min = 1.0;
  double l_rms = 1.0;    // L
  double l_gradv = 1.0;  // L_Vdot
  double mu = 0.25;
  double lambda = 0.5;
  double delta_v = 1.0;

  static PlannerInputs from_constants(const ModelConstants& constants, std::size_t n, std::size_t k_max,
                                      double mu = 0.25, double lambda = 0.5);
  void validate() const;
};

enum class Strategy { Case1, Case2, NonUniform, Karimi };

std::string_view strategy_name(Strategy strategy);
Strategy parse_strategy(std::string_view name);

struct StepSizePlan {
  Strategy strategy = Strategy::Case1;
  PlannerInputs inputs;
  double C = 0.0;
  StepSchedule gammas;
  TerminationRule termination;
  double bound_constant = 0.0;
  double bound_value = 0.0;
  bool feasible = true;
  std::string violated_condition;
};

nlohmann::ordered_json plan_to_json(const StepSizePlan& plan);
// Document for a plan that could not be built.
nlohmann::ordered_json infeasible_plan_json(Strategy strategy, const PlannerInputs& inputs,
                                            const std::string& condition);

// Bisection for an increasing function on [lo, hi]; stops when the bracket
// reaches adjacent doubles or |f| <= tolerance.
double bisect_increasing(const std::function<double(double)>& f, double lo, double hi, double tolerance);

// f_n(C, lambda) = n^{-2/3} + C / (lambda - C n^{-1/3}) * (1/n + 1/(1 - lambda)).
double f_n(double C, double lambda, std::size_t n);
// f~_n(C, lambda) = (n K_max)^{-1/3} + C (1/n + 1/(1 - lambda)).
double f_tilde_n(double C, double lambda, std::size_t n, std::size_t k_max);

// Upper bound on C when lambda = C.
double c_plus(double mu, double v_min, double l_rms, double l_gradv);
// Large-n choice 0.25 (v_min L / L_Vdot)^{2/3}.
double c_star(double v_min, double l_rms, double l_gradv);

// Unique C in (0, lambda n^{1/3}) with sqrt(C) f_n(C, lambda) = 2 mu v_min L / L_Vdot.
double solve_C_case1(const PlannerInputs& inputs);
// Same equation with lambda tied to C; the root lies in (0, 1).
double solve_C_equal_lambda(const PlannerInputs& inputs);
double gamma_case1(const PlannerInputs& inputs, double C);

struct BoundValue {
  double constant = 0.0;
  double value = 0.0;
};
BoundValue bound_case1(const PlannerInputs& inputs, double C);

StepSizePlan plan_case1(const PlannerInputs& inputs);
StepSizePlan solve_case2(const PlannerInputs& inputs);

// Unique lambda in (0, 1) with (v_min L)^2 tau^3 (1 - lambda)^2 = (2 L_Vdot)^2 lambda^3.
double solve_lambda_star(double v_min, double l_rms, double l_gradv, double tau);

// Strategy with the smaller K_max for accuracy epsilon = n^{-e}.
Strategy recommend(double epsilon, std::size_t n);

StepSizePlan karimi_plan(const PlannerInputs& inputs, const std::vector<double>& lipschitz_i);

// F(x) = L_Vdot / (2 L^2 n^{2/3}) x (2 v_min L / L_Vdot - x f_n(C, lambda)).
double nonuniform_F(const PlannerInputs& inputs, double C, double x);
double nonuniform_F_inverse(const PlannerInputs& inputs, double C, double y);
// Root of sqrt(C) f_n(C, lambda) = v_min L / L_Vdot.
double solve_C_nonuniform(const PlannerInputs& inputs);
StepSizePlan nonuniform_plan(const PlannerInputs& inputs, const std::vector<double>& weights);

struct Theorem1Coefficients {
  std::vector<double> alphas;
  std::vector<double> deltas;
  std::vector<double> lambdas_big;
  std::vector<double> betas;
};

// betas[l - 1] = beta_l for l = 1..K_max.
std::vector<double> default_betas(std::size_t k_max, std::size_t n, double lambda);

Theorem1Coefficients theorem1_coeffs(const StepSchedule& schedule, const std::vector<double>& betas, std::size_t n,
                                     double v_min, double l_rms, double l_gradv);

}  // namespace fiem
