#include <doctest.h>

#include <cmath>

#include "fiem/errors.hpp"
#include "fiem/stepsize.hpp"
#include "oracles.hpp"

using namespace fiem;

namespace {

double ref_f_n(double C, double lambda, double n) {
  return std::pow(n, -2.0 / 3.0) + C / (lambda - C * std::pow(n, -1.0 / 3.0)) * (1.0 / n + 1.0 / (1.0 - lambda));
}

PlannerInputs unit_inputs(std::size_t n, std::size_t k_max) {
  PlannerInputs in;
  in.n = n;
  in.k_max = k_max;
  return in;
}

}  // namespace

TEST_CASE("f_n at a hand-computed point") {
  CHECK(f_n(0.5, 0.5, 8) == doctest::Approx(4.5).epsilon(1e-15));
  CHECK(f_n(0.1, 0.3, 1000) == doctest::Approx(ref_f_n(0.1, 0.3, 1000)).epsilon(1e-14));
  CHECK_THROWS_AS(f_n(1.0, 0.5, 8), InfeasibleError);
}

TEST_CASE("closed-form constants") {
  CHECK(c_plus(0.25, 1.0, 1.0, 1.0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-14));
  CHECK(c_star(8.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("case1 C solves its defining equation") {
  for (std::size_t n : {10u, 1000u, 1000000u}) {
    PlannerInputs in = unit_inputs(n, 100);
    in.v_min = 0.3;
    in.l_rms = 2.0;
    in.l_gradv = 5.0;
    const double C = solve_C_case1(in);
    const double lhs = std::sqrt(C) * ref_f_n(C, in.lambda, static_cast<double>(n));
    const double rhs = 2.0 * in.mu * in.v_min * in.l_rms / in.l_gradv;
    CHECK(std::abs(lhs - rhs) / rhs <= 1e-12);
    CHECK(gamma_case1(in, C) == doctest::Approx(std::sqrt(C) / (std::pow(n, 2.0 / 3.0) * in.l_rms)).epsilon(1e-13));
  }
}

TEST_CASE("C with lambda = C stays below C+") {
  for (double mu : {0.1, 0.25, 0.5, 0.9}) {
    PlannerInputs in = unit_inputs(1000000, 10);
    in.mu = mu;
    const double C = solve_C_equal_lambda(in);
    CHECK(C <= c_plus(mu, 1.0, 1.0, 1.0));
    CHECK(C > 0.0);
  }
}

TEST_CASE("Karimi baseline step size") {
  PlannerInputs in = unit_inputs(1000, 10);
  const StepSizePlan plan = karimi_plan(in, {1.0});
  CHECK(plan.gammas[0] == doctest::Approx(1.0 / 600.0).epsilon(1e-14));
  CHECK(plan.bound_constant == doctest::Approx(36.0).epsilon(1e-14));
}

TEST_CASE("lambda helper solves (1 - x)^2 = x^3") {
  const double ref = oracle::bisect([](double x) { return x * x * x - (1.0 - x) * (1.0 - x); }, 0.0, 1.0);
  CHECK(solve_lambda_star(1.0, 1.0, 0.5, 1.0) == doctest::Approx(ref).epsilon(1e-12));
  CHECK(ref == doctest::Approx(0.5698).epsilon(1e-4));
}

TEST_CASE("recommendation follows the accuracy exponent") {
  CHECK(recommend(std::pow(1e6, -0.5), 1000000) == Strategy::Case1);
  CHECK(recommend(std::pow(1e6, -0.2), 1000000) == Strategy::Case2);
}

TEST_CASE("case2 plan and its feasibility condition") {
  PlannerInputs in = unit_inputs(1000, 100000);
  const StepSizePlan plan = solve_case2(in);
  const double nk = 1000.0 * 100000.0;
  const double ftilde = std::pow(nk, -1.0 / 3.0) + plan.C * (1.0 / 1000.0 + 1.0 / (1.0 - in.lambda));
  CHECK(std::sqrt(plan.C) * ftilde == doctest::Approx(2.0 * in.mu).epsilon(1e-12));
  CHECK(plan.gammas[0] == doctest::Approx(std::sqrt(plan.C) / std::cbrt(nk)).epsilon(1e-13));
  CHECK_THROWS_AS(solve_case2(unit_inputs(1000000, 10)), InfeasibleError);
}

TEST_CASE("non-uniform plan with uniform weights equals case1 at mu = 1/2") {
  for (std::size_t n : {50u, 1000u, 1000000u}) {
    PlannerInputs in = unit_inputs(n, 40);
    in.v_min = 0.7;
    in.l_rms = 1.5;
    in.l_gradv = 3.0;
    const StepSizePlan uniform = nonuniform_plan(in, std::vector<double>(40, 1.0 / 40.0));
    in.mu = 0.5;
    const double gamma = gamma_case1(in, solve_C_case1(in));
    for (double g : uniform.gammas.values()) CHECK(std::abs(g - gamma) / gamma <= 1e-12);
  }
}

TEST_CASE("non-uniform step sizes grow with the termination weight") {
  PlannerInputs in = unit_inputs(1000, 5);
  const std::vector<double> w{0.1, 0.15, 0.2, 0.25, 0.3};
  const StepSizePlan plan = nonuniform_plan(in, w);
  for (std::size_t k = 1; k < w.size(); ++k) CHECK(plan.gammas[k] > plan.gammas[k - 1]);
  const double n23 = std::pow(1000.0, 2.0 / 3.0);
  const double fn = ref_f_n(plan.C, in.lambda, 1000.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double x = plan.gammas[k] * n23 * in.l_rms;
    const double F = in.l_gradv / (2.0 * in.l_rms * in.l_rms * n23) * x * (2.0 * in.v_min * in.l_rms / in.l_gradv - x * fn);
    const double target = w[k] / 0.3 * in.v_min * in.v_min / (2.0 * in.l_gradv * fn * n23);
    CHECK(F == doctest::Approx(target).epsilon(1e-10));
  }
}

TEST_CASE("descent coefficient recursion matches the explicit sums") {
  for (std::size_t k_max : {1u, 2u, 7u, 50u}) {
    std::vector<double> gammas(k_max);
    std::vector<double> betas(k_max);
    for (std::size_t k = 0; k < k_max; ++k) {
      gammas[k] = 0.01 + 0.002 * static_cast<double>(k % 5);
      betas[k] = 0.05 + 0.01 * static_cast<double>(k % 3);
    }
    const double n = 10.0, v_min = 0.4, L = 1.3, Lv = 2.2;
    const auto c = theorem1_coeffs(StepSchedule(gammas), betas, 10, v_min, L, Lv);
    auto gamma = [&](std::size_t l) { return gammas[l - 1]; };
    auto beta = [&](std::size_t l) { return betas[l - 1]; };
    for (std::size_t k = 0; k < k_max; ++k) {
      double sum = 0.0;
      for (std::size_t j = k + 1; j + 1 <= k_max; ++j) {
        double prod = 1.0;
        for (std::size_t l = k + 2; l <= j; ++l) prod *= 1.0 - 1.0 / n + beta(l) + gamma(l) * gamma(l) * L * L;
        sum += gamma(j + 1) * gamma(j + 1) * prod;
      }
      const double big = k + 1 == k_max ? 0.0 : (1.0 + 1.0 / beta(k + 1)) * sum;
      const double g = gamma(k + 1);
      const double alpha = g * v_min - g * g * (1.0 + big * L * L) * Lv / 2.0;
      const double delta = g * g * (1.0 + big * beta(k + 1) * L * L / (1.0 + beta(k + 1))) * Lv / 2.0;
      CHECK(std::abs(c.lambdas_big[k] - big) <= 1e-12 * (1.0 + std::abs(big)));
      CHECK(std::abs(c.alphas[k] - alpha) <= 1e-12 * (1.0 + std::abs(alpha)));
      CHECK(std::abs(c.deltas[k] - delta) <= 1e-12 * (1.0 + std::abs(delta)));
    }
  }
}

TEST_CASE("plan JSON carries the documented fields") {
  const StepSizePlan plan = plan_case1(unit_inputs(1000, 20));
  const auto doc = plan_to_json(plan);
  CHECK(doc.at("strategy") == "case1");
  CHECK(doc.at("gamma").is_number());
  CHECK(doc.at("feasible") == true);
  const auto bad = infeasible_plan_json(Strategy::Case2, unit_inputs(10, 1), "cond");
  CHECK(bad.at("feasible") == false);
  CHECK(bad.at("violated_condition") == "cond");
}

TEST_CASE("invalid planner inputs are rejected") {
  PlannerInputs in = unit_inputs(1, 10);
  CHECK_THROWS_AS(in.validate(), ArgumentError);
  in = unit_inputs(10, 10);
  in.mu = 1.0;
  CHECK_THROWS(in.validate());
}
