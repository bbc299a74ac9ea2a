#pragma once

// Finite-sum curved-exponential-family models seen from the expectation space.
//
// A model provides, for every example i, the conditional expectation
// sbar_i(theta) of its sufficient statistic, and the M-step s -> T(s). Generic
// code never looks inside a parameter; it only moves statistics around.

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fiem/errors.hpp"

namespace fiem {

using SuffStat = Eigen::VectorXd;

// Smoothness and curvature constants (v_min, v_max, L_i, L, L_Vdot).
struct ModelConstants {
  double v_min = 0.0;
  double v_max = 0.0;
  std::vector<double> lipschitz_i;
  double lipschitz_rms = 0.0;
  double lipschitz_gradv = 0.0;

  static ModelConstants make(double v_min, double v_max, std::vector<double> lipschitz_i, double lipschitz_gradv);
  // Throws ConfigurationError when an invariant fails.
  void validate() const;
  double max_lipschitz_i() const;
};

template <typename M>
concept FiniteSumModel = requires(const M& model, const SuffStat& s, const typename M::Parameter& theta,
                                  std::size_t i, double weight, Eigen::VectorXd& out) {
  typename M::Parameter;
  { model.size() } -> std::convertible_to<std::size_t>;
  { model.stat_dim() } -> std::convertible_to<std::size_t>;
  { model.admissibility(s) } -> std::same_as<std::optional<std::string>>;
  { model.tmap(s) } -> std::same_as<typename M::Parameter>;
  // out += weight * sbar_i(theta)
  model.accumulate_sbar_i(theta, i, weight, out);
};

template <typename M>
concept HasObjective = requires(const M& model, const typename M::Parameter& theta) {
  { model.objective(theta) } -> std::convertible_to<double>;
};

// B(s), the Jacobian of phi o T.
template <typename M>
concept HasCurvature = requires(const M& model, const SuffStat& s) {
  { model.curvature(s) } -> std::convertible_to<Eigen::MatrixXd>;
};

template <typename M>
concept HasConstants = requires(const M& model) {
  { model.constants() } -> std::convertible_to<ModelConstants>;
};

// Closed-form n^{-1} sum_i sbar_i(theta), cheaper than the explicit sum.
template <typename M>
concept HasClosedFormMean = requires(const M& model, const typename M::Parameter& theta) {
  { model.mean_sbar(theta) } -> std::convertible_to<SuffStat>;
};

template <typename M>
concept HasParameterDistance = requires(const M& model, const typename M::Parameter& a,
                                        const typename M::Parameter& b) {
  { model.parameter_distance(a, b) } -> std::convertible_to<double>;
};

template <FiniteSumModel M>
void require_stat_dim(const M& model, const SuffStat& s, const char* where) {
  if (static_cast<std::size_t>(s.size()) != model.stat_dim()) {
    throw ConfigurationError(std::string(where) + ": statistic has length " + std::to_string(s.size()) +
                             ", model expects " + std::to_string(model.stat_dim()));
  }
}

// T(s) after checking that s is admissible.
template <FiniteSumModel M>
typename M::Parameter checked_tmap(const M& model, const SuffStat& s) {
  require_stat_dim(model, s, "tmap");
  if (auto violation = model.admissibility(s)) throw DomainError(*violation);
  return model.tmap(s);
}

template <FiniteSumModel M>
SuffStat sbar_i(const M& model, const typename M::Parameter& theta, std::size_t i) {
  SuffStat out = SuffStat::Zero(static_cast<Eigen::Index>(model.stat_dim()));
  model.accumulate_sbar_i(theta, i, 1.0, out);
  return out;
}

// n^{-1} sum_i sbar_i(theta), summed explicitly in index order.
template <FiniteSumModel M>
SuffStat sbar_by_summation(const M& model, const typename M::Parameter& theta) {
  const std::size_t n = model.size();
  SuffStat total = SuffStat::Zero(static_cast<Eigen::Index>(model.stat_dim()));
  for (std::size_t i = 0; i < n; ++i) model.accumulate_sbar_i(theta, i, 1.0, total);
  total /= static_cast<double>(n);
  return total;
}

template <FiniteSumModel M>
SuffStat sbar(const M& model, const typename M::Parameter& theta) {
  SuffStat out;
  if constexpr (HasClosedFormMean<M>) {
    out = model.mean_sbar(theta);
  } else {
    out = sbar_by_summation(model, theta);
  }
  require_stat_dim(model, out, "sbar");
  if (!out.allFinite()) throw DomainError("sbar: non-finite expectation");
  return out;
}

// h(s) = sbar(T(s)) - s.
template <FiniteSumModel M>
SuffStat mean_field(const M& model, const SuffStat& s) {
  return sbar(model, checked_tmap(model, s)) - s;
}

// V(s) = F(T(s)).
template <FiniteSumModel M>
double objective_V(const M& model, const SuffStat& s) {
  if constexpr (HasObjective<M>) {
    return model.objective(checked_tmap(model, s));
  } else {
    throw UnsupportedCapability("objective_V: model does not expose an objective");
  }
}

struct GradientCheck {
  double residual = 0.0;       // |grad V(s) + B(s) h(s)|
  double gradient_norm = 0.0;  // |grad V(s)| from finite differences
  double relative() const { return residual / (1.0 + gradient_norm); }
};

// Central finite differences of V with step 1e-5 * (1 + |s_j|).
template <FiniteSumModel M>
Eigen::VectorXd finite_difference_gradient(const M& model, const SuffStat& s) {
  const Eigen::Index q = s.size();
  Eigen::VectorXd grad(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double step = 1e-5 * (1.0 + std::abs(s(j)));
    SuffStat plus = s;
    SuffStat minus = s;
    plus(j) += step;
    minus(j) -= step;
    grad(j) = (objective_V(model, plus) - objective_V(model, minus)) / (plus(j) - minus(j));
  }
  return grad;
}

template <FiniteSumModel M>
GradientCheck gradV_identity_check(const M& model, const SuffStat& s) {
  if constexpr (HasCurvature<M> && HasObjective<M>) {
    const Eigen::VectorXd grad = finite_difference_gradient(model, s);
    const Eigen::VectorXd predicted = -model.curvature(s) * mean_field(model, s);
    return GradientCheck{(grad - predicted).norm(), grad.norm()};
  } else {
    throw UnsupportedCapability("gradV_identity_check: model lacks an objective or B(s)");
  }
}

}  // namespace fiem
