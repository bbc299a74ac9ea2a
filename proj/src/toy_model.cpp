#include "fiem/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fiem/dataset_io.hpp"
#include "fiem/errors.hpp"
#include "fiem/rng.hpp"

namespace fiem {

namespace {

// Columns follow x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j with x_0 = 0.
Eigen::MatrixXd ar1_columns(CounterRng& rng, std::size_t rows, std::size_t cols, double rho) {
  std::normal_distribution<double> normal;
  const double scale = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd out(rows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double previous = j == 0 ? 0.0 : out(r, j - 1);
      out(r, j) = rho * previous + scale * normal(rng);
    }
  }
  return out;
}

double spectral_norm(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

ToyModelSpec generate_toy(std::uint64_t seed, std::size_t n, const ToyGenerationConfig& config) {
  if (!(std::abs(config.rho) < 1.0) || !(std::abs(config.rho_tilde) < 1.0)) {
    throw ArgumentError("generate_toy: rho and rho_tilde must lie in (-1, 1)");
  }
  if (!(config.sparsity >= 0.0 && config.sparsity <= 1.0)) throw ArgumentError("generate_toy: sparsity in [0, 1]");
  if (!(config.range_lo <= config.range_hi)) throw ArgumentError("generate_toy: empty range");
  if (n == 0) throw ArgumentError("generate_toy: n must be positive");
  const ToyDims& d = config.dims;
  if (d.y_dim == 0 || d.p_dim == 0 || d.q_dim == 0) throw ArgumentError("generate_toy: dimensions must be positive");

  CounterRng rng = substream(seed, streams::kData);
  ToyModelSpec spec;
  spec.upsilon = config.upsilon;
  spec.A = ar1_columns(rng, d.y_dim, d.p_dim, config.rho);
  spec.X = ar1_columns(rng, d.p_dim, d.q_dim, config.rho_tilde);

  std::vector<std::size_t> order(d.q_dim);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t k = d.q_dim; k > 1; --k) std::swap(order[k - 1], order[uniform_index(rng, k)]);
  const auto zeros = static_cast<std::size_t>(std::floor(config.sparsity * static_cast<double>(d.q_dim)));
  spec.theta_true = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.q_dim));
  for (std::size_t k = zeros; k < d.q_dim; ++k) {
    spec.theta_true(static_cast<Eigen::Index>(order[k])) =
        config.range_lo + (config.range_hi - config.range_lo) * rng.uniform01();
  }

  std::normal_distribution<double> normal;
  const Eigen::VectorXd mean_z = spec.X * spec.theta_true;
  spec.observations.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d.y_dim));
  Eigen::VectorXd z(static_cast<Eigen::Index>(d.p_dim));
  Eigen::VectorXd e(static_cast<Eigen::Index>(d.y_dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = normal(rng);
    for (Eigen::Index k = 0; k < e.size(); ++k) e(k) = normal(rng);
    spec.observations.row(static_cast<Eigen::Index>(i)) = (spec.A * (mean_z + z) + e).transpose();
  }
  return spec;
}

nlohmann::ordered_json toy_spec_to_json(const ToyModelSpec& spec) {
  nlohmann::ordered_json out;
  out["y_dim"] = spec.A.rows();
  out["p_dim"] = spec.A.cols();
  out["q_dim"] = spec.X.cols();
  out["upsilon"] = spec.upsilon;
  out["A"] = matrix_to_json(spec.A);
  out["X"] = matrix_to_json(spec.X);
  if (spec.theta_true.size() > 0) out["theta_true"] = vector_to_json(spec.theta_true);
  out["observations"] = matrix_to_json(spec.observations);
  return out;
}

ToyModelSpec toy_spec_from_json(const nlohmann::json& doc) {
  ToyModelSpec spec;
  spec.upsilon = doc.at("upsilon").get<double>();
  spec.A = matrix_from_json(doc.at("A"));
  spec.X = matrix_from_json(doc.at("X"));
  spec.observations = matrix_from_json(doc.at("observations"));
  if (doc.contains("theta_true")) spec.theta_true = vector_from_json(doc.at("theta_true"));
  if (doc.contains("y_dim") && doc.at("y_dim").get<Eigen::Index>() != spec.A.rows()) {
    throw ConfigurationError("toy spec: y_dim does not match A");
  }
  return spec;
}

ToyModel::ToyModel(ToyModelSpec spec) : spec_(std::move(spec)) {
  const Eigen::MatrixXd& A = spec_.A;
  const Eigen::MatrixXd& X = spec_.X;
  if (A.cols() != X.rows()) throw ConfigurationError("toy model: A and X dimensions do not chain");
  if (spec_.observations.cols() != A.rows()) throw ConfigurationError("toy model: observations have wrong width");
  if (spec_.observations.rows() == 0) throw ConfigurationError("toy model: no observations");
  if (!(spec_.upsilon >= 0.0)) throw ArgumentError("toy model: upsilon must be >= 0");
  const Eigen::Index y = A.rows();
  const Eigen::Index p = A.cols();
  const Eigen::Index q = X.cols();
  if (spec_.upsilon == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu_x(X);
    Eigen::FullPivLU<Eigen::MatrixXd> lu_ax(A * X);
    if (lu_x.rank() != std::min(q, y) || lu_ax.rank() != std::min(p, y)) {
      throw ArgumentError("toy model: upsilon = 0 needs rank(X) = q ^ y and rank(AX) = p ^ y");
    }
  }

  const Eigen::MatrixXd xtx = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_xtx(xtx, Eigen::EigenvaluesOnly);
  const double lo = spec_.upsilon + eig_xtx.eigenvalues().minCoeff();
  const double hi = spec_.upsilon + eig_xtx.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw LinearAlgebraError("toy model: upsilon I + X^T X is singular");
  v_min_ = 1.0 / hi;
  v_max_ = 1.0 / lo;

  const Eigen::MatrixXd iq = Eigen::MatrixXd::Identity(q, q);
  Eigen::LLT<Eigen::MatrixXd> llt_t(spec_.upsilon * iq + xtx);
  tmat_ = llt_t.solve(iq);
  tmat_ = 0.5 * (tmat_ + tmat_.transpose()).eval();

  Eigen::LLT<Eigen::MatrixXd> llt_m(Eigen::MatrixXd::Identity(p, p) + A.transpose() * A);
  pi1_ = X.transpose() * llt_m.solve(A.transpose());
  g_ = X.transpose() * llt_m.solve(X);
  g_ = 0.5 * (g_ + g_.transpose()).eval();
  pi2_ = g_ * tmat_;

  const Eigen::MatrixXd& Y = spec_.observations;
  pi1_y_ = pi1_ * Y.transpose();
  ybar_ = Y.colwise().mean().transpose();
  pi1_ybar_ = pi1_ * ybar_;

  Eigen::LLT<Eigen::MatrixXd> llt_gamma(Eigen::MatrixXd::Identity(y, y) + A * A.transpose());
  gamma_inv_ = llt_gamma.solve(Eigen::MatrixXd::Identity(y, y));
  log_det_gamma_ = 2.0 * llt_gamma.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::MatrixXd ax = A * X;
  quad_ = ax.transpose() * gamma_inv_ * ax;
  trace_term_ = (Y * gamma_inv_).cwiseProduct(Y).sum() / static_cast<double>(Y.rows());

  l_rms_ = spectral_norm(pi2_);
  Eigen::MatrixXd vdot = tmat_ * (pi2_ - iq);
  vdot = 0.5 * (vdot + vdot.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_vdot(vdot, Eigen::EigenvaluesOnly);
  l_gradv_ = eig_vdot.eigenvalues().cwiseAbs().maxCoeff();
}

std::optional<std::string> ToyModel::admissibility(const SuffStat& s) const {
  if (static_cast<std::size_t>(s.size()) != stat_dim()) return "statistic has the wrong dimension";
  if (!s.allFinite()) return "statistic has non-finite entries";
  return std::nullopt;
}

ToyParameter ToyModel::make_parameter(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != stat_dim()) throw ConfigurationError("toy parameter: wrong length");
  return ToyParameter{theta, g_ * theta};
}

ToyParameter ToyModel::tmap(const SuffStat& s) const { return make_parameter(tmat_ * s); }

void ToyModel::accumulate_sbar_i(const ToyParameter& theta, std::size_t i, double weight,
                                 Eigen::VectorXd& out) const {
  out += weight * (pi1_y_.col(static_cast<Eigen::Index>(i)) + theta.g_theta);
}

SuffStat ToyModel::mean_sbar(const ToyParameter& theta) const { return pi1_ybar_ + theta.g_theta; }

double ToyModel::objective(const ToyParameter& theta) const {
  const Eigen::VectorXd& t = theta.theta;
  const double quadratic = trace_term_ - 2.0 * pi1_ybar_.dot(t) + t.dot(quad_ * t);
  return 0.5 * quadratic + 0.5 * log_det_gamma_ + 0.5 * spec_.upsilon * t.squaredNorm();
}

Eigen::MatrixXd ToyModel::curvature(const SuffStat&) const { return tmat_; }

ModelConstants ToyModel::constants() const {
  return ModelConstants::make(v_min_, v_max_, std::vector<double>(size(), l_rms_), l_gradv_);
}

double ToyModel::parameter_distance(const ToyParameter& a, const ToyParameter& b) const {
  return (a.theta - b.theta).norm();
}

Eigen::VectorXd ToyModel::theta_star() const {
  const Eigen::Index q = static_cast<Eigen::Index>(stat_dim());
  const Eigen::MatrixXd system = spec_.upsilon * Eigen::MatrixXd::Identity(q, q) + quad_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(system, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 1.0))) {
    throw LinearAlgebraError("theta_star: singular normal equations");
  }
  return system.ldlt().solve(pi1_ybar_);
}

SuffStat ToyModel::s_star() const {
  const Eigen::Index q = static_cast<Eigen::Index>(stat_dim());
  return (Eigen::MatrixXd::Identity(q, q) - pi2_).fullPivLu().solve(pi1_ybar_);
}

double ToyModel::lipschitz_gradv_power_iteration(std::size_t max_iterations, double tolerance) const {
  const Eigen::Index q = static_cast<Eigen::Index>(stat_dim());
  const Eigen::MatrixXd m = tmat_ * (pi2_ - Eigen::MatrixXd::Identity(q, q));
  Eigen::VectorXd x = Eigen::VectorXd::Ones(q) / std::sqrt(static_cast<double>(q));
  double estimate = 0.0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    // Two applications per round so that a negative dominant eigenvalue does not flip the sign.
    Eigen::VectorXd y = m * (m * x);
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    const double next = std::sqrt(norm);
    y /= norm;
    const bool converged = std::abs(next - estimate) <= tolerance * next;
    estimate = next;
    x = y;
    if (converged) break;
  }
  return estimate;
}

SuffStat toy_em_step(const ToyModel& model, const SuffStat& s) { return model.pi1_ybar() + model.pi2() * s; }

ToyStep toy_algorithm_step(const ToyModel& model, const SuffStat& s, MemoryTable* memory, std::size_t i,
                           std::size_t j, double gamma, std::optional<double> lambda) {
  const std::size_t n = model.size();
  if (i >= n || j >= n) throw ArgumentError("toy_algorithm_step: index out of range");
  // Pi_2 s evaluated as G (Tmat s), the order used by the generic engines.
  const Eigen::VectorXd pi2_s = model.g_matrix() * (model.tmat() * s);
  ToyStep out;
  if (lambda && *lambda == 0.0) {
    const SuffStat oracle = model.pi1_y().col(static_cast<Eigen::Index>(j)) + pi2_s;
    out.next = s + gamma * (oracle - s);
    return out;
  }
  if (memory == nullptr || !memory->initialized()) throw StateError("toy_algorithm_step: memory table required");
  memory->replace(i, model.pi1_y().col(static_cast<Eigen::Index>(i)) + pi2_s);

  if (lambda) {
    out.lambda = *lambda;
  } else {
    const SuffStat& tilde = memory->mean();
    double numerator = 0.0;
    double denominator = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Eigen::VectorXd value = model.pi1_y().col(static_cast<Eigen::Index>(k)) + pi2_s;
      const SuffStat centered = tilde - memory->row(k);
      numerator += value.dot(centered);
      denominator += centered.squaredNorm();
    }
    numerator /= static_cast<double>(n);
    denominator /= static_cast<double>(n);
    out.lambda = denominator < 1e-14 * (1.0 + tilde.squaredNorm()) ? 1.0 : -numerator / denominator;
  }
  SuffStat direction = model.pi1_y().col(static_cast<Eigen::Index>(j)) + pi2_s - s;
  if (out.lambda != 0.0) direction += out.lambda * (memory->mean() - memory->row(j));
  out.next = s + gamma * direction;
  return out;
}

}  // namespace fiem
