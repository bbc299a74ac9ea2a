#include "fiem/gmm.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fiem/dataset_io.hpp"
#include "fiem/errors.hpp"
#include "fiem/rng.hpp"

namespace fiem {

namespace {

constexpr double kEmptyComponent = 1e-12;
constexpr double kCovarianceSlack = 1e-10;

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Cholesky of a covariance; failures within kCovarianceSlack of the cone are
// nudged back inside, anything worse is a domain error.
Eigen::LLT<Eigen::MatrixXd> covariance_cholesky(Eigen::MatrixXd& sigma) {
  sigma = symmetrized(sigma);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(smallest > -kCovarianceSlack)) {
    throw DomainError(fmt::format("covariance is not positive definite (smallest eigenvalue {:.6g})", smallest));
  }
  sigma.diagonal().array() += kCovarianceSlack - smallest;
  llt.compute(sigma);
  if (llt.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
  return llt;
}

double log_sum_exp(const Eigen::VectorXd& x) {
  const double top = x.maxCoeff();
  return top + std::log((x.array() - top).exp().sum());
}

}  // namespace

nlohmann::ordered_json gmm_params_to_json(const GmmParams& params) {
  nlohmann::ordered_json out;
  out["weights"] = vector_to_json(params.weights);
  out["means"] = matrix_to_json(params.means.transpose());
  out["covariance"] = matrix_to_json(params.covariance);
  return out;
}

GmmParams gmm_params_from_json(const nlohmann::json& doc) {
  GmmParams out;
  out.weights = vector_from_json(doc.at("weights"));
  out.means = matrix_from_json(doc.at("means")).transpose();
  out.covariance = matrix_from_json(doc.at("covariance"));
  return out;
}

GmmDataset GmmDataset::from_observations(Eigen::MatrixXd observations) {
  if (observations.rows() == 0 || observations.cols() == 0) throw ArgumentError("gmm dataset: empty observations");
  if (!observations.allFinite()) throw ArgumentError("gmm dataset: non-finite observations");
  GmmDataset out;
  out.observations = std::move(observations);
  out.second_moment =
      symmetrized(out.observations.transpose() * out.observations / static_cast<double>(out.observations.rows()));
  return out;
}

GmmModel::GmmModel(GmmDataset data, std::size_t components)
    : data_(std::move(data)), g_(components), p_(data_.dim()) {
  if (g_ == 0) throw ArgumentError("gmm: need at least one component");
  if (data_.size() == 0 || p_ == 0) throw ArgumentError("gmm: empty dataset");
}

Eigen::VectorXd GmmModel::block(const SuffStat& s, std::size_t l) const {
  return s.segment(static_cast<Eigen::Index>(g_ + l * p_), static_cast<Eigen::Index>(p_));
}

std::optional<std::string> GmmModel::admissibility(const SuffStat& s) const {
  if (static_cast<std::size_t>(s.size()) != stat_dim()) return "statistic has the wrong dimension";
  if (!s.allFinite()) return "statistic has non-finite entries";
  const Eigen::VectorXd m = masses(s);
  for (std::size_t l = 0; l < g_; ++l) {
    if (m(static_cast<Eigen::Index>(l)) < -1e-10) {
      return fmt::format("mass of component {} is negative ({:.6g})", l + 1, m(static_cast<Eigen::Index>(l)));
    }
  }
  const double total = m.sum();
  if (std::abs(total - 1.0) > 1e-8) return fmt::format("total mass {:.12g} differs from 1", total);
  return std::nullopt;
}

GmmParameter GmmModel::tmap(const SuffStat& s) const {
  if (static_cast<std::size_t>(s.size()) != stat_dim()) throw ConfigurationError("gmm tmap: wrong dimension");
  const Eigen::VectorXd m = masses(s);
  GmmParams params;
  params.weights = m / m.sum();
  params.means.resize(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(g_));
  params.covariance = data_.second_moment;
  for (std::size_t l = 0; l < g_; ++l) {
    const double mass = m(static_cast<Eigen::Index>(l));
    if (!(mass >= kEmptyComponent)) throw DomainError(fmt::format("component {} is empty (mass {:.6g})", l + 1, mass));
    const Eigen::VectorXd mu = block(s, l) / mass;
    params.means.col(static_cast<Eigen::Index>(l)) = mu;
    params.covariance.noalias() -= mass * mu * mu.transpose();
  }
  GmmParameter out;
  out.chol = covariance_cholesky(params.covariance);
  out.params = std::move(params);
  const Eigen::MatrixXd& means = out.params.means;
  out.precision_means = out.chol.solve(means);
  out.mean_quad = (means.array() * out.precision_means.array()).colwise().sum().transpose();
  out.log_weights = out.params.weights.array().log();
  out.log_det = 2.0 * out.chol.matrixLLT().diagonal().array().log().sum();
  return out;
}

GmmParameter GmmModel::make_parameter(GmmParams params) const {
  if (static_cast<std::size_t>(params.weights.size()) != g_ || static_cast<std::size_t>(params.means.rows()) != p_ ||
      static_cast<std::size_t>(params.means.cols()) != g_ || static_cast<std::size_t>(params.covariance.rows()) != p_ ||
      static_cast<std::size_t>(params.covariance.cols()) != p_) {
    throw ConfigurationError("gmm parameter: dimensions do not match the model");
  }
  if ((params.weights.array() < 0.0).any() || std::abs(params.weights.sum() - 1.0) > 1e-10) {
    throw DomainError("gmm parameter: weights are not on the simplex");
  }
  GmmParameter out;
  out.chol = covariance_cholesky(params.covariance);
  out.params = std::move(params);
  out.precision_means = out.chol.solve(out.params.means);
  out.mean_quad = (out.params.means.array() * out.precision_means.array()).colwise().sum().transpose();
  out.log_weights = out.params.weights.array().log();
  out.log_det = 2.0 * out.chol.matrixLLT().diagonal().array().log().sum();
  return out;
}

Eigen::VectorXd GmmModel::posterior(const GmmParameter& theta, std::size_t i) const {
  if (i >= size()) throw ArgumentError("gmm posterior: index out of range");
  const auto y = data_.observations.row(static_cast<Eigen::Index>(i)).transpose();
  // The y^T Sigma^{-1} y term is common to all components and cancels.
  Eigen::VectorXd logits = theta.log_weights + theta.precision_means.transpose() * y - 0.5 * theta.mean_quad;
  const double top = logits.maxCoeff();
  Eigen::VectorXd rho = (logits.array() - top).exp();
  rho /= rho.sum();
  return rho;
}

void GmmModel::accumulate_sbar_i(const GmmParameter& theta, std::size_t i, double weight,
                                 Eigen::VectorXd& out) const {
  const Eigen::VectorXd rho = posterior(theta, i);
  const auto y = data_.observations.row(static_cast<Eigen::Index>(i)).transpose();
  out.head(static_cast<Eigen::Index>(g_)) += weight * rho;
  for (std::size_t l = 0; l < g_; ++l) {
    out.segment(static_cast<Eigen::Index>(g_ + l * p_), static_cast<Eigen::Index>(p_)) +=
        (weight * rho(static_cast<Eigen::Index>(l))) * y;
  }
}

double GmmModel::objective(const GmmParameter& theta) const {
  const Eigen::MatrixXd& Y = data_.observations;
  const Eigen::MatrixXd whitened = theta.chol.matrixL().solve(Y.transpose());
  const Eigen::VectorXd y_quad = whitened.colwise().squaredNorm().transpose();
  const Eigen::MatrixXd cross = Y * theta.precision_means;  // n x g
  double total = 0.0;
  Eigen::VectorXd terms(static_cast<Eigen::Index>(g_));
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    terms = theta.log_weights + cross.row(i).transpose() - 0.5 * theta.mean_quad;
    total += log_sum_exp(terms) - 0.5 * y_quad(i);
  }
  return -(total / static_cast<double>(Y.rows()) - 0.5 * theta.log_det);
}

double GmmModel::parameter_distance(const GmmParameter& a, const GmmParameter& b) const {
  const double dw = (a.params.weights - b.params.weights).squaredNorm();
  const double dm = (a.params.means - b.params.means).squaredNorm();
  const double dc = (a.params.covariance - b.params.covariance).squaredNorm();
  return std::sqrt(dw + dm + dc);
}

double gmm_loglik(const GmmParameter& theta, const GmmModel& model) { return model.loglik(theta); }

SuffStat gmm_em_epoch(const GmmModel& model, const SuffStat& s) { return em_step(model, s); }

SuffStat gmm_iem_step(const GmmModel& model, const SuffStat& s, MemoryTable& memory,
                      std::span<const std::size_t> batch, double gamma) {
  return iem_step(model, s, memory, batch, gamma);
}

SuffStat gmm_onlineem_step(const GmmModel& model, const SuffStat& s, std::span<const std::size_t> batch,
                           double gamma) {
  return online_em_step(model, s, batch, gamma);
}

SuffStat gmm_fiem_step(const GmmModel& model, const SuffStat& s, MemoryTable& memory,
                       std::span<const std::size_t> batch_i, std::span<const std::size_t> batch_j, double gamma) {
  return fiem_step(model, s, memory, batch_i, batch_j, gamma);
}

PreprocessResult preprocess(const Eigen::MatrixXd& raw, std::size_t p_target) {
  if (raw.rows() < 2) throw ArgumentError("preprocess: need at least two observations");
  PreprocessResult out;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    if (raw.col(c).maxCoeff() > raw.col(c).minCoeff()) out.kept_columns.push_back(static_cast<std::size_t>(c));
  }
  if (p_target == 0 || p_target > out.kept_columns.size()) {
    throw ArgumentError(fmt::format("preprocess: p_target {} exceeds the {} informative features", p_target,
                                    out.kept_columns.size()));
  }
  const auto n = raw.rows();
  const auto d = static_cast<Eigen::Index>(out.kept_columns.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index c = 0; c < d; ++c) x.col(c) = raw.col(static_cast<Eigen::Index>(out.kept_columns[c]));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::RowVectorXd sd = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  x.array().rowwise() /= sd.array();
  const Eigen::MatrixXd cov = symmetrized(x.transpose() * x / static_cast<double>(n));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw LinearAlgebraError("preprocess: eigen-decomposition failed");
  out.eigenvalues = eig.eigenvalues().reverse();
  Eigen::MatrixXd basis = eig.eigenvectors().rowwise().reverse().leftCols(static_cast<Eigen::Index>(p_target));
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
  out.observations = x * basis;
  out.captured_variance = out.eigenvalues.head(static_cast<Eigen::Index>(p_target)).sum();
  return out;
}

SyntheticGmm generate_gmm_synthetic(std::uint64_t seed, std::size_t n, std::size_t g, std::size_t p,
                                    double separation) {
  if (g == 0 || p == 0) throw ArgumentError("generate_gmm_synthetic: g and p must be >= 1");
  if (n < g) throw ArgumentError("generate_gmm_synthetic: n must be >= g");
  if (!(separation >= 0.0)) throw ArgumentError("generate_gmm_synthetic: separation must be >= 0");
  CounterRng rng = substream(seed, streams::kData);
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> exponential;
  const auto gi = static_cast<Eigen::Index>(g);
  const auto pi = static_cast<Eigen::Index>(p);

  SyntheticGmm out;
  Eigen::VectorXd dirichlet(gi);
  for (Eigen::Index l = 0; l < gi; ++l) dirichlet(l) = exponential(rng);
  out.truth.weights = 0.5 / static_cast<double>(g) + 0.5 * (dirichlet / dirichlet.sum()).array();

  out.truth.means.resize(pi, gi);
  for (Eigen::Index l = 0; l < gi; ++l) {
    Eigen::VectorXd direction(pi);
    for (Eigen::Index k = 0; k < pi; ++k) direction(k) = normal(rng);
    out.truth.means.col(l) = separation * direction / direction.norm();
  }

  Eigen::MatrixXd b(pi, pi);
  for (Eigen::Index r = 0; r < pi; ++r) {
    for (Eigen::Index c = 0; c < pi; ++c) b(r, c) = normal(rng);
  }
  out.truth.covariance = symmetrized(0.5 * Eigen::MatrixXd::Identity(pi, pi) + 0.5 * b * b.transpose() / double(p));
  const Eigen::MatrixXd lower = out.truth.covariance.llt().matrixL();

  std::vector<double> cumulative(g);
  double acc = 0.0;
  for (std::size_t l = 0; l < g; ++l) cumulative[l] = acc += out.truth.weights(static_cast<Eigen::Index>(l));
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), pi);
  Eigen::VectorXd e(pi);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform01() * acc;
    std::size_t label = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                                 cumulative.begin());
    label = std::min(label, g - 1);
    out.labels[i] = label;
    for (Eigen::Index k = 0; k < pi; ++k) e(k) = normal(rng);
    y.row(static_cast<Eigen::Index>(i)) = (out.truth.means.col(static_cast<Eigen::Index>(label)) + lower * e).transpose();
  }
  out.data = GmmDataset::from_observations(std::move(y));
  return out;
}

GmmParams initialize_gmm(const GmmDataset& data, std::size_t g, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (g == 0 || n < g) throw ArgumentError("initialize_gmm: need 1 <= g <= n");
  const Eigen::MatrixXd& Y = data.observations;
  CounterRng rng = substream(seed, "gmm-init");
  const auto p = Y.cols();
  Eigen::MatrixXd centers(p, static_cast<Eigen::Index>(g));
  centers.col(0) = Y.row(static_cast<Eigen::Index>(uniform_index(rng, n))).transpose();
  Eigen::VectorXd dist(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    dist(static_cast<Eigen::Index>(i)) = (Y.row(static_cast<Eigen::Index>(i)).transpose() - centers.col(0)).squaredNorm();
  }
  for (std::size_t l = 1; l < g; ++l) {
    const double total = dist.sum();
    std::size_t pick = uniform_index(rng, n);
    if (total > 0.0) {
      double u = rng.uniform01() * total;
      for (std::size_t i = 0; i < n; ++i) {
        u -= dist(static_cast<Eigen::Index>(i));
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.col(static_cast<Eigen::Index>(l)) = Y.row(static_cast<Eigen::Index>(pick)).transpose();
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (Y.row(static_cast<Eigen::Index>(i)).transpose() - centers.col(static_cast<Eigen::Index>(l)))
                           .squaredNorm();
      dist(static_cast<Eigen::Index>(i)) = std::min(dist(static_cast<Eigen::Index>(i)), d);
    }
  }

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd y = Y.row(static_cast<Eigen::Index>(i)).transpose();
    Eigen::Index nearest = 0;
    (centers.colwise() - y).colwise().squaredNorm().minCoeff(&nearest);
    const Eigen::VectorXd r = y - centers.col(nearest);
    pooled.noalias() += r * r.transpose();
  }
  pooled /= static_cast<double>(n);
  const double ridge = 1e-6 * std::max(pooled.trace() / static_cast<double>(p), 1e-12);
  pooled.diagonal().array() += ridge;

  GmmParams out;
  out.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g), 1.0 / static_cast<double>(g));
  out.weights(static_cast<Eigen::Index>(g) - 1) = 1.0 - out.weights.head(static_cast<Eigen::Index>(g) - 1).sum();
  out.means = centers;
  out.covariance = symmetrized(pooled);
  return out;
}

}  // namespace fiem
