#pragma once

// Gaussian mixture with a covariance shared by all components.
//
// Statistic layout (q = g + p g): s[0..g) are the component masses and block l
// of length p starting at g + l p is the weighted sum of observations of
// component l.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fiem/algorithms.hpp"
#include "fiem/model.hpp"

namespace fiem {

struct GmmParams {
  Eigen::VectorXd weights;     // g
  Eigen::MatrixXd means;       // p x g, column l is mu_l
  Eigen::MatrixXd covariance;  // p x p
};

nlohmann::ordered_json gmm_params_to_json(const GmmParams& params);
GmmParams gmm_params_from_json(const nlohmann::json& doc);

struct GmmDataset {
  Eigen::MatrixXd observations;   // n x p
  Eigen::MatrixXd second_moment;  // n^{-1} sum_i y_i y_i^T

  static GmmDataset from_observations(Eigen::MatrixXd observations);
  std::size_t size() const { return static_cast<std::size_t>(observations.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(observations.cols()); }
};

// Parameter together with the quantities every posterior evaluation needs.
struct GmmParameter {
  GmmParams params;
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd log_weights;
  Eigen::MatrixXd precision_means;  // Sigma^{-1} mu_l, p x g
  Eigen::VectorXd mean_quad;        // mu_l^T Sigma^{-1} mu_l
  double log_det = 0.0;
};

class GmmModel {
 public:
  using Parameter = GmmParameter;

  GmmModel(GmmDataset data, std::size_t components);

  std::size_t size() const { return data_.size(); }
  std::size_t stat_dim() const { return g_ + g_ * p_; }
  std::size_t components() const { return g_; }
  std::size_t dim() const { return p_; }
  const GmmDataset& data() const { return data_; }

  std::optional<std::string> admissibility(const SuffStat& s) const;
  GmmParameter tmap(const SuffStat& s) const;
  // Validates weights (simplex within 1e-10) and covariance (SPD).
  GmmParameter make_parameter(GmmParams params) const;

  Eigen::VectorXd posterior(const GmmParameter& theta, std::size_t i) const;
  void accumulate_sbar_i(const GmmParameter& theta, std::size_t i, double weight, Eigen::VectorXd& out) const;
  // -n^{-1} sum_i log sum_l alpha_l N(mu_l, Sigma)[y_i], without p log(2 pi) / 2.
  double objective(const GmmParameter& theta) const;
  double parameter_distance(const GmmParameter& a, const GmmParameter& b) const;

  double loglik(const GmmParameter& theta) const { return -objective(theta); }

  // Masses and mean blocks of a statistic.
  Eigen::VectorXd masses(const SuffStat& s) const { return s.head(static_cast<Eigen::Index>(g_)); }
  Eigen::VectorXd block(const SuffStat& s, std::size_t l) const;

 private:
  GmmDataset data_;
  std::size_t g_;
  std::size_t p_;
};

double gmm_loglik(const GmmParameter& theta, const GmmModel& model);

// Named steps of the mixture recursions; thin wrappers over the generic engines.
SuffStat gmm_em_epoch(const GmmModel& model, const SuffStat& s);
SuffStat gmm_iem_step(const GmmModel& model, const SuffStat& s, MemoryTable& memory,
                      std::span<const std::size_t> batch, double gamma);
SuffStat gmm_onlineem_step(const GmmModel& model, const SuffStat& s, std::span<const std::size_t> batch,
                           double gamma);
SuffStat gmm_fiem_step(const GmmModel& model, const SuffStat& s, MemoryTable& memory,
                       std::span<const std::size_t> batch_i, std::span<const std::size_t> batch_j, double gamma);

struct PreprocessResult {
  Eigen::MatrixXd observations;          // n x p_target
  std::vector<std::size_t> kept_columns;
  Eigen::VectorXd eigenvalues;           // descending, of the standardized covariance
  double captured_variance = 0.0;        // sum of the top p_target eigenvalues
};

// Drops constant features, standardizes, projects onto the top principal components.
PreprocessResult preprocess(const Eigen::MatrixXd& raw, std::size_t p_target);

struct SyntheticGmm {
  GmmDataset data;
  GmmParams truth;
  std::vector<std::size_t> labels;
};

SyntheticGmm generate_gmm_synthetic(std::uint64_t seed, std::size_t n, std::size_t g, std::size_t p,
                                    double separation);

// k-means++ seeding from data points, uniform weights, pooled within-cluster covariance.
GmmParams initialize_gmm(const GmmDataset& data, std::size_t g, std::uint64_t seed);

// The paper preset step size for Online EM and FIEM on mixtures.
inline constexpr double kGmmPresetGamma = 5e-3;

}  // namespace fiem
