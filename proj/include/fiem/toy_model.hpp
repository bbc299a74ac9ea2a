#pragma once

// Gaussian linear latent model: Y_i | Z_i ~ N(A Z_i, I), Z_i ~ N(X theta, I),
// with penalty upsilon |theta|^2 / 2. Everything is affine in the statistic.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "fiem/memory_table.hpp"
#include "fiem/model.hpp"

namespace fiem {

struct ToyDims {
  std::size_t y_dim = 15;
  std::size_t p_dim = 10;
  std::size_t q_dim = 20;
};

struct ToyGenerationConfig {
  ToyDims dims;
  double rho = 0.8;        // AR(1) coefficient across the columns of A
  double rho_tilde = 0.9;  // same for X
  double sparsity = 0.4;   // fraction of zero entries of theta_true
  double range_lo = -5.0;
  double range_hi = 5.0;
  double upsilon = 0.1;
};

struct ToyModelSpec {
  Eigen::MatrixXd A;             // y x p
  Eigen::MatrixXd X;             // p x q
  double upsilon = 0.0;
  Eigen::MatrixXd observations;  // n x y
  Eigen::VectorXd theta_true;    // empty when unknown
};

ToyModelSpec generate_toy(std::uint64_t seed, std::size_t n, const ToyGenerationConfig& config = {});

nlohmann::ordered_json toy_spec_to_json(const ToyModelSpec& spec);
ToyModelSpec toy_spec_from_json(const nlohmann::json& doc);

struct ToyParameter {
  Eigen::VectorXd theta;
  Eigen::VectorXd g_theta;  // X^T (I + A^T A)^{-1} X theta
};

class ToyModel {
 public:
  using Parameter = ToyParameter;

  explicit ToyModel(ToyModelSpec spec);

  std::size_t size() const { return static_cast<std::size_t>(spec_.observations.rows()); }
  std::size_t stat_dim() const { return static_cast<std::size_t>(spec_.X.cols()); }

  std::optional<std::string> admissibility(const SuffStat& s) const;
  ToyParameter tmap(const SuffStat& s) const;
  ToyParameter make_parameter(const Eigen::VectorXd& theta) const;
  void accumulate_sbar_i(const ToyParameter& theta, std::size_t i, double weight, Eigen::VectorXd& out) const;
  SuffStat mean_sbar(const ToyParameter& theta) const;
  double objective(const ToyParameter& theta) const;
  Eigen::MatrixXd curvature(const SuffStat& s) const;
  ModelConstants constants() const;
  double parameter_distance(const ToyParameter& a, const ToyParameter& b) const;

  const ToyModelSpec& spec() const { return spec_; }
  const Eigen::MatrixXd& pi1() const { return pi1_; }
  const Eigen::MatrixXd& pi2() const { return pi2_; }
  const Eigen::MatrixXd& g_matrix() const { return g_; }
  const Eigen::MatrixXd& tmat() const { return tmat_; }
  const Eigen::VectorXd& ybar() const { return ybar_; }
  const Eigen::VectorXd& pi1_ybar() const { return pi1_ybar_; }
  // Column i is Pi_1 Y_i.
  const Eigen::MatrixXd& pi1_y() const { return pi1_y_; }

  Eigen::VectorXd theta_star() const;
  // Fixed point of s -> Pi_1 Ybar + Pi_2 s.
  SuffStat s_star() const;

  // Spectral radius of Tmat (Pi_2 - I) by power iteration.
  double lipschitz_gradv_power_iteration(std::size_t max_iterations = 100000, double tolerance = 1e-14) const;

 private:
  ToyModelSpec spec_;
  Eigen::MatrixXd tmat_;
  Eigen::MatrixXd pi1_;
  Eigen::MatrixXd pi2_;
  Eigen::MatrixXd g_;
  Eigen::MatrixXd pi1_y_;
  Eigen::VectorXd ybar_;
  Eigen::VectorXd pi1_ybar_;
  Eigen::MatrixXd gamma_inv_;  // (I + A A^T)^{-1}
  Eigen::MatrixXd quad_;       // (AX)^T (I + A A^T)^{-1} AX
  double trace_term_ = 0.0;    // n^{-1} sum_i Y_i^T (I + A A^T)^{-1} Y_i
  double log_det_gamma_ = 0.0;
  double v_min_ = 0.0;
  double v_max_ = 0.0;
  double l_rms_ = 0.0;
  double l_gradv_ = 0.0;
};

// One iteration of the hand-written toy recursions.
SuffStat toy_em_step(const ToyModel& model, const SuffStat& s);

struct ToyStep {
  SuffStat next;
  double lambda = 0.0;
};

// Online EM (lambda = 0), FIEM (lambda = 1) or opt-FIEM (nullopt) on the pair
// (I, J) = (i, j). `memory` may be null only when lambda == 0.
ToyStep toy_algorithm_step(const ToyModel& model, const SuffStat& s, MemoryTable* memory, std::size_t i,
                           std::size_t j, double gamma, std::optional<double> lambda);

}  // namespace fiem
