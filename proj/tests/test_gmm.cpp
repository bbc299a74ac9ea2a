#include <doctest.h>

#include <numbers>

#include "fiem/algorithms.hpp"
#include "fiem/errors.hpp"
#include "fiem/gmm.hpp"
#include "oracles.hpp"

using namespace fiem;

static_assert(FiniteSumModel<GmmModel>);
static_assert(HasObjective<GmmModel>);
static_assert(!HasCurvature<GmmModel>);

namespace {

GmmParams some_params(Eigen::Index p, Eigen::Index g) {
  GmmParams params;
  params.weights = Eigen::VectorXd::LinSpaced(g, 1.0, 2.0);
  params.weights /= params.weights.sum();
  params.means = Eigen::MatrixXd::Zero(p, g);
  for (Eigen::Index l = 0; l < g; ++l) {
    for (Eigen::Index j = 0; j < p; ++j) params.means(j, l) = std::sin(1.0 + static_cast<double>(l * p + j));
  }
  params.covariance = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index j = 0; j + 1 < p; ++j) params.covariance(j, j + 1) = params.covariance(j + 1, j) = 0.3;
  return params;
}

}  // namespace

TEST_CASE("posteriors and statistics match the dense reference") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(1, 20, 3, 4, 2.0);
  const GmmModel model(synthetic.data, 3);
  const GmmParams params = some_params(4, 3);
  const GmmParameter theta = model.make_parameter(params);
  for (std::size_t i = 0; i < 20; ++i) {
    const Eigen::VectorXd y = synthetic.data.observations.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd rho = oracle::gmm_posterior(params, y);
    CHECK((model.posterior(theta, i) - rho).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::VectorXd value = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.stat_dim()));
    model.accumulate_sbar_i(theta, i, 1.0, value);
    const Eigen::VectorXd dense = oracle::gmm_A_y(y, 3) * rho;
    CHECK((value - dense).cwiseAbs().maxCoeff() <= 1e-12);
  }
  const double offset = 0.5 * 4.0 * std::log(2.0 * std::numbers::pi);
  CHECK(model.loglik(theta) - offset ==
        doctest::Approx(oracle::gmm_loglik(params, synthetic.data.observations)).epsilon(1e-12));
}

TEST_CASE("M-step matches the closed form") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(2, 50, 2, 3, 1.5);
  const GmmModel model(synthetic.data, 2);
  const SuffStat s = sbar(model, model.make_parameter(some_params(3, 2)));
  const GmmParameter theta = model.tmap(s);
  const GmmParams ref = oracle::gmm_T(s, synthetic.data.observations, 2);
  CHECK((theta.params.weights - ref.weights).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((theta.params.means - ref.means).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((theta.params.covariance - ref.covariance).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(!model.admissibility(s).has_value());
}

TEST_CASE("EM never decreases the likelihood") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(3, 500, 3, 5, 2.0);
  const GmmModel model(synthetic.data, 3);
  SuffStat s = sbar(model, model.make_parameter(initialize_gmm(model.data(), 3, 1)));
  double previous = model.loglik(model.tmap(s));
  for (int epoch = 0; epoch < 30; ++epoch) {
    s = gmm_em_epoch(model, s);
    const double current = model.loglik(model.tmap(s));
    CHECK(current >= previous - 1e-9);
    previous = current;
  }
}

TEST_CASE("iEM stays inside the statistic domain") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(4, 300, 3, 4, 1.0);
  const GmmModel model(synthetic.data, 3);
  const GmmParameter theta0 = model.make_parameter(initialize_gmm(model.data(), 3, 2));
  RunOptions<GmmModel> options;
  options.batch_size = 10;
  options.initial_stat = sbar(model, theta0);
  options.initial_parameter = theta0;
  options.diagnostics = DiagnosticsFlags{false, false, false, false};
  double worst_total = 0.0;
  double worst_mass = 1.0;
  options.observer = [&](std::size_t, const SuffStat& s, const GmmParameter&) {
    worst_total = std::max(worst_total, std::abs(model.masses(s).sum() - 1.0));
    worst_mass = std::min(worst_mass, model.masses(s).minCoeff());
  };
  const RunDiagnostics d = run(Algorithm::IEM, model, StepSchedule::constant(300, 1.0), TerminationRule(), 1, options);
  CHECK(d.domain_violations == 0);
  CHECK(worst_total <= 1e-8);
  CHECK(worst_mass >= -1e-10);
}

TEST_CASE("domain violations are counted or abort the run") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(5, 100, 2, 3, 2.0);
  const GmmModel model(synthetic.data, 2);
  const GmmParameter theta0 = model.make_parameter(initialize_gmm(model.data(), 2, 1));
  RunOptions<GmmModel> options;
  options.initial_stat = sbar(model, theta0) * 1.01;
  options.diagnostics = DiagnosticsFlags{false, false, false, false};
  const StepSchedule schedule = StepSchedule::constant(3, 0.1);
  const RunDiagnostics warned = run(Algorithm::OnlineEM, model, schedule, TerminationRule(), 1, options);
  CHECK(warned.domain_violations >= 1);
  CHECK(!warned.first_violation.empty());
  options.domain_policy = DomainPolicy::Abort;
  CHECK_THROWS_AS(run(Algorithm::OnlineEM, model, schedule, TerminationRule(), 1, options), RunAborted);
}

TEST_CASE("named mixture steps agree with the generic steps") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(6, 60, 2, 3, 2.0);
  const GmmModel model(synthetic.data, 2);
  const GmmParameter theta0 = model.make_parameter(initialize_gmm(model.data(), 2, 3));
  const SuffStat s = sbar(model, theta0);
  CHECK(gmm_em_epoch(model, s) == em_step(model, s));
  const std::vector<std::size_t> batch{1, 5, 7};
  CHECK(gmm_onlineem_step(model, s, batch, 0.2) == online_em_step(model, s, batch, 0.2));
  MemoryTable a = MemoryTable::from_model(model, theta0);
  MemoryTable b = a;
  CHECK(gmm_iem_step(model, s, a, batch, 0.5) == iem_step(model, s, b, batch, 0.5));
  const std::vector<std::size_t> other{2, 2, 9};
  CHECK(gmm_fiem_step(model, s, a, batch, other, 0.1) == fiem_step(model, s, b, batch, other, 0.1));
}

TEST_CASE("synthetic mixtures and initialization are valid") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(7, 400, 2, 3, 0.0);
  CHECK(synthetic.truth.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(synthetic.labels.size() == 400);
  const GmmParams init = initialize_gmm(synthetic.data, 2, 5);
  CHECK(init.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(Eigen::LLT<Eigen::MatrixXd>(init.covariance).info() == Eigen::Success);
  const GmmParams again = initialize_gmm(synthetic.data, 2, 5);
  CHECK(again.means == init.means);
}

TEST_CASE("preprocessing drops constant columns and whitens to principal components") {
  const SyntheticGmm synthetic = generate_gmm_synthetic(8, 200, 2, 5, 1.0);
  Eigen::MatrixXd raw(200, 6);
  raw.leftCols(5) = synthetic.data.observations;
  raw.col(5).setConstant(3.0);
  const PreprocessResult pre = preprocess(raw, 3);
  CHECK(pre.kept_columns.size() == 5);
  REQUIRE(pre.observations.cols() == 3);
  const Eigen::MatrixXd centered = pre.observations.rowwise() - pre.observations.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 200.0;
  for (Eigen::Index a = 0; a < 3; ++a) {
    for (Eigen::Index b = 0; b < 3; ++b) {
      if (a != b) CHECK(std::abs(cov(a, b)) <= 1e-10);
    }
    CHECK(cov(a, a) == doctest::Approx(pre.eigenvalues(a)).epsilon(1e-6));
  }
  CHECK(pre.eigenvalues(0) >= pre.eigenvalues(1));
}

TEST_CASE("mixture parameters survive a JSON round trip") {
  const GmmParams params = some_params(3, 2);
  const GmmParams back = gmm_params_from_json(nlohmann::json::parse(gmm_params_to_json(params).dump()));
  CHECK(back.weights == params.weights);
  CHECK(back.means == params.means);
  CHECK(back.covariance == params.covariance);
}
