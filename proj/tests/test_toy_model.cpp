#include <doctest.h>

#include <numbers>
#include <random>

#include "fiem/algorithms.hpp"
#include "fiem/toy_model.hpp"
#include "oracles.hpp"

using namespace fiem;

static_assert(FiniteSumModel<ToyModel>);
static_assert(HasObjective<ToyModel>);
static_assert(HasCurvature<ToyModel>);
static_assert(HasConstants<ToyModel>);
static_assert(HasParameterDistance<ToyModel>);

namespace {

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index size, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(size);
  for (Eigen::Index j = 0; j < size; ++j) v(j) = normal(rng);
  return v;
}

double rel_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / (1.0 + b.norm());
}

}  // namespace

TEST_CASE("generated toy data has the requested shape") {
  const ToyModelSpec spec = generate_toy(11, 30);
  CHECK(spec.A.rows() == 15);
  CHECK(spec.A.cols() == 10);
  CHECK(spec.X.rows() == 10);
  CHECK(spec.X.cols() == 20);
  CHECK(spec.observations.rows() == 30);
  CHECK(spec.observations.cols() == 15);
  int zeros = 0;
  for (Eigen::Index j = 0; j < 20; ++j) {
    if (spec.theta_true(j) == 0.0) ++zeros;
    CHECK(spec.theta_true(j) >= -5.0);
    CHECK(spec.theta_true(j) <= 5.0);
  }
  CHECK(zeros == 8);
  const ToyModelSpec again = generate_toy(11, 30);
  CHECK(again.observations == spec.observations);
  CHECK(generate_toy(12, 30).observations != spec.observations);
}

TEST_CASE("conditional expectations, M-step and objective match the direct formulas") {
  const ToyModelSpec spec = generate_toy(3, 25);
  const ToyModel model(spec);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd s = random_vector(rng, 20, 3.0);
    const ToyParameter theta = model.tmap(s);
    CHECK(rel_diff(theta.theta, oracle::toy_T(spec, s)) <= 1e-10);
    for (Eigen::Index i : {0, 7, 24}) {
      Eigen::VectorXd value = Eigen::VectorXd::Zero(20);
      model.accumulate_sbar_i(theta, static_cast<std::size_t>(i), 1.0, value);
      CHECK(rel_diff(value, oracle::toy_sbar_i(spec, theta.theta, i)) <= 1e-10);
    }
    CHECK(rel_diff(model.mean_sbar(theta), oracle::toy_sbar(spec, theta.theta)) <= 1e-10);
    const double offset = 0.5 * 15.0 * std::log(2.0 * std::numbers::pi);
    CHECK(model.objective(theta) + offset == doctest::Approx(oracle::toy_F(spec, theta.theta)).epsilon(1e-10));
  }
}

TEST_CASE("model constants match eigen and singular value computations") {
  const ToyModelSpec spec = generate_toy(5, 40);
  const ToyModel model(spec);
  const ModelConstants c = model.constants();

  const Eigen::MatrixXd m = spec.upsilon * Eigen::MatrixXd::Identity(20, 20) + spec.X.transpose() * spec.X;
  const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues();
  CHECK(c.v_min == doctest::Approx(1.0 / eig.maxCoeff()).epsilon(1e-10));
  CHECK(c.v_max == doctest::Approx(1.0 / eig.minCoeff()).epsilon(1e-10));

  // s -> sbar_i(T(s)) is affine; its linear part is the same for every i.
  Eigen::MatrixXd jac(20, 20);
  const Eigen::VectorXd base = oracle::toy_sbar_i(spec, oracle::toy_T(spec, Eigen::VectorXd::Zero(20)), 3);
  for (Eigen::Index j = 0; j < 20; ++j) {
    jac.col(j) = oracle::toy_sbar_i(spec, oracle::toy_T(spec, Eigen::VectorXd::Unit(20, j)), 3) - base;
  }
  CHECK(c.lipschitz_rms == doctest::Approx(oracle::spectral_norm(jac)).epsilon(1e-8));

  // V is quadratic, so second differences recover its Hessian.
  Eigen::MatrixXd hess(20, 20);
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(20);
  const double v0 = oracle::toy_V(spec, origin);
  for (Eigen::Index j = 0; j < 20; ++j) {
    for (Eigen::Index k = 0; k < 20; ++k) {
      const Eigen::VectorXd ej = Eigen::VectorXd::Unit(20, j);
      const Eigen::VectorXd ek = Eigen::VectorXd::Unit(20, k);
      hess(j, k) = oracle::toy_V(spec, ej + ek) - oracle::toy_V(spec, ej) - oracle::toy_V(spec, ek) + v0;
    }
  }
  CHECK(c.lipschitz_gradv == doctest::Approx(oracle::spectral_norm(hess)).epsilon(1e-6));
  CHECK(model.lipschitz_gradv_power_iteration() == doctest::Approx(c.lipschitz_gradv).epsilon(1e-8));
}

TEST_CASE("gradient of V equals -B h") {
  const ToyModelSpec spec = generate_toy(8, 50);
  const ToyModel model(spec);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd s = random_vector(rng, 20, 5.0);
    const Eigen::VectorXd grad =
        oracle::fd_gradient([&](const Eigen::VectorXd& x) { return oracle::toy_V(spec, x); }, s);
    const Eigen::VectorXd predicted = -model.curvature(s) * mean_field(model, s);
    CHECK((grad - predicted).norm() / (1.0 + grad.norm()) <= 1e-6);
    CHECK(rel_diff(mean_field(model, s), oracle::toy_h(spec, s)) <= 1e-10);
  }
}

TEST_CASE("the stationary point is a fixed point of EM") {
  const ToyModelSpec spec = generate_toy(4, 60);
  const ToyModel model(spec);
  const SuffStat s_star = model.s_star();
  CHECK(oracle::toy_h(spec, s_star).norm() <= 1e-9 * (1.0 + s_star.norm()));
  CHECK(rel_diff(model.theta_star(), oracle::toy_T(spec, s_star)) <= 1e-10);
  const SuffStat s = SuffStat::Constant(20, 0.3);
  CHECK(rel_diff(toy_em_step(model, s), em_step(model, s)) <= 1e-13);
}

TEST_CASE("hand-written recursions reproduce the generic steps bitwise") {
  const ToyModel model(generate_toy(6, 12));
  const SuffStat s = SuffStat::LinSpaced(20, -1.0, 2.0);
  const ToyParameter theta0 = model.tmap(SuffStat::Zero(20));
  const std::size_t i = 4;
  const std::size_t j = 9;
  const std::vector<std::size_t> bi{i};
  const std::vector<std::size_t> bj{j};

  const ToyStep online = toy_algorithm_step(model, s, nullptr, i, j, 0.3, 0.0);
  CHECK(online.next == online_em_step(model, s, bj, 0.3));

  MemoryTable m1 = MemoryTable::from_model(model, theta0);
  MemoryTable m2 = m1;
  const ToyStep fiem = toy_algorithm_step(model, s, &m1, i, j, 0.3, 1.0);
  CHECK(fiem.next == fiem_step(model, s, m2, bi, bj, 0.3));

  MemoryTable m3 = MemoryTable::from_model(model, theta0);
  MemoryTable m4 = m3;
  const ToyStep opt = toy_algorithm_step(model, s, &m3, i, j, 0.3, std::nullopt);
  const OptFiemStep generic = opt_fiem_step(model, s, m4, bi, bj, 0.3);
  CHECK(opt.lambda == generic.lambda);
  CHECK(opt.next == generic.next);
}

TEST_CASE("toy spec survives a JSON round trip") {
  const ToyModelSpec spec = generate_toy(2, 5);
  const ToyModelSpec back = toy_spec_from_json(nlohmann::json::parse(toy_spec_to_json(spec).dump()));
  CHECK(back.A == spec.A);
  CHECK(back.X == spec.X);
  CHECK(back.observations == spec.observations);
  CHECK(back.theta_true == spec.theta_true);
  CHECK(back.upsilon == spec.upsilon);
}
