#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "plotcast/frames.hpp"
#include "plotcast/gbm.hpp"
#include "plotcast/random.hpp"

using namespace plotcast;

namespace {

std::vector<Eigen::VectorXd> scalars(const std::vector<double>& v) {
  std::vector<Eigen::VectorXd> out;
  for (double x : v) out.push_back(Eigen::VectorXd::Constant(1, x));
  return out;
}

std::vector<double> random_points(Rng& rng, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(rng.uniform() * 10.0);
  return x;
}

}  // namespace

TEST_CASE("constant targets are predicted exactly") {
  Rng rng(1);
  std::vector<Eigen::VectorXd> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(Eigen::VectorXd::Random(3));
    y.push_back(Eigen::Vector2d(0.3, 0.7));
  }
  const auto model = fit_gbm(x, y, GbmConfig{});
  for (const auto& xi : x) CHECK(model.predict_raw(xi) == Eigen::Vector2d(0.3, 0.7));
  for (const auto& per_dim : model.trees())
    for (const auto& tree : per_dim) {
      CHECK(tree.leaf_count() == 1);
      CHECK(tree.nodes()[0].value == 0.0);
    }
}

TEST_CASE("identity map is learned by stump boosting and matches the oracle") {
  Rng rng(2);
  const auto xs = random_points(rng, 16);
  GbmConfig config;
  config.n_estimators = 300;
  config.max_depth = 1;
  config.max_leaves = 2;
  config.learning_rate = 1.0;
  config.min_samples_leaf = 1;
  const auto model = fit_gbm(scalars(xs), scalars(xs), config);
  CHECK(model.training_loss().back() < 1e-3);

  const auto oracle = oracles::fit_stump_boost(xs, xs, config.n_estimators, 1.0);
  for (double x : xs) CHECK(std::abs(model.predict_raw(Eigen::VectorXd::Constant(1, x))[0] - oracle.predict(x)) < 1e-9);
  for (int i = 0; i < 50; ++i) {
    const double probe = rng.uniform() * 12.0 - 1.0;
    CHECK(std::abs(model.predict_raw(Eigen::VectorXd::Constant(1, probe))[0] - oracle.predict(probe)) < 1e-9);
  }
}

TEST_CASE("fractional learning rate also matches the stump oracle") {
  Rng rng(9);
  const auto xs = random_points(rng, 12);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(std::sin(x) + 0.1 * rng.normal());
  GbmConfig config{25, 1, 2, 0.3, 2};
  const auto model = fit_gbm(scalars(xs), scalars(ys), config);
  const auto oracle = oracles::fit_stump_boost(xs, ys, 25, 0.3, 2);
  for (double x : xs) CHECK(std::abs(model.predict_raw(Eigen::VectorXd::Constant(1, x))[0] - oracle.predict(x)) < 1e-9);
}

TEST_CASE("training loss never increases") {
  Rng rng(4);
  std::vector<Eigen::VectorXd> x, y;
  for (int i = 0; i < 60; ++i) {
    Eigen::VectorXd a(4), b(3);
    for (int d = 0; d < 4; ++d) a[d] = rng.uniform();
    for (int d = 0; d < 3; ++d) b[d] = rng.uniform();
    x.push_back(a);
    y.push_back(b);
  }
  const auto model = fit_gbm(x, y, GbmConfig{});
  REQUIRE(model.training_loss().size() == 101);
  for (std::size_t r = 1; r < model.training_loss().size(); ++r)
    CHECK(model.training_loss()[r] <= model.training_loss()[r - 1]);
}

TEST_CASE("zero estimators predicts the normalized base score") {
  std::vector<Eigen::VectorXd> x{Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)};
  std::vector<Eigen::VectorXd> y{Eigen::Vector3d(1, -4, 2), Eigen::Vector3d(3, 0, 2)};
  GbmConfig config;
  config.n_estimators = 0;
  const auto model = fit_gbm(x, y, config);
  const Eigen::VectorXd expected = clamp_normalize(Eigen::Vector3d(2, -2, 2));
  CHECK((model.predict(Eigen::Vector2d(0.5, 0.5)) - expected).norm() < 1e-15);
}

TEST_CASE("max_leaves = n memorizes duplicate-free 1-D data in one tree") {
  Rng rng(6);
  const auto xs = random_points(rng, 10);
  std::vector<double> ys;
  for (int i = 0; i < 10; ++i) ys.push_back(rng.normal());
  GbmConfig config{1, 0, 10, 1.0, 1};
  const auto model = fit_gbm(scalars(xs), scalars(ys), config);
  for (int i = 0; i < 10; ++i)
    CHECK(model.predict_raw(Eigen::VectorXd::Constant(1, xs[static_cast<std::size_t>(i)]))[0] ==
          doctest::Approx(ys[static_cast<std::size_t>(i)]).epsilon(1e-12));
}

TEST_CASE("trees honor leaf and depth limits and outputs stay within leaf bounds") {
  Rng rng(7);
  std::vector<Eigen::VectorXd> x, y;
  for (int i = 0; i < 80; ++i) {
    Eigen::VectorXd a(3);
    for (int d = 0; d < 3; ++d) a[d] = rng.uniform();
    x.push_back(a);
    y.push_back(Eigen::VectorXd::Constant(1, a[0] * a[1] + rng.normal() * 0.1));
  }
  GbmConfig config{30, 3, 5, 0.1, 2};
  const auto model = fit_gbm(x, y, config);
  double lo = model.base_score()[0], hi = lo;
  for (const auto& tree : model.trees()[0]) {
    CHECK(tree.leaf_count() <= 5);
    CHECK(tree.depth() <= 3);
    lo += config.learning_rate * tree.min_leaf();
    hi += config.learning_rate * tree.max_leaf();
  }
  for (const auto& xi : x) {
    const double raw = model.predict_raw(xi)[0];
    CHECK(raw >= lo - 1e-12);
    CHECK(raw <= hi + 1e-12);
  }
}

TEST_CASE("predictions are non-negative with unit or zero norm") {
  Rng rng(8);
  std::vector<Eigen::VectorXd> x, y;
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd a(4);
    for (int d = 0; d < 4; ++d) a[d] = rng.uniform();
    x.push_back(a);
    y.push_back(clamp_normalize(a.reverse() - Eigen::VectorXd::Constant(4, 0.3)));
  }
  const auto model = fit_gbm(x, y, GbmConfig{});
  for (const auto& xi : x) {
    const auto p = model.predict(xi);
    CHECK(p.minCoeff() >= 0.0);
    CHECK((p.norm() == 0.0 || std::abs(p.norm() - 1.0) < 1e-12));
  }
}

TEST_CASE("fitting is deterministic and serialization round-trips") {
  Rng rng(10);
  std::vector<Eigen::VectorXd> x, y;
  for (int i = 0; i < 30; ++i) {
    Eigen::VectorXd a(2);
    a << rng.uniform(), rng.uniform();
    x.push_back(a);
    y.push_back(Eigen::Vector2d(a[1], a[0] * a[0]));
  }
  const auto a = fit_gbm(x, y, GbmConfig{}, 3);
  const auto b = fit_gbm(x, y, GbmConfig{}, 3);
  CHECK(a.to_json().dump() == b.to_json().dump());

  const auto path = std::filesystem::temp_directory_path() / "plotcast_gbm_roundtrip.json";
  a.save(path);
  const auto c = GbmForest::load(path);
  std::filesystem::remove(path);
  for (const auto& xi : x) CHECK(c.predict_raw(xi) == a.predict_raw(xi));
}

TEST_CASE("dimension errors") {
  std::vector<Eigen::VectorXd> x{Eigen::Vector2d(0, 1), Eigen::Vector3d(1, 0, 0)};
  std::vector<Eigen::VectorXd> y{Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)};
  CHECK_THROWS(fit_gbm(x, y, GbmConfig{}));
  x[1] = Eigen::Vector2d(1, 0);
  const auto model = fit_gbm(x, y, GbmConfig{});
  CHECK_THROWS(model.predict(Eigen::Vector3d(1, 2, 3)));
  CHECK_THROWS(fit_gbm(std::vector<Eigen::VectorXd>{x[0]}, std::vector<Eigen::VectorXd>{y[0]}, GbmConfig{}));
}
