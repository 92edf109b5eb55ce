#include <doctest.h>

#include <cmath>
#include <random>

#include "mkofl/edge_node.hpp"
#include "mkofl/errors.hpp"
#include "mkofl/evaluation.hpp"

using namespace mkofl;

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

Vector gaussian(Eigen::Index n, Rng& rng) { return gaussian_matrix(n, 1, rng).col(0); }

}  // namespace

TEST_CASE("running mse") {
  const std::vector<std::vector<double>> labels{{1.0}, {2.0}};
  CHECK(mse_trace(labels, labels) == std::vector<double>{0.0, 0.0});
  const std::vector<std::vector<double>> preds{{2.0}, {2.0}};
  const auto m = mse_trace(preds, labels);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == 0.5);
  CHECK_THROWS_AS(mse_trace(preds, {{1.0}}), ShapeError);
}

TEST_CASE("running mse matches a from-scratch recompute") {
  Rng rng(1);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<std::vector<double>> p(60, std::vector<double>(7)), y(60, std::vector<double>(7));
  for (auto& row : p)
    for (auto& v : row) v = d(rng);
  for (auto& row : y)
    for (auto& v : row) v = d(rng);
  const auto m = mse_trace(p, y);
  for (std::size_t t = 0; t < 60; ++t) {
    double s = 0.0;
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t k = 0; k < 7; ++k) s += (p[r][k] - y[r][k]) * (p[r][k] - y[r][k]);
    const double oracle = s / (7.0 * static_cast<double>(t + 1));
    CHECK(std::abs(m[t] - oracle) <= 1e-12 * std::max(1.0, oracle));
  }
}

TEST_CASE("ridge hindsight optimality") {
  Rng rng(2);
  const auto Z = gaussian_matrix(200, 12, rng);
  const Vector y = gaussian(200, rng);
  const double lambda = 0.01;
  const auto sol = best_hindsight(Z, y, lambda);
  CHECK_FALSE(sol.minimum_norm);
  const Vector grad = 2.0 * Z.transpose() * (Z * sol.w - y) + 2.0 * 200 * lambda * sol.w;
  CHECK(grad.norm() <= 1e-8 * (1.0 + (Z.transpose() * y).norm()));
  CHECK(sol.loss == doctest::Approx(cumulative_loss(sol.w, Z, y, lambda)));
  // No fixed predictor does better.
  for (int i = 0; i < 100; ++i) CHECK(sol.loss <= cumulative_loss(gaussian(12, rng), Z, y, lambda) + 1e-9);
  CHECK(cumulative_loss(sol.w + 1e-3 * gaussian(12, rng), Z, y, lambda) >= sol.loss);
}

TEST_CASE("heavy ridge shrinks to zero") {
  Rng rng(3);
  const auto Z = gaussian_matrix(50, 6, rng);
  const Vector y = gaussian(50, rng);
  CHECK(best_hindsight(Z, y, 1e9).w.norm() <= 1e-8);
  CHECK(best_hindsight(Z, y, 1e3).w.norm() < best_hindsight(Z, y, 1.0).w.norm());
}

TEST_CASE("noiseless recovery without regularization") {
  Rng rng(4);
  const auto Z = gaussian_matrix(80, 10, rng);
  const Vector w0 = gaussian(10, rng);
  const Vector y = Z * w0;
  const auto sol = best_hindsight(Z, y, 0.0);
  CHECK((Z * sol.w - y).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("singular system returns the minimum-norm solution") {
  Rng rng(5);
  Eigen::MatrixXd Z = gaussian_matrix(5, 8, rng);  // more columns than rows
  const Vector y = gaussian(5, rng);
  const auto sol = best_hindsight(Z, y, 0.0);
  CHECK(sol.minimum_norm);
  CHECK((Z * sol.w - y).norm() <= 1e-10);
  const Vector pinv = Z.transpose() * (Z * Z.transpose()).ldlt().solve(y);
  CHECK((sol.w - pinv).norm() <= 1e-9);
}

TEST_CASE("finite radius gives a stationary point on the ball") {
  Rng rng(6);
  const auto Z = gaussian_matrix(100, 6, rng);
  const Vector y = 5.0 * gaussian(100, rng);
  const auto free = best_hindsight(Z, y, 0.01);
  const double C = 0.25 * free.w.norm();
  const auto sol = best_hindsight(Z, y, 0.01, C);
  CHECK(sol.projected);
  CHECK(sol.w.norm() <= C + 1e-12);
  for (int i = 0; i < 100; ++i) {
    const Vector w = project_ball(gaussian(6, rng), C);
    CHECK(sol.loss <= cumulative_loss(w, Z, y, 0.01) + 1e-6);
  }
  const auto loose = best_hindsight(Z, y, 0.01, 10.0 * free.w.norm());
  CHECK_FALSE(loose.projected);
}

TEST_CASE("regret report") {
  const std::vector<double> h{5.0, 3.0, 4.0};
  const auto r = regret(3.0, h, 100);
  CHECK(r.regret == 0.0);
  CHECK(r.comparator == 1);
  const auto r2 = regret(7.0, h, 100);
  CHECK(r2.regret == 4.0);
  CHECK(r2.regret_over_t == doctest::Approx(0.04));
  CHECK(r2.regret_over_sqrt_t == doctest::Approx(0.4));
  CHECK(r2.per_kernel_gaps == std::vector<double>{2.0, 4.0, 3.0});
  const auto fixed = regret(7.0, h, 100, KernelId{2});
  CHECK(fixed.fixed_kernel);
  CHECK(fixed.comparator == 2);
  CHECK(fixed.regret == 3.0);
}

TEST_CASE("centralized PMF") {
  SUBCASE("zero losses stay uniform") {
    const LossHistory zero(10, std::vector<std::vector<double>>(3, std::vector<double>(4, 0.0)));
    const std::vector<double> eta(10, 0.7);
    for (const auto& q : centralized_pmf(zero, eta, true).pmf)
      for (double v : q) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("single node equals the node's own Hedge PMF") {
    Rng rng(7);
    const std::size_t P = 4, dim = 6, T = 200;
    EdgeNode node(0, P, dim, Rng(8));
    LossHistory history;
    std::vector<double> eta;
    std::vector<std::vector<double>> node_pmf;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t t = 1; t <= T; ++t) {
      std::vector<FeatureVector> zs;
      for (std::size_t p = 0; p < P; ++p) zs.push_back(gaussian(dim, rng).normalized());
      const auto l = node.local_update(zs, u(rng), 1.0 / std::sqrt(static_cast<double>(t)), LossConfig{});
      history.push_back({std::vector<double>(l.begin(), l.end())});
      eta.push_back(std::log(static_cast<double>(P)) / std::sqrt(static_cast<double>(t)));
      node.update_hedge(eta.back(), 1, true);
      node_pmf.push_back(node.pmf());
    }
    const auto central = centralized_pmf(history, eta, true).pmf;
    for (std::size_t t = 0; t < T; ++t) {
      CHECK(total_variation(central[t], node_pmf[t]) <= 1e-12);
    }
  }
}

TEST_CASE("total variation and network PMF") {
  const std::vector<double> a{0.5, 0.5, 0.0}, b{0.0, 0.5, 0.5};
  CHECK(total_variation(a, b) == doctest::Approx(0.5));
  CHECK(total_variation(a, a) == 0.0);

  const std::vector<KernelId> proposals{0, 0, 1};
  const std::vector<std::vector<double>> same(3, std::vector<double>{0.2, 0.3, 0.5});
  const auto q = network_pmf(proposals, same);
  for (std::size_t p = 0; p < 3; ++p) CHECK(q[p] == doctest::Approx(same[0][p]));

  // alpha = (c^{K-1}) / sum c^K: nodes 1,2 get 4/9 each, node 3 gets 1/9.
  const std::vector<std::vector<double>> onehot{{1, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const auto r = network_pmf(proposals, onehot);
  CHECK(r[0] == doctest::Approx(8.0 / 9.0));
  CHECK(r[1] == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("selection fraction") {
  const std::vector<std::vector<KernelId>> all{{3, 3, 3}, {3, 3, 3}};
  CHECK(selection_fraction(all, 3) == std::vector<double>{1.0, 1.0, 1.0});
  const std::vector<std::vector<KernelId>> half{{3, 1}, {1, 3}};
  CHECK(selection_fraction(half, 3) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("martingale diagnostic") {
  Rng rng(9);
  const std::size_t P = 4, dim = 8;
  FrozenState s;
  for (std::size_t p = 0; p < P; ++p) {
    s.node_models.push_back(0.3 * gaussian(dim, rng));
    s.features.push_back(gaussian(dim, rng).normalized());
  }
  s.y = 0.6;
  s.lambda = 0.01;

  SUBCASE("degenerate PMF gives the exact loss difference") {
    s.pmf = {0.0, 1.0, 0.0, 0.0};
    auto r = martingale_check(s, 1000, rng);
    CHECK(r.mean == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r.within_band);

    s.sampled_models = s.node_models;
    s.sampled_models[1] = gaussian(dim, rng);
    r = martingale_check(s, 1000, rng);
    const double diff = loss(s.sampled_models[1], s.features[1], s.y, s.lambda) -
                        loss(s.node_models[1], s.features[1], s.y, s.lambda);
    CHECK(r.mean == doctest::Approx(diff).epsilon(1e-12));
    CHECK(r.stddev == 0.0);
  }
  SUBCASE("random state is zero-mean within the band") {
    s.pmf = {0.1, 0.2, 0.3, 0.4};
    const auto r = martingale_check(s, 100000, rng);
    CHECK(r.expected_mean == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(r.mean) <= r.band);
    CHECK(r.within_band);

    const auto r2 = martingale_check(s, 200000, rng);
    CHECK(r2.band / r.band == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  }
  SUBCASE("inconsistent state") {
    s.pmf = {1.0};
    CHECK_THROWS_AS(martingale_check(s, 10, rng), ShapeError);
  }
}
