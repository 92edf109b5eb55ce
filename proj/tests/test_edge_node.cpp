#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mkofl/edge_node.hpp"
#include "mkofl/errors.hpp"

using namespace mkofl;

namespace {

Vector gaussian(std::size_t n, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<FeatureVector> unit_features(std::size_t P, std::size_t dim, Rng& rng) {
  std::vector<FeatureVector> zs;
  for (std::size_t p = 0; p < P; ++p) zs.push_back(gaussian(dim, rng).normalized());
  return zs;
}

}  // namespace

TEST_CASE("downlink overwrites only the globally trained kernel") {
  Rng rng(1);
  EdgeNode node(0, 2, 4, Rng(2));
  const Vector w0 = gaussian(4, rng), w1 = gaussian(4, rng), g = gaussian(4, rng);
  node.set_model(0, w0);
  node.set_model(1, w1);
  node.apply_downlink(DownlinkMessage{1, g}, 0);
  CHECK(node.models()[0] == g);
  CHECK(node.models()[1] == w1);

  // Already equal: no change.
  const auto before = node.models();
  node.apply_downlink(DownlinkMessage{0, g}, 0);
  CHECK(node.models() == before);
}

TEST_CASE("first-round zero model clears the selected kernel") {
  Rng rng(3);
  EdgeNode node(0, 3, 4, Rng(4));
  node.set_model(0, gaussian(4, rng));
  node.apply_downlink(DownlinkMessage{0, Vector::Zero(4)}, 0);
  CHECK(node.models()[0].isZero());
}

TEST_CASE("downlink index outside the dictionary is a protocol error") {
  EdgeNode node(0, 3, 4, Rng(4));
  CHECK_THROWS_AS(node.apply_downlink(DownlinkMessage{0, Vector::Zero(4)}, 3), ProtocolError);
  CHECK_THROWS_AS(node.apply_downlink(DownlinkMessage{5, Vector::Zero(4)}, 0), ProtocolError);
  CHECK_THROWS_AS(node.apply_downlink(DownlinkMessage{0, Vector::Zero(3)}, 0), ProtocolError);
}

TEST_CASE("prediction") {
  const auto dict = KernelDictionary::build(2, 5, 3, 9);
  const Vector x = Vector::Zero(3);
  CHECK(predict(dict, Vector::Zero(10), 1, x) == 0.0);
  Vector e = Vector::Zero(10);
  e[5] = 1.0;  // first cosine coordinate
  CHECK(predict(dict, e, 0, x) == doctest::Approx(1.0 / std::sqrt(5.0)));

  Rng rng(5);
  const Vector w1 = gaussian(10, rng), w2 = gaussian(10, rng), xr = gaussian(3, rng);
  const double lhs = predict(dict, 2.0 * w1 - 3.0 * w2, 1, xr);
  const double rhs = 2.0 * predict(dict, w1, 1, xr) - 3.0 * predict(dict, w2, 1, xr);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  CHECK_THROWS_AS(predict(dict, w1, 2, xr), ProtocolError);
}

TEST_CASE("local update records pre-step losses and steps every kernel") {
  Rng rng(6);
  const std::size_t P = 3;
  EdgeNode node(0, P, 6, Rng(7));
  const Vector w = gaussian(6, rng);
  const Vector z = gaussian(6, rng).normalized();
  for (std::size_t p = 0; p < P; ++p) node.set_model(p, w);
  LossConfig cfg;
  const std::vector<FeatureVector> zs(P, z);
  const auto losses = node.local_update(zs, 0.4, 0.3, cfg);
  for (std::size_t p = 0; p < P; ++p) {
    CHECK(losses[p] == loss(w, z, 0.4, cfg.lambda));
    CHECK(node.models()[p] == node.models()[0]);
  }
  CHECK(node.models()[0] == ogd_step(w, z, 0.4, 0.3, cfg));
}

TEST_CASE("zero step keeps models and still records losses") {
  Rng rng(8);
  EdgeNode node(0, 2, 4, Rng(9));
  const Vector w = gaussian(4, rng);
  node.set_model(1, w);
  const auto zs = unit_features(2, 4, rng);
  const auto losses = node.local_update(zs, 1.0, 0.0, LossConfig{});
  CHECK(node.models()[1] == w);
  CHECK(losses[0] == doctest::Approx(1.0));
  CHECK(losses[1] > 0.0);
}

TEST_CASE("single kernel converges on realizable data") {
  Rng rng(10);
  const auto dict = KernelDictionary::build(1, 10, 2, 11);
  const Vector w_star = gaussian(20, rng).normalized();
  EdgeNode node(0, 1, 20, Rng(12));
  LossConfig cfg;
  cfg.lambda = 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double last = 0.0;
  // Wide kernel so the feature map is smooth over the unit square.
  const SpectralSample s(0, draw_gaussian_frequencies(1.0, 10, 2, 13));
  for (std::size_t t = 1; t <= 200; ++t) {
    Vector x(2);
    x << u(rng), u(rng);
    const FeatureVector z = s.map(x);
    const std::vector<FeatureVector> zs{z};
    last = node.local_update(zs, w_star.dot(z), 1.0 / std::sqrt(static_cast<double>(t)), cfg)[0];
  }
  CHECK(last <= 1e-2);
}

TEST_CASE("hedge update hand values") {
  // Losses (0, 1) with eta_g * K = 1 from uniform.
  EdgeNode node(0, 2, 2, Rng(1));
  Vector z(2);
  z << 1.0, 0.0;
  node.set_model(0, Vector::Zero(2));
  Vector w1(2);
  w1 << 1.0, 0.0;
  node.set_model(1, w1);
  LossConfig cfg;
  cfg.lambda = 0.0;
  const std::vector<FeatureVector> zs{z, z};
  const auto losses = node.local_update(zs, 0.0, 0.0, cfg);
  REQUIRE(losses[0] == 0.0);
  REQUIRE(losses[1] == 1.0);
  node.update_hedge(0.5, 2, true);
  const auto q = node.pmf();
  CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(std::exp(-1.0) / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(q[0] == doctest::Approx(0.731).epsilon(1e-3));
}

TEST_CASE("equal losses and zero rate leave the PMF unchanged") {
  Rng rng(14);
  EdgeNode node(0, 4, 3, Rng(15));
  const FeatureVector z = gaussian(3, rng).normalized();
  node.local_update(std::vector<FeatureVector>(4, z), 0.5, 0.1, LossConfig{});
  node.update_hedge(1.0, 20, true);
  for (double v : node.pmf()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  node.set_log_weights({0.0, -1.0, -2.0, -3.0});
  const auto before = node.pmf();
  node.local_update(unit_features(4, 3, rng), 0.5, 0.1, LossConfig{});
  node.update_hedge(0.0, 20, true);
  CHECK(node.pmf() == before);
}

TEST_CASE("hedge before local update is a protocol error") {
  EdgeNode node(0, 2, 2, Rng(1));
  CHECK_THROWS_AS(node.update_hedge(1.0, 1, true), ProtocolError);
}

TEST_CASE("PMF validity, monotone log weights and dominance") {
  Rng rng(16);
  const std::size_t P = 3;
  EdgeNode node(0, P, 4, Rng(17));
  LossConfig cfg;
  std::vector<double> cumulative(P, 0.0);
  std::vector<double> prev(node.log_weights().begin(), node.log_weights().end());
  const Vector bad = Vector::Constant(4, 3.0);
  for (int t = 1; t <= 300; ++t) {
    const FeatureVector z = gaussian(4, rng).normalized();
    // Kernel 0 shares kernel 1's features but is pinned to a poor model.
    node.set_model(0, bad);
    node.set_model(1, Vector::Zero(4));
    const std::vector<FeatureVector> zs{z, z, gaussian(4, rng).normalized()};
    const auto losses = node.local_update(zs, 0.5, 0.1, cfg);
    const double eta = 0.3 / std::sqrt(static_cast<double>(t));
    node.update_hedge(eta, 5, cfg.clip_for_hedge);
    for (std::size_t p = 0; p < P; ++p) cumulative[p] += eta * 5 * hedge_loss(losses[p], true);

    const auto q = node.pmf();
    double sum = 0.0;
    for (double v : q) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (std::size_t p = 0; p < P; ++p) CHECK(node.log_weights()[p] <= prev[p]);
    prev.assign(node.log_weights().begin(), node.log_weights().end());
    REQUIRE(cumulative[0] > cumulative[1]);
    CHECK(q[0] < q[1]);
  }
}

TEST_CASE("log-domain hedge stays finite over a million rounds") {
  EdgeNode node(0, 3, 2, Rng(18));
  Vector z(2);
  z << 1.0, 0.0;
  Vector w(2);
  w << 1.0, 0.0;
  node.set_model(0, Vector::Zero(2));
  node.set_model(1, w);
  node.set_model(2, 0.5 * w);
  const std::vector<FeatureVector> zs{z, z, z};
  LossConfig cfg;
  cfg.lambda = 0.0;
  for (int t = 0; t < 1000000; ++t) {
    node.local_update(zs, 0.0, 0.0, cfg);
    node.update_hedge(std::log(3.0), 20, true);
  }
  const auto q = node.pmf();
  for (double v : q) CHECK(std::isfinite(v));
  CHECK(q[0] == doctest::Approx(1.0));
}

TEST_CASE("proposals follow the PMF") {
  SUBCASE("degenerate PMF") {
    EdgeNode node(0, 4, 2, Rng(19));
    const double ninf = -std::numeric_limits<double>::infinity();
    node.set_log_weights({0.0, ninf, ninf, ninf});
    for (int i = 0; i < 1000; ++i) CHECK(node.propose_kernel() == 0);
  }
  SUBCASE("uniform PMF within 3 sigma multinomial bands") {
    const std::size_t P = 5, N = 100000;
    EdgeNode node(0, P, 2, Rng(20));
    std::vector<double> counts(P, 0.0);
    for (std::size_t i = 0; i < N; ++i) counts[node.propose_kernel()] += 1.0;
    const double p = 1.0 / P, sigma = std::sqrt(N * p * (1 - p));
    for (double c : counts) CHECK(std::abs(c - N * p) <= 3.0 * sigma);
  }
  SUBCASE("fixed seed gives the same proposal sequence") {
    EdgeNode a(0, 6, 2, Rng(21)), b(0, 6, 2, Rng(21));
    for (int i = 0; i < 100; ++i) CHECK(a.propose_kernel() == b.propose_kernel());
  }
}

TEST_CASE("uplink carries the post-step model for the next index") {
  Rng rng(22);
  const std::size_t P = 3, dim = 98;
  EdgeNode node(0, P, dim, Rng(23));
  std::vector<ModelParams> start;
  for (std::size_t p = 0; p < P; ++p) {
    start.push_back(gaussian(dim, rng) * 0.1);
    node.set_model(p, start.back());
  }
  const auto zs = unit_features(P, dim, rng);
  LossConfig cfg;
  node.local_update(zs, 0.7, 0.5, cfg);
  node.update_hedge(0.1, 4, true);
  const KernelId proposal = node.propose_kernel();
  const auto up = node.build_uplink(2);
  CHECK(up.proposal == proposal);
  CHECK(up.local_model == ogd_step(start[2], zs[2], 0.7, 0.5, cfg));
  // D = floor(100/2) - 1 = 49 keeps the payload within r = 100 scalars.
  CHECK(up.scalar_count() == dim + 1);
  CHECK(up.scalar_count() <= 100);
  CHECK_THROWS_AS(node.build_uplink(3), ProtocolError);

  EdgeNode single(1, 1, 4, Rng(24));
  const Vector w = gaussian(4, rng);
  single.set_model(0, w);
  CHECK(single.build_uplink(0).local_model == w);
}

TEST_CASE("softmax") {
  const std::vector<double> lw{1000.0, 999.0};
  const auto q = softmax(lw);
  CHECK(q[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(softmax(std::vector<double>{}).empty());
}
