#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dpal/error.hpp"
#include "dpal/model.hpp"
#include "dpal/numerics.hpp"
#include "dpal/privacy.hpp"
#include "dpal/rng.hpp"

using namespace dpal;

namespace {

// ---- Extended-precision RDP oracle -----------------------------------------
// Independent of the library accountant: exact Pascal-triangle binomials and
// direct long-double summation instead of lgamma + log-space.

std::vector<long double> pascal_row(int n) {
  std::vector<long double> row{1.0L};
  for (int i = 0; i < n; ++i) {
    std::vector<long double> next(row.size() + 1, 0.0L);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += row[j];
      next[j + 1] += row[j];
    }
    row = std::move(next);
  }
  return row;
}

long double oracle_rdp_integer(double q, double sigma, int alpha) {
  const std::vector<long double> binom = pascal_row(alpha);
  long double total = 0.0L;
  for (int j = 0; j <= alpha; ++j) {
    total += binom[j] * powl(1.0L - (long double)q, alpha - j) *
             powl((long double)q, j) *
             expl((long double)j * (j - 1) / (2.0L * sigma * sigma));
  }
  return logl(total) / (alpha - 1);
}

long double oracle_epsilon(double q, double sigma, int steps, double delta) {
  long double best = std::numeric_limits<long double>::infinity();
  for (int alpha = 2; alpha <= 64; ++alpha) {
    const long double rdp = (q >= 1.0)
                                ? alpha / (2.0L * sigma * sigma)
                                : oracle_rdp_integer(q, sigma, alpha);
    const long double eps =
        steps * rdp + logl(1.0L / (long double)delta) / (alpha - 1);
    if (eps < best) best = eps;
  }
  return best;
}

double eps_for(double q, double sigma, int steps, double delta) {
  privacy::PrivacyLedger ledger(delta);
  for (int t = 0; t < steps; ++t) {
    ledger.append_subsampled_gaussian(q, sigma);
  }
  return privacy::compose_epsilon(ledger).first;
}

model::ModelParams toy_params(std::uint64_t seed) {
  model::Architecture arch;
  arch.input_dim = 4;
  arch.hidden_dims = {6};
  arch.num_classes = 3;
  return model::init_params(arch, seed);
}

}  // namespace

// ---- Accountant ------------------------------------------------------------

TEST_CASE("default order grid is 1.25, 1.5 and the integers 2..64") {
  const std::vector<double>& orders = privacy::default_rdp_orders();
  REQUIRE(orders.size() == 65);
  CHECK(orders[0] == 1.25);
  CHECK(orders[1] == 1.5);
  for (std::size_t i = 2; i < orders.size(); ++i) {
    CHECK(orders[i] == static_cast<double>(i));
  }
}

TEST_CASE("integer-order RDP matches the extended-precision oracle") {
  for (double q : {0.001, 0.01, 0.1, 0.5}) {
    for (double sigma : {0.8, 1.1, 2.0, 4.0}) {
      const std::vector<double> orders{2, 3, 5, 17, 33, 64};
      const privacy::RdpCurve curve =
          privacy::rdp_subsampled_gaussian(q, sigma, orders);
      for (std::size_t i = 0; i < orders.size(); ++i) {
        const long double want =
            oracle_rdp_integer(q, sigma, static_cast<int>(orders[i]));
        CAPTURE(q);
        CAPTURE(sigma);
        CAPTURE(orders[i]);
        CHECK(curve.values[i] ==
              doctest::Approx(static_cast<double>(want)).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("RDP at alpha = 2 equals the closed form log1p(q^2 expm1(1/s^2))") {
  for (double q : {0.005, 0.02, 0.3}) {
    for (double sigma : {0.9, 1.1, 3.0}) {
      const privacy::RdpCurve curve =
          privacy::rdp_subsampled_gaussian(q, sigma, {2.0});
      const double want = std::log1p(q * q * std::expm1(1.0 / (sigma * sigma)));
      CHECK(curve.values[0] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("q = 1 gives the plain Gaussian alpha/(2 sigma^2) at every order") {
  const std::vector<double>& orders = privacy::default_rdp_orders();
  const privacy::RdpCurve curve =
      privacy::rdp_subsampled_gaussian(1.0, 2.5, orders);
  for (std::size_t i = 0; i < orders.size(); ++i) {
    CHECK(curve.values[i] ==
          doctest::Approx(orders[i] / (2.0 * 2.5 * 2.5)).epsilon(1e-15));
  }
}

TEST_CASE("fractional orders fall back to the adjacent-integer bound") {
  const privacy::RdpCurve curve =
      privacy::rdp_subsampled_gaussian(0.02, 1.1, {1.25, 1.5, 2.0});
  // Orders below 2 clamp up to the alpha = 2 value (conservative).
  CHECK(curve.values[0] == doctest::Approx(curve.values[2]).epsilon(1e-15));
  CHECK(curve.values[1] == doctest::Approx(curve.values[2]).epsilon(1e-15));
}

TEST_CASE("rdp_subsampled_gaussian validates parameters") {
  CHECK_THROWS_AS(privacy::rdp_subsampled_gaussian(0.0, 1.0, {2.0}),
                  ParameterError);
  CHECK_THROWS_AS(privacy::rdp_subsampled_gaussian(1.5, 1.0, {2.0}),
                  ParameterError);
  CHECK_THROWS_AS(privacy::rdp_subsampled_gaussian(0.1, 0.0, {2.0}),
                  ParameterError);
  CHECK_THROWS_AS(privacy::rdp_subsampled_gaussian(0.1, 1.0, {1.0}),
                  ParameterError);
}

TEST_CASE("composed epsilon matches the oracle within 0.1%") {
  struct Case {
    double q, sigma;
    int steps;
    double delta;
  };
  for (const Case& c : {Case{0.01, 1.1, 10000, 1e-5}, Case{0.002, 0.9, 5000, 1e-5},
                        Case{0.05, 2.0, 2000, 1e-6}, Case{1.0, 4.0, 10, 1e-5}}) {
    const double got = eps_for(c.q, c.sigma, c.steps, c.delta);
    const double want =
        static_cast<double>(oracle_epsilon(c.q, c.sigma, c.steps, c.delta));
    CAPTURE(c.q);
    CAPTURE(c.sigma);
    CAPTURE(c.steps);
    CHECK(std::abs(got - want) / want < 1e-3);
  }
}

TEST_CASE("epsilon grows with steps and shrinks with sigma") {
  double prev = 0.0;
  for (int steps : {500, 1000, 2000, 4000, 8000}) {
    const double eps = eps_for(0.01, 1.1, steps, 1e-5);
    CHECK(eps > prev);
    prev = eps;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.7, 0.9, 1.2, 1.6, 2.4}) {
    const double eps = eps_for(0.01, sigma, 1000, 1e-5);
    CHECK(eps < prev);
    prev = eps;
  }
}

// ---- Ledger ----------------------------------------------------------------

TEST_CASE("ledger JSON round-trips every entry kind") {
  privacy::PrivacyLedger ledger(1e-5);
  ledger.append_subsampled_gaussian(0.01, 1.1, "dpsgd_step");
  ledger.append_gaussian(0.5, 1e-6, "dp_pca");
  ledger.append_laplace(0.5, "laplace_mechanism");

  const privacy::PrivacyLedger back =
      privacy::PrivacyLedger::from_json(ledger.to_json());
  CHECK(back.delta_target() == 1e-5);
  REQUIRE(back.size() == 3);
  const auto a = ledger.entries();
  const auto b = back.entries();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].mechanism == b[i].mechanism);
    CHECK(a[i].q == b[i].q);
    CHECK(a[i].sigma == b[i].sigma);
    CHECK(a[i].epsilon == b[i].epsilon);
    CHECK(a[i].delta == b[i].delta);
    CHECK(a[i].label == b[i].label);
  }
  // Byte-level fixed point: serializing the round-tripped ledger is identical.
  CHECK(ledger.to_json() == back.to_json());
}

TEST_CASE("ledger rejects malformed JSON and bad parameters") {
  CHECK_THROWS_AS(privacy::PrivacyLedger::from_json("{"), FormatError);
  CHECK_THROWS_AS(privacy::PrivacyLedger::from_json("[]"), FormatError);
  CHECK_THROWS_AS(privacy::PrivacyLedger::from_json(
                      R"({"delta_target":1e-5,"entries":[{"mechanism":"warp"}]})"),
                  FormatError);

  CHECK_THROWS_AS(privacy::PrivacyLedger(0.0), ParameterError);
  CHECK_THROWS_AS(privacy::PrivacyLedger(1.0), ParameterError);
  privacy::PrivacyLedger ledger(1e-5);
  CHECK_THROWS_AS(ledger.append_subsampled_gaussian(0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(ledger.append_subsampled_gaussian(1.1, 1.0), ParameterError);
  CHECK_THROWS_AS(ledger.append_subsampled_gaussian(0.5, -1.0), ParameterError);
  CHECK_THROWS_AS(ledger.append_gaussian(-0.1, 1e-6), ParameterError);
  CHECK_THROWS_AS(ledger.append_laplace(0.0), ParameterError);
  CHECK(ledger.size() == 0);
}

TEST_CASE("ledger copies are deep") {
  privacy::PrivacyLedger a(1e-5);
  a.append_laplace(0.5);
  privacy::PrivacyLedger b = a;
  b.append_laplace(0.25);
  CHECK(a.size() == 1);
  CHECK(b.size() == 2);
}

TEST_CASE("empty ledger composes to exactly (0, 0)") {
  privacy::PrivacyLedger ledger(1e-5);
  const auto [eps, delta] = privacy::compose_epsilon(ledger);
  CHECK(eps == 0.0);
  CHECK(delta == 0.0);
}

TEST_CASE("checkpoint + selection budgets add to exactly 3.2") {
  // A 2.2 training spend plus 0.5 + 0.5 selection spends: pure arithmetic,
  // bit-equal to the sum of the literals.
  privacy::PrivacyLedger ledger(1e-5);
  ledger.append_gaussian(2.2, 0.0, "checkpoint");
  ledger.append_gaussian(0.5, 1e-6, "dp_pca");
  ledger.append_laplace(0.5, "support");
  const auto [eps, delta] = privacy::compose_epsilon(ledger);
  CHECK(eps == 3.2);
  CHECK(delta == 1e-6);
}

TEST_CASE("delta target is spent only by subsampled-Gaussian entries") {
  privacy::PrivacyLedger linear(1e-5);
  linear.append_laplace(1.0);
  linear.append_gaussian(0.5, 1e-7);
  CHECK(privacy::compose_epsilon(linear).second == 1e-7);

  privacy::PrivacyLedger mixed(1e-5);
  mixed.append_laplace(1.0);
  mixed.append_subsampled_gaussian(0.01, 1.1);
  mixed.append_gaussian(0.5, 1e-7);
  CHECK(privacy::compose_epsilon(mixed).second ==
        doctest::Approx(1e-5 + 1e-7).epsilon(1e-15));
  // The linear epsilon rides on top of the RDP conversion.
  privacy::PrivacyLedger rdp_only(1e-5);
  rdp_only.append_subsampled_gaussian(0.01, 1.1);
  const double base = privacy::compose_epsilon(rdp_only).first;
  CHECK(privacy::compose_epsilon(mixed).first ==
        doctest::Approx(base + 1.5).epsilon(1e-12));
}

TEST_CASE("noise-free subsampled entries compose to infinity, not an error") {
  privacy::PrivacyLedger ledger(1e-5);
  ledger.append_subsampled_gaussian(0.5, 0.0);
  const auto [eps, delta] = privacy::compose_epsilon(ledger);
  CHECK(std::isinf(eps));
  CHECK(delta == 1e-5);
}

// ---- Mechanisms ------------------------------------------------------------

TEST_CASE("clip_gradient caps the norm at C and preserves direction") {
  Rng rng(41);
  const model::ModelParams params = toy_params(1);
  int clipped = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    model::GradientSet g = model::zero_gradients(params);
    for (model::Layer& layer : g) {
      for (std::size_t i = 0; i < layer.weights.size(); ++i) {
        layer.weights.data()[i] = 3.0 * rng.normal();
      }
      for (double& b : layer.biases) b = 3.0 * rng.normal();
    }
    const double before = std::sqrt(model::flat_sqnorm(g));
    const double c = 0.5 + 2.0 * rng.uniform();
    const model::GradientSet out = privacy::clip_gradient(g, c);
    const double after = std::sqrt(model::flat_sqnorm(out));
    CHECK(after <= c * (1.0 + 1e-12));
    if (before <= c) {
      // Under the threshold nothing changes, bit for bit.
      for (std::size_t l = 0; l < g.size(); ++l) {
        CHECK(out[l].weights == g[l].weights);
        CHECK(out[l].biases == g[l].biases);
      }
    } else {
      ++clipped;
      const double scale = c / before;
      CHECK(out[0].weights.data()[0] ==
            doctest::Approx(g[0].weights.data()[0] * scale).epsilon(1e-12));
    }
  }
  CHECK(clipped > 0);
}

TEST_CASE("gaussian_mechanism_sigma is the calibration formula") {
  CHECK(privacy::gaussian_mechanism_sigma(1.0, 1e-5) ==
        doctest::Approx(std::sqrt(2.0 * std::log(1.25 / 1e-5))).epsilon(1e-15));
  CHECK(privacy::gaussian_mechanism_sigma(0.5, 1e-6) ==
        doctest::Approx(std::sqrt(2.0 * std::log(1.25 / 1e-6)) / 0.5)
            .epsilon(1e-15));
  CHECK_THROWS_AS(privacy::gaussian_mechanism_sigma(0.0, 1e-5), ParameterError);
  CHECK_THROWS_AS(privacy::gaussian_mechanism_sigma(1.0, 0.0), ParameterError);
}

TEST_CASE("laplace_mechanism adds Laplace(1/eps) noise and logs one entry") {
  const std::vector<double> value{3.0, -1.0, 0.0, 7.5};
  const double eps = 0.5;

  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(42);
  const std::vector<double> noisy =
      privacy::laplace_mechanism(value, eps, rng, ledger);

  // Contract: one draw per coordinate from an identically-seeded stream, at
  // scale exactly kLaplaceCountSensitivity / eps.
  Rng twin(42);
  REQUIRE(noisy.size() == value.size());
  for (std::size_t i = 0; i < value.size(); ++i) {
    CHECK(noisy[i] ==
          value[i] + twin.laplace(privacy::kLaplaceCountSensitivity / eps));
  }

  REQUIRE(ledger.size() == 1);
  const privacy::LedgerEntry entry = ledger.entries()[0];
  CHECK(entry.mechanism == privacy::Mechanism::kLaplace);
  CHECK(entry.epsilon == eps);

  // Distribution sanity on a long stream: mean 0, variance 2 b^2.
  Rng stat_rng(43);
  privacy::PrivacyLedger scratch(1e-5);
  const std::vector<double> zeros(50000, 0.0);
  const std::vector<double> draws =
      privacy::laplace_mechanism(zeros, 1.0, stat_rng, scratch);
  long double mean = 0.0L, var = 0.0L;
  for (double d : draws) mean += d;
  mean /= draws.size();
  for (double d : draws) var += (d - mean) * (d - mean);
  var /= draws.size();
  CHECK(std::abs(static_cast<double>(mean)) < 0.05);
  CHECK(static_cast<double>(var) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("dp_pca in the vanishing-noise limit matches uncentered PCA") {
  Rng data_rng(44);
  Matrix e(30, 6);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e.data()[i] = 0.3 * data_rng.normal();
  }
  // Keep every row inside the unit ball so normalization is a no-op and the
  // oracle is exactly the second-moment eigenbasis.
  for (std::size_t i = 0; i < e.rows(); ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < 6; ++j) norm += e(i, j) * e(i, j);
    norm = std::sqrt(norm);
    if (norm > 0.95) {
      for (std::size_t j = 0; j < 6; ++j) e(i, j) *= 0.95 / norm;
    }
  }

  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(45);
  const numerics::PcaBasis basis = privacy::dp_pca(e, 3, 1e9, 1e-6, rng, ledger);

  const numerics::SymmetricEigen oracle = numerics::eigen_symmetric(gram(e));
  REQUIRE(basis.components.rows() == 3);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(basis.eigenvalues[p] ==
          doctest::Approx(oracle.values[p]).epsilon(1e-6));
    // Up-to-sign match.
    double dot = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      dot += basis.components(p, j) * oracle.vectors(p, j);
    }
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-4);
  }
  for (double m : basis.mean) CHECK(m == 0.0);

  REQUIRE(ledger.size() == 1);
  const privacy::LedgerEntry entry = ledger.entries()[0];
  CHECK(entry.mechanism == privacy::Mechanism::kGaussian);
  CHECK(entry.epsilon == 1e9);
  CHECK(entry.delta == 1e-6);
}

TEST_CASE("dp_pca normalizes oversized rows before the moment matrix") {
  Matrix e(4, 3,
           {10.0, 0.0, 0.0, 0.0, 10.0, 0.0, 10.0, 0.0, 0.0, 0.0, 10.0, 0.0});
  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(46);
  const numerics::PcaBasis basis = privacy::dp_pca(e, 2, 1e9, 1e-6, rng, ledger);

  // After normalization the rows are e1, e2, e1, e2: the second moment is
  // diag(2, 2, 0) and the top-2 eigenvalues are both 2.
  CHECK(basis.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(basis.eigenvalues[1] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("dp_pca components stay orthonormal under real noise") {
  Rng data_rng(47);
  Matrix e(40, 5);
  for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = data_rng.normal();
  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(48);
  const numerics::PcaBasis basis = privacy::dp_pca(e, 4, 0.5, 1e-6, rng, ledger);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 5; ++k) {
        dot += basis.components(i, k) * basis.components(j, k);
      }
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("dp_pca is deterministic in the rng seed") {
  Rng data_rng(49);
  Matrix e(20, 4);
  for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = data_rng.normal();
  privacy::PrivacyLedger l1(1e-5), l2(1e-5);
  Rng r1(7), r2(7);
  const numerics::PcaBasis a = privacy::dp_pca(e, 2, 1.0, 1e-6, r1, l1);
  const numerics::PcaBasis b = privacy::dp_pca(e, 2, 1.0, 1e-6, r2, l2);
  CHECK(a.components == b.components);
  CHECK(a.eigenvalues == b.eigenvalues);
}

TEST_CASE("dp_pca validates its inputs") {
  Matrix e(3, 3, {0.1, 0, 0, 0, 0.1, 0, 0, 0, 0.1});
  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(50);
  CHECK_THROWS_AS(privacy::dp_pca(e, 0, 1.0, 1e-6, rng, ledger),
                  ParameterError);
  CHECK_THROWS_AS(privacy::dp_pca(e, 4, 1.0, 1e-6, rng, ledger),
                  ParameterError);
  CHECK_THROWS_AS(privacy::dp_pca(e, 2, 0.0, 1e-6, rng, ledger),
                  ParameterError);
  CHECK_THROWS_AS(privacy::dp_pca(e, 2, 1.0, 0.0, rng, ledger),
                  ParameterError);
  CHECK_THROWS_AS(privacy::dp_pca(Matrix(), 1, 1.0, 1e-6, rng, ledger),
                  ParameterError);
  CHECK(ledger.size() == 0);
}

// ---- DP-SGD ----------------------------------------------------------------

TEST_CASE("DpSgdConfig validation") {
  privacy::DpSgdConfig cfg;
  cfg.validate();  // defaults are fine

  privacy::DpSgdConfig bad = cfg;
  bad.sampling_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = cfg;
  bad.sampling_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = cfg;
  bad.clip_norm = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = cfg;
  bad.noise_multiplier = -0.5;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);

  // Unclipped but noised would have unbounded sensitivity.
  bad = cfg;
  bad.clip_norm = std::numeric_limits<double>::infinity();
  bad.noise_multiplier = 1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad.noise_multiplier = 0.0;
  bad.validate();
  CHECK(!bad.clipping_enabled());
}

TEST_CASE("noise-free full-batch DP-SGD equals a plain gradient step") {
  Rng data_rng(51);
  const std::size_t n = 12;
  Matrix features(n, 4);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features.data()[i] = data_rng.normal();
  }
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 3);
  }

  privacy::DpSgdConfig cfg;
  cfg.clip_norm = std::numeric_limits<double>::infinity();
  cfg.noise_multiplier = 0.0;
  cfg.sampling_rate = 1.0;
  cfg.learning_rate = 0.3;

  model::ModelParams dp = toy_params(2);
  model::ModelParams plain = dp;

  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(52);
  privacy::dpsgd_step(dp, features, labels, cfg, rng, ledger);

  const auto [loss, grads] = model::loss_and_mean_grad(plain, features, labels);
  (void)loss;
  model::apply_update(plain, grads, 0.3);

  for (std::size_t l = 0; l < dp.layers.size(); ++l) {
    for (std::size_t i = 0; i < dp.layers[l].weights.size(); ++i) {
      CHECK(dp.layers[l].weights.data()[i] ==
            doctest::Approx(plain.layers[l].weights.data()[i]).epsilon(1e-10));
    }
  }
  REQUIRE(ledger.size() == 1);
  CHECK(ledger.entries()[0].mechanism == privacy::Mechanism::kSubsampledGaussian);
  CHECK(ledger.entries()[0].q == 1.0);
  CHECK(ledger.entries()[0].sigma == 0.0);
}

TEST_CASE("clipping bounds every example's contribution") {
  Rng data_rng(53);
  const std::size_t n = 10;
  Matrix features(n, 4);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features.data()[i] = 4.0 * data_rng.normal();  // big inputs, big gradients
  }
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 3);

  privacy::DpSgdConfig cfg;
  cfg.clip_norm = 0.1;
  cfg.noise_multiplier = 0.0;
  cfg.sampling_rate = 1.0;
  cfg.learning_rate = 1.0;

  model::ModelParams params = toy_params(3);
  const model::ModelParams before = params;

  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(54);
  privacy::dpsgd_step(params, features, labels, cfg, rng, ledger);

  // The update is lr/(q n) * sum of clipped gradients: its flattened norm is
  // at most lr/(q n) * n * C = lr * C.
  double sq = 0.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < params.layers[l].weights.size(); ++i) {
      const double d = params.layers[l].weights.data()[i] -
                       before.layers[l].weights.data()[i];
      sq += d * d;
    }
    for (std::size_t i = 0; i < params.layers[l].biases.size(); ++i) {
      const double d =
          params.layers[l].biases[i] - before.layers[l].biases[i];
      sq += d * d;
    }
  }
  CHECK(std::sqrt(sq) <= cfg.learning_rate * cfg.clip_norm * (1.0 + 1e-9));

  // Oracle: the same step assembled from materialized per-example gradients.
  model::ModelParams oracle = before;
  const auto [loss, per_example] =
      model::loss_and_grads(before, features, labels);
  (void)loss;
  model::GradientSet total = model::zero_gradients(oracle);
  for (std::size_t i = 0; i < n; ++i) {
    const model::GradientSet clipped =
        privacy::clip_gradient(per_example[i], cfg.clip_norm);
    for (std::size_t l = 0; l < total.size(); ++l) {
      for (std::size_t k = 0; k < total[l].weights.size(); ++k) {
        total[l].weights.data()[k] += clipped[l].weights.data()[k];
      }
      for (std::size_t k = 0; k < total[l].biases.size(); ++k) {
        total[l].biases[k] += clipped[l].biases[k];
      }
    }
  }
  model::apply_update(oracle, total,
                      cfg.learning_rate / (cfg.sampling_rate * n));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    for (std::size_t i = 0; i < params.layers[l].weights.size(); ++i) {
      CHECK(params.layers[l].weights.data()[i] ==
            doctest::Approx(oracle.layers[l].weights.data()[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("an empty Poisson sample still pays privacy") {
  Rng data_rng(55);
  Matrix features(5, 4);
  std::vector<int> labels{0, 1, 2, 0, 1};
  for (std::size_t i = 0; i < features.size(); ++i) {
    features.data()[i] = data_rng.normal();
  }

  privacy::DpSgdConfig cfg;
  cfg.sampling_rate = 1e-12;  // nobody gets sampled
  cfg.noise_multiplier = 1.0;
  cfg.clip_norm = 1.0;
  cfg.learning_rate = 0.1;

  model::ModelParams params = toy_params(4);
  const model::ModelParams before = params;
  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(56);
  privacy::dpsgd_step(params, features, labels, cfg, rng, ledger);

  CHECK(params == before);  // no update...
  REQUIRE(ledger.size() == 1);  // ...but the entry is logged anyway
  CHECK(ledger.entries()[0].q == 1e-12);
  CHECK(ledger.entries()[0].sigma == 1.0);
}

TEST_CASE("dpsgd_step is deterministic in the rng") {
  Rng data_rng(57);
  Matrix features(20, 4);
  std::vector<int> labels(20);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features.data()[i] = data_rng.normal();
  }
  for (std::size_t i = 0; i < 20; ++i) labels[i] = static_cast<int>(i % 3);

  privacy::DpSgdConfig cfg;
  cfg.sampling_rate = 0.5;
  cfg.noise_multiplier = 1.1;
  cfg.clip_norm = 1.0;
  cfg.learning_rate = 0.1;

  model::ModelParams a = toy_params(5);
  model::ModelParams b = a;
  privacy::PrivacyLedger la(1e-5), lb(1e-5);
  Rng ra(58), rb(58);
  privacy::dpsgd_step(a, features, labels, cfg, ra, la);
  privacy::dpsgd_step(b, features, labels, cfg, rb, lb);
  CHECK(a == b);
}

TEST_CASE("noise actually perturbs the update") {
  Rng data_rng(59);
  Matrix features(16, 4);
  std::vector<int> labels(16);
  for (std::size_t i = 0; i < features.size(); ++i) {
    features.data()[i] = data_rng.normal();
  }
  for (std::size_t i = 0; i < 16; ++i) labels[i] = static_cast<int>(i % 3);

  privacy::DpSgdConfig noisy;
  noisy.sampling_rate = 1.0;
  noisy.noise_multiplier = 1.0;
  noisy.clip_norm = 1.0;
  noisy.learning_rate = 0.1;
  privacy::DpSgdConfig silent = noisy;
  silent.noise_multiplier = 0.0;

  model::ModelParams a = toy_params(6);
  model::ModelParams b = a;
  privacy::PrivacyLedger la(1e-5), lb(1e-5);
  Rng ra(60), rb(60);
  privacy::dpsgd_step(a, features, labels, noisy, ra, la);
  privacy::dpsgd_step(b, features, labels, silent, rb, lb);
  CHECK(!(a == b));
}
