#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "dpal/data.hpp"
#include "dpal/error.hpp"
#include "dpal/model.hpp"
#include "dpal/numerics.hpp"
#include "dpal/selection.hpp"

using namespace dpal;

namespace {

// All-pairs brute force with the same tie rule: strict improvement only, so
// the lowest public index keeps a tie.
std::vector<std::size_t> neighbor_counts_brute(const Matrix& s_train,
                                               const Matrix& s_public) {
  std::vector<std::size_t> counts(s_public.rows(), 0);
  for (std::size_t i = 0; i < s_train.rows(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s_public.rows(); ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < s_public.cols(); ++c) {
        const double diff = s_train(i, c) - s_public(j, c);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    ++counts[best];
  }
  return counts;
}

Matrix random_points(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Logistic model with zero weights: every example maximally uncertain, and
// the embedding is the raw input, so tests control geometry directly.
model::ModelParams flat_model(std::size_t dim, std::size_t classes) {
  model::Architecture arch;
  arch.input_dim = dim;
  arch.num_classes = classes;
  model::ModelParams params = model::init_params(arch, 1);
  for (model::Layer& layer : params.layers) {
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      layer.weights.data()[i] = 0.0;
    }
    for (double& b : layer.biases) b = 0.0;
  }
  return params;
}

data::Dataset public_pool_from(const Matrix& features) {
  data::Dataset ds;
  ds.features = features;
  ds.role = data::Role::kPublic;
  ds.provenance.assign(features.rows(), data::Provenance::kClean);
  return ds;
}

}  // namespace

TEST_CASE("uncertainty scores on hand-computed logits") {
  // Row 0: uniform over 3 -> entropy ln 3, margin 0.
  // Row 1: logits (ln 4, ln 1, ln 1)/Z -> p = (2/3, 1/6, 1/6).
  // Row 2: one dominant class.
  Matrix logits(3, 3,
                {0.0, 0.0, 0.0, std::log(4.0), 0.0, 0.0, 10.0, 0.0, 0.0});
  const std::vector<double> entropy =
      selection::uncertainty_scores(logits, selection::Uncertainty::kEntropy);
  const std::vector<double> margin =
      selection::uncertainty_scores(logits, selection::Uncertainty::kMargin);

  CHECK(entropy[0] == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  const double p0 = 2.0 / 3.0, p1 = 1.0 / 6.0;
  const double want_h1 = -(p0 * std::log(p0) + 2.0 * p1 * std::log(p1));
  CHECK(entropy[1] == doctest::Approx(want_h1).epsilon(1e-12));
  CHECK(entropy[0] > entropy[1]);
  CHECK(entropy[1] > entropy[2]);

  CHECK(margin[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(margin[1] == doctest::Approx(-(p0 - p1)).epsilon(1e-12));
  CHECK(margin[0] > margin[1]);
  CHECK(margin[1] > margin[2]);
}

TEST_CASE("top_k_indices breaks ties toward the lower index") {
  const std::vector<double> scores{1.0, 3.0, 3.0, 2.0, 3.0};
  CHECK(selection::top_k_indices(scores, 2) ==
        std::vector<std::size_t>{1, 2});
  CHECK(selection::top_k_indices(scores, 4) ==
        std::vector<std::size_t>{1, 2, 4, 3});
  CHECK_THROWS_AS(selection::top_k_indices(scores, 6), ParameterError);
}

TEST_CASE("select_random: right count, unique, in range, seed-deterministic") {
  const selection::SelectionResult a = selection::select_random(100, 20, 5);
  REQUIRE(a.chosen.size() == 20);
  std::set<std::size_t> unique(a.chosen.begin(), a.chosen.end());
  CHECK(unique.size() == 20);
  for (std::size_t idx : a.chosen) CHECK(idx < 100);

  const selection::SelectionResult b = selection::select_random(100, 20, 5);
  CHECK(a.chosen == b.chosen);
  const selection::SelectionResult c = selection::select_random(100, 20, 6);
  CHECK(a.chosen != c.chosen);
  CHECK(a.privacy_spent.first == 0.0);
}

TEST_CASE("select_uncertain returns the top-scored rows") {
  Rng rng(71);
  const Matrix features = random_points(rng, 40, 4);
  model::ModelParams params = flat_model(4, 3);
  // Non-trivial logits: random weights.
  params = model::init_params(params.arch, 3);
  const data::Dataset pool = public_pool_from(features);

  const selection::SelectionResult result = selection::select_uncertain(
      params, pool, 7, selection::Uncertainty::kEntropy);

  const model::ForwardResult fwd = model::forward(params, features);
  const std::vector<double> scores =
      selection::uncertainty_scores(fwd.logits, selection::Uncertainty::kEntropy);
  CHECK(result.chosen == selection::top_k_indices(scores, 7));
  REQUIRE(result.scores.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(result.scores[i] == scores[result.chosen[i]]);
  }
}

TEST_CASE("assign_neighbors matches brute force on random instances") {
  Rng rng(72);
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t n_train = 1 + rng.uniform_int(50);
    const std::size_t n_public = 1 + rng.uniform_int(50);
    const std::size_t d = 1 + rng.uniform_int(6);
    const Matrix s_train = random_points(rng, n_train, d);
    const Matrix s_public = random_points(rng, n_public, d);

    const std::vector<std::size_t> got =
        selection::assign_neighbors(s_train, s_public);
    const std::vector<std::size_t> want =
        neighbor_counts_brute(s_train, s_public);
    CHECK(got == want);

    std::size_t total = 0;
    for (std::size_t c : got) total += c;
    CHECK(total == n_train);
  }
}

TEST_CASE("assign_neighbors keeps exact ties on the lowest public index") {
  // Two identical public points: all counts must land on index 0.
  const Matrix s_train(3, 2, {1.0, 1.0, 1.0, 1.0, 0.9, 1.1});
  const Matrix s_public(2, 2, {1.0, 1.0, 1.0, 1.0});
  const std::vector<std::size_t> counts =
      selection::assign_neighbors(s_train, s_public);
  CHECK(counts == std::vector<std::size_t>{3, 0});

  CHECK_THROWS_AS(selection::assign_neighbors(Matrix(), s_public),
                  ParameterError);
  CHECK_THROWS_AS(
      selection::assign_neighbors(s_train, Matrix(2, 3, {1, 2, 3, 4, 5, 6})),
      DimensionError);
}

TEST_CASE("select_onlypublic covers clusters and stays within candidates") {
  Rng rng(73);
  // Four well-separated blobs of 12 points each in the raw feature space.
  const std::size_t per_blob = 12;
  Matrix features(4 * per_blob, 3);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < per_blob; ++i) {
      const std::size_t r = b * per_blob + i;
      features(r, 0) = 20.0 * static_cast<double>(b) + 0.2 * rng.normal();
      features(r, 1) = 0.2 * rng.normal();
      features(r, 2) = 0.2 * rng.normal();
    }
  }
  const data::Dataset pool = public_pool_from(features);
  const model::ModelParams params = flat_model(3, 3);  // every point tied

  selection::SelectionConfig cfg;
  cfg.n_labeled = 8;
  cfg.k_uncertain = 48;
  cfg.n_components = 2;
  cfg.n_cluster = 4;
  cfg.n_each = 2;
  cfg.seed = 7;

  const selection::SelectionResult result =
      selection::select_onlypublic(params, pool, cfg);
  REQUIRE(result.chosen.size() == 8);
  std::set<std::size_t> unique(result.chosen.begin(), result.chosen.end());
  CHECK(unique.size() == 8);

  // With every point a candidate and four clear blobs, the k-means clusters
  // are the blobs: exactly two picks per blob.
  std::size_t per_blob_count[4] = {0, 0, 0, 0};
  for (std::size_t idx : result.chosen) {
    ++per_blob_count[idx / per_blob];
  }
  for (std::size_t b = 0; b < 4; ++b) CHECK(per_blob_count[b] == 2);

  CHECK(result.privacy_spent.first == 0.0);
  CHECK(result.privacy_spent.second == 0.0);
}

TEST_CASE("select_onlypublic fills deficits from leftover candidates") {
  // All candidates sit at just two distinct locations, so four requested
  // clusters cannot all claim members: the deficit path must top up to
  // n_labeled unique picks anyway.
  const std::size_t n = 30;
  Matrix features(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const bool left = i % 2 == 0;
    features(i, 0) = left ? 0.0 : 50.0;
    features(i, 1) = left ? 0.0 : 50.0;
  }
  const data::Dataset pool = public_pool_from(features);
  const model::ModelParams params = flat_model(2, 3);

  selection::SelectionConfig cfg;
  cfg.n_labeled = 12;
  cfg.k_uncertain = 24;
  cfg.n_components = 1;
  cfg.n_cluster = 4;
  cfg.n_each = 3;
  cfg.seed = 11;

  const selection::SelectionResult result =
      selection::select_onlypublic(params, pool, cfg);
  REQUIRE(result.chosen.size() == 12);
  std::set<std::size_t> unique(result.chosen.begin(), result.chosen.end());
  CHECK(unique.size() == 12);
  // Candidates are the k_uncertain lowest indices (all scores tie).
  for (std::size_t idx : result.chosen) CHECK(idx < 24);
}

TEST_CASE("select_onlypublic validates its configuration") {
  Rng rng(74);
  const data::Dataset pool = public_pool_from(random_points(rng, 30, 3));
  const model::ModelParams params = flat_model(3, 3);

  selection::SelectionConfig cfg;
  cfg.n_labeled = 8;
  cfg.k_uncertain = 16;
  cfg.n_cluster = 3;
  cfg.n_each = 2;  // 3 * 2 != 8
  CHECK_THROWS_AS(selection::select_onlypublic(params, pool, cfg),
                  ParameterError);

  cfg.n_cluster = 4;
  cfg.n_each = 2;
  cfg.k_uncertain = 31;  // pool holds only 30
  CHECK_THROWS_AS(selection::select_onlypublic(params, pool, cfg),
                  ParameterError);
}

TEST_CASE("select_nearprivate matches the noise-free counting oracle") {
  Rng instance_rng(75);
  int tested = 0;
  // Integer counts tie often at the selection boundary; those instances are
  // skipped (infinitesimal noise may legitimately pick either side), so keep
  // drawing until 20 tie-free ones have been checked.
  for (int instance = 0; instance < 400 && tested < 20; ++instance) {
    const std::size_t n_private = 40 + instance_rng.uniform_int(61);
    const std::size_t n_public = 30 + instance_rng.uniform_int(21);
    const std::size_t dim = 4;

    data::Dataset private_pool;
    private_pool.features = random_points(instance_rng, n_private, dim);
    private_pool.role = data::Role::kPrivateTrain;
    private_pool.provenance.assign(n_private, data::Provenance::kClean);
    const data::Dataset pool =
        public_pool_from(random_points(instance_rng, n_public, dim));

    const model::ModelParams params = flat_model(dim, 3);

    selection::SelectionConfig cfg;
    cfg.n_labeled = 5;
    cfg.k_uncertain = 20;
    cfg.n_components = 2;
    cfg.eps_dppca = 1e9;   // vanishing DP-PCA noise
    cfg.eps_support = 1e9;  // vanishing count noise
    cfg.delta_dppca = 1e-6;
    cfg.seed = 3;

    privacy::PrivacyLedger ledger(1e-5);
    Rng rng(instance * 31 + 7);
    const selection::SelectionResult got = selection::select_nearprivate(
        params, &private_pool, pool, cfg, rng, ledger);

    // Oracle: same pipeline, no privacy calls anywhere. With a flat model the
    // embedding is the input and all uncertainty scores tie, so candidates
    // are the first k indices on both sides.
    Matrix norm_private = private_pool.features;
    for (std::size_t i = 0; i < norm_private.rows(); ++i) {
      double nrm = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        nrm += norm_private(i, j) * norm_private(i, j);
      }
      nrm = std::sqrt(nrm);
      if (nrm > 1.0) {
        for (std::size_t j = 0; j < dim; ++j) norm_private(i, j) /= nrm;
      }
    }
    const numerics::SymmetricEigen moment =
        numerics::eigen_symmetric(gram(norm_private));
    numerics::PcaBasis basis;
    basis.components = Matrix(2, dim);
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t j = 0; j < dim; ++j) {
        basis.components(p, j) = moment.vectors(p, j);
      }
    }
    basis.mean.assign(dim, 0.0);

    Matrix train_top(cfg.k_uncertain, dim);
    for (std::size_t i = 0; i < cfg.k_uncertain; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        train_top(i, j) = private_pool.features(i, j);
      }
    }
    Matrix public_top(cfg.k_uncertain, dim);
    for (std::size_t i = 0; i < cfg.k_uncertain; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        public_top(i, j) = pool.features(i, j);
      }
    }
    const Matrix s_train = numerics::project(train_top, basis);
    const Matrix s_public = numerics::project(public_top, basis);
    const std::vector<std::size_t> counts =
        neighbor_counts_brute(s_train, s_public);

    // Skip instances where a count tie crosses the n_labeled boundary: there
    // the infinitesimal noise is allowed to pick either side.
    std::vector<std::size_t> order(cfg.k_uncertain);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       if (counts[a] != counts[b]) return counts[a] > counts[b];
                       return a < b;
                     });
    if (counts[order[cfg.n_labeled - 1]] == counts[order[cfg.n_labeled]]) {
      continue;
    }
    ++tested;

    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < cfg.n_labeled; ++i) {
      want.push_back(order[i]);  // candidate slot == public index here
    }
    std::vector<std::size_t> got_sorted = got.chosen;
    std::sort(got_sorted.begin(), got_sorted.end());
    std::sort(want.begin(), want.end());
    CHECK(got_sorted == want);

    // Diagnostics line up with the brute counts.
    REQUIRE(got.raw_counts.size() == cfg.k_uncertain);
    for (std::size_t i = 0; i < cfg.k_uncertain; ++i) {
      CHECK(got.raw_counts[i] == static_cast<double>(counts[i]));
    }
  }
  CHECK(tested == 20);
}

TEST_CASE("select_nearprivate spends and logs the advertised budget") {
  Rng rng_data(76);
  data::Dataset private_pool;
  private_pool.features = random_points(rng_data, 40, 5);
  private_pool.role = data::Role::kPrivateTrain;
  private_pool.provenance.assign(40, data::Provenance::kClean);
  const data::Dataset pool = public_pool_from(random_points(rng_data, 50, 5));
  const model::ModelParams params = flat_model(5, 4);

  selection::SelectionConfig cfg;
  cfg.n_labeled = 6;
  cfg.k_uncertain = 25;
  cfg.n_components = 3;
  cfg.eps_dppca = 0.4;
  cfg.eps_support = 0.6;
  cfg.delta_dppca = 1e-6;

  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(77);
  const selection::SelectionResult result = selection::select_nearprivate(
      params, &private_pool, pool, cfg, rng, ledger);

  CHECK(result.privacy_spent.first == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(result.privacy_spent.second == 1e-6);

  REQUIRE(ledger.size() == 2);
  const auto entries = ledger.entries();
  CHECK(entries[0].mechanism == privacy::Mechanism::kGaussian);
  CHECK(entries[0].epsilon == 0.4);
  CHECK(entries[0].delta == 1e-6);
  CHECK(entries[1].mechanism == privacy::Mechanism::kLaplace);
  CHECK(entries[1].epsilon == 0.6);

  const auto [eps, delta] = privacy::compose_epsilon(ledger);
  CHECK(eps == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(delta == 1e-6);

  REQUIRE(result.chosen.size() == 6);
  REQUIRE(result.noisy_counts.size() == 25);
  REQUIRE(result.candidate_indices.size() == 25);
  // Noisy counts differ from raw counts (real noise was added).
  CHECK(result.noisy_counts != result.raw_counts);
}

TEST_CASE("select_nearprivate requires the private dataset") {
  Rng rng_data(78);
  const data::Dataset pool = public_pool_from(random_points(rng_data, 30, 4));
  const model::ModelParams params = flat_model(4, 3);
  selection::SelectionConfig cfg;
  cfg.n_labeled = 4;
  cfg.k_uncertain = 12;
  cfg.eps_dppca = 0.5;
  cfg.eps_support = 0.5;

  privacy::PrivacyLedger ledger(1e-5);
  Rng rng(79);
  CHECK_THROWS_AS(
      selection::select_nearprivate(params, nullptr, pool, cfg, rng, ledger),
      ContractError);
  CHECK(ledger.size() == 0);
}

TEST_CASE("manifest JSON round-trips method, config and result") {
  selection::Manifest manifest;
  manifest.method = selection::Method::kNearPrivate;
  manifest.config.n_labeled = 10;
  manifest.config.k_uncertain = 50;
  manifest.config.n_components = 4;
  manifest.config.n_cluster = 5;
  manifest.config.n_each = 2;
  manifest.config.uncertainty = selection::Uncertainty::kMargin;
  manifest.config.eps_dppca = 0.25;
  manifest.config.eps_support = 0.75;
  manifest.config.delta_dppca = 1e-7;
  manifest.config.seed = 99;
  manifest.result.chosen = {4, 8, 15};
  manifest.result.scores = {0.9, 0.8, 0.7};
  manifest.result.raw_counts = {3.0, 0.0, 1.0};
  manifest.result.noisy_counts = {3.1, -0.2, 0.9};
  manifest.result.candidate_indices = {4, 8, 15};
  manifest.result.privacy_spent = {1.0, 1e-7};

  const std::string text = selection::manifest_json(manifest);
  const selection::Manifest back = selection::manifest_from_json(text);

  CHECK(back.method == manifest.method);
  CHECK(back.config.n_labeled == 10);
  CHECK(back.config.k_uncertain == 50);
  CHECK(back.config.n_components == 4);
  CHECK(back.config.n_cluster == 5);
  CHECK(back.config.n_each == 2);
  CHECK(back.config.uncertainty == selection::Uncertainty::kMargin);
  CHECK(back.config.eps_dppca == 0.25);
  CHECK(back.config.eps_support == 0.75);
  CHECK(back.config.delta_dppca == 1e-7);
  CHECK(back.config.seed == 99);
  CHECK(back.result.chosen == manifest.result.chosen);
  CHECK(back.result.scores == manifest.result.scores);
  CHECK(back.result.raw_counts == manifest.result.raw_counts);
  CHECK(back.result.noisy_counts == manifest.result.noisy_counts);
  CHECK(back.result.candidate_indices == manifest.result.candidate_indices);
  CHECK(back.result.privacy_spent == manifest.result.privacy_spent);

  // Unknown top-level fields are tolerated (the CLI adds some).
  const std::string extra =
      text.substr(0, text.rfind('}')) + ",\"experiment\":{\"x\":1}}";
  const selection::Manifest tolerant = selection::manifest_from_json(extra);
  CHECK(tolerant.method == manifest.method);

  CHECK_THROWS_AS(selection::manifest_from_json("{"), FormatError);
  CHECK_THROWS_AS(selection::manifest_from_json("{\"method\":\"warp\"}"),
                  FormatError);
}
