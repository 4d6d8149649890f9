#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"
#include "dpal/numerics.hpp"
#include "dpal/selection.hpp"

namespace dpal::selection {

std::string method_name(Method m) {
  switch (m) {
    case Method::kRandom:
      return "random";
    case Method::kEntropy:
      return "entropy";
    case Method::kMargin:
      return "margin";
    case Method::kOnlyPublic:
      return "onlypublic";
    case Method::kNearPrivate:
      return "nearprivate";
  }
  throw ParameterError("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "random") return Method::kRandom;
  if (name == "entropy") return Method::kEntropy;
  if (name == "margin") return Method::kMargin;
  if (name == "onlypublic") return Method::kOnlyPublic;
  if (name == "nearprivate") return Method::kNearPrivate;
  throw FormatError("unknown selection method '" + name + "'");
}

std::string uncertainty_name(Uncertainty u) {
  switch (u) {
    case Uncertainty::kEntropy:
      return "entropy";
    case Uncertainty::kMargin:
      return "margin";
  }
  throw ParameterError("uncertainty_name: unknown scorer");
}

Uncertainty uncertainty_from_name(const std::string& name) {
  if (name == "entropy") return Uncertainty::kEntropy;
  if (name == "margin") return Uncertainty::kMargin;
  throw FormatError("unknown uncertainty scorer '" + name + "'");
}

void SelectionConfig::validate_common() const {
  if (n_labeled < 1) {
    throw ParameterError("selection: n_labeled must be >= 1");
  }
  if (k_uncertain <= n_labeled) {
    throw ParameterError("selection: k_uncertain must exceed n_labeled");
  }
  if (n_components < 1) {
    throw ParameterError("selection: n_components must be >= 1");
  }
}

void SelectionConfig::validate_onlypublic() const {
  validate_common();
  if (n_cluster < 1 || n_each < 1) {
    throw ParameterError("selection: n_cluster and n_each must be >= 1");
  }
  if (n_cluster * n_each != n_labeled) {
    throw ParameterError("selection: n_cluster * n_each must equal n_labeled");
  }
}

void SelectionConfig::validate_nearprivate() const {
  validate_common();
  if (!(eps_dppca > 0.0) || !(eps_support > 0.0)) {
    throw ParameterError("selection: eps_dppca and eps_support must be > 0");
  }
  if (!(delta_dppca > 0.0 && delta_dppca < 1.0)) {
    throw ParameterError("selection: delta_dppca must be in (0, 1)");
  }
}

std::vector<double> uncertainty_scores(const Matrix& logits,
                                       Uncertainty method) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (c < 2) {
    throw ParameterError("uncertainty_scores: need at least 2 classes");
  }
  std::vector<double> scores(n);
  std::vector<double> probs(c);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.row(i);
    double zmax = z[0];
    for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[j] = std::exp(z[j] - zmax);
      total += probs[j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[j] /= total;

    if (method == Uncertainty::kEntropy) {
      double h = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (probs[j] > 0.0) h -= probs[j] * std::log(probs[j]);
      }
      scores[i] = h;
    } else {
      double best = -1.0, second = -1.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (probs[j] > best) {
          second = best;
          best = probs[j];
        } else if (probs[j] > second) {
          second = probs[j];
        }
      }
      scores[i] = -(best - second);
    }
  }
  return scores;
}

std::vector<std::size_t> top_k_indices(const std::vector<double>& scores,
                                       std::size_t k) {
  if (k > scores.size()) {
    throw ParameterError("top_k_indices: k exceeds the number of scores");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&scores](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  order.resize(k);
  return order;
}

SelectionResult select_random(std::size_t n_public, std::size_t n_labeled,
                              std::uint64_t seed) {
  if (n_labeled > n_public) {
    throw ParameterError("select_random: n_labeled exceeds the public pool");
  }
  Rng rng(seed);
  SelectionResult result;
  result.chosen = rng.sample_without_replacement(n_public, n_labeled);
  return result;
}

namespace {

// Rows of `source` listed in `rows`, stacked into a new matrix.
Matrix gather_rows(const Matrix& source, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* src = source.row(rows[r]);
    double* dst = out.row(r);
    for (std::size_t j = 0; j < source.cols(); ++j) dst[j] = src[j];
  }
  return out;
}

}  // namespace

SelectionResult select_uncertain(const model::ModelParams& params,
                                 const data::Dataset& public_data,
                                 std::size_t n_labeled, Uncertainty method) {
  if (n_labeled > public_data.size()) {
    throw ParameterError("select_uncertain: n_labeled exceeds the public pool");
  }
  const model::ForwardResult fwd = model::forward(params, public_data.features);
  const std::vector<double> scores = uncertainty_scores(fwd.logits, method);
  SelectionResult result;
  result.chosen = top_k_indices(scores, n_labeled);
  result.scores.reserve(n_labeled);
  for (std::size_t idx : result.chosen) result.scores.push_back(scores[idx]);
  return result;
}

SelectionResult select_onlypublic(const model::ModelParams& params,
                                  const data::Dataset& public_data,
                                  const SelectionConfig& cfg) {
  cfg.validate_onlypublic();
  if (public_data.size() < cfg.k_uncertain) {
    throw ParameterError("select_onlypublic: public pool smaller than k");
  }

  const model::ForwardResult fwd = model::forward(params, public_data.features);
  // The basis comes from every public embedding; which points are uncertain
  // is decided afterwards.
  const numerics::PcaBasis basis =
      numerics::pca_fit(fwd.embedding, cfg.n_components);
  const std::vector<double> scores =
      uncertainty_scores(fwd.logits, cfg.uncertainty);
  const std::vector<std::size_t> uncertain =
      top_k_indices(scores, cfg.k_uncertain);

  const Matrix projected =
      numerics::project(gather_rows(fwd.embedding, uncertain), basis);
  const numerics::Clustering clustering =
      numerics::kmeans(projected, cfg.n_cluster, cfg.seed);

  // n_each nearest-to-centroid per cluster; an undersized cluster gives all
  // it has. Distance ties break toward the lower public index.
  const std::size_t k = cfg.k_uncertain;
  std::vector<double> dist_to_own(k);
  for (std::size_t i = 0; i < k; ++i) {
    dist_to_own[i] =
        kernels::sqdist(projected.row(i),
                        clustering.centroids.row(clustering.assignment[i]),
                        projected.cols());
  }
  auto closer = [&](std::size_t a, std::size_t b) {
    if (dist_to_own[a] != dist_to_own[b]) return dist_to_own[a] < dist_to_own[b];
    return uncertain[a] < uncertain[b];
  };

  std::vector<char> taken(k, 0);
  std::vector<std::size_t> picked;  // positions into `uncertain`
  picked.reserve(cfg.n_labeled);
  for (std::size_t c = 0; c < cfg.n_cluster; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < k; ++i) {
      if (clustering.assignment[i] == c) members.push_back(i);
    }
    std::sort(members.begin(), members.end(), closer);
    const std::size_t take = std::min<std::size_t>(cfg.n_each, members.size());
    for (std::size_t t = 0; t < take; ++t) {
      picked.push_back(members[t]);
      taken[members[t]] = 1;
    }
  }

  if (picked.size() < cfg.n_labeled) {
    // Deficit fill: leftover candidates ranked by their distance to the
    // nearest centroid of the clustering, closest first.
    std::vector<std::size_t> leftover;
    std::vector<double> best_dist(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      if (taken[i]) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cfg.n_cluster; ++c) {
        best = std::min(best,
                        kernels::sqdist(projected.row(i),
                                        clustering.centroids.row(c),
                                        projected.cols()));
      }
      best_dist[i] = best;
      leftover.push_back(i);
    }
    std::sort(leftover.begin(), leftover.end(),
              [&](std::size_t a, std::size_t b) {
                if (best_dist[a] != best_dist[b]) {
                  return best_dist[a] < best_dist[b];
                }
                return uncertain[a] < uncertain[b];
              });
    const std::size_t deficit = cfg.n_labeled - picked.size();
    picked.insert(picked.end(), leftover.begin(), leftover.begin() + deficit);
  }

  SelectionResult result;
  result.chosen.reserve(cfg.n_labeled);
  result.scores.reserve(cfg.n_labeled);
  for (std::size_t pos : picked) {
    result.chosen.push_back(uncertain[pos]);
    result.scores.push_back(scores[uncertain[pos]]);
  }
  return result;
}

std::vector<std::size_t> assign_neighbors(const Matrix& s_train,
                                          const Matrix& s_public) {
  if (s_train.rows() == 0 || s_public.rows() == 0) {
    throw ParameterError("assign_neighbors: both point sets must be non-empty");
  }
  if (s_train.cols() != s_public.cols()) {
    throw DimensionError("assign_neighbors: column mismatch");
  }
  const std::size_t p = s_train.cols();
  std::vector<std::size_t> counts(s_public.rows(), 0);
  for (std::size_t i = 0; i < s_train.rows(); ++i) {
    const double* x = s_train.row(i);
    std::size_t best = 0;
    double best_dist = kernels::sqdist(x, s_public.row(0), p);
    for (std::size_t j = 1; j < s_public.rows(); ++j) {
      const double dist = kernels::sqdist(x, s_public.row(j), p);
      if (dist < best_dist) {  // strict: ties stay with the lower index
        best_dist = dist;
        best = j;
      }
    }
    ++counts[best];
  }
  return counts;
}

SelectionResult select_nearprivate(const model::ModelParams& params,
                                   const data::Dataset* private_data,
                                   const data::Dataset& public_data,
                                   const SelectionConfig& cfg, Rng& rng,
                                   privacy::PrivacyLedger& ledger) {
  if (private_data == nullptr) {
    throw ContractError(
        "select_nearprivate: requires access to the private training data");
  }
  cfg.validate_nearprivate();
  if (private_data->size() < cfg.k_uncertain) {
    throw ParameterError("select_nearprivate: private pool smaller than k");
  }
  if (public_data.size() < cfg.k_uncertain) {
    throw ParameterError("select_nearprivate: public pool smaller than k");
  }

  const model::ForwardResult fwd_private =
      model::forward(params, private_data->features);
  const numerics::PcaBasis basis =
      privacy::dp_pca(fwd_private.embedding, cfg.n_components, cfg.eps_dppca,
                      cfg.delta_dppca, rng, ledger);

  const std::vector<double> private_scores =
      uncertainty_scores(fwd_private.logits, cfg.uncertainty);
  const std::vector<std::size_t> uncertain_private =
      top_k_indices(private_scores, cfg.k_uncertain);
  const Matrix s_train = numerics::project(
      gather_rows(fwd_private.embedding, uncertain_private), basis);

  const model::ForwardResult fwd_public =
      model::forward(params, public_data.features);
  const std::vector<double> public_scores =
      uncertainty_scores(fwd_public.logits, cfg.uncertainty);
  const std::vector<std::size_t> candidates =
      top_k_indices(public_scores, cfg.k_uncertain);
  const Matrix s_public = numerics::project(
      gather_rows(fwd_public.embedding, candidates), basis);

  const std::vector<std::size_t> raw = assign_neighbors(s_train, s_public);
  std::vector<double> raw_d(raw.begin(), raw.end());
  const std::vector<double> noisy =
      privacy::laplace_mechanism(raw_d, cfg.eps_support, rng, ledger);

  // Highest noisy support wins; count ties break toward the lower public
  // index (candidates are in uncertainty order, not index order).
  std::vector<std::size_t> slots(cfg.k_uncertain);
  std::iota(slots.begin(), slots.end(), 0);
  std::partial_sort(slots.begin(), slots.begin() + cfg.n_labeled, slots.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (noisy[a] != noisy[b]) return noisy[a] > noisy[b];
                      return candidates[a] < candidates[b];
                    });
  slots.resize(cfg.n_labeled);

  SelectionResult result;
  result.chosen.reserve(cfg.n_labeled);
  result.scores.reserve(cfg.n_labeled);
  for (std::size_t slot : slots) {
    result.chosen.push_back(candidates[slot]);
    result.scores.push_back(public_scores[candidates[slot]]);
  }
  result.raw_counts = std::move(raw_d);
  result.noisy_counts = noisy;
  result.candidate_indices = candidates;
  result.privacy_spent = {cfg.eps_dppca + cfg.eps_support, cfg.delta_dppca};
  return result;
}

}  // namespace dpal::selection
