#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpal/data.hpp"
#include "dpal/matrix.hpp"
#include "dpal/model.hpp"
#include "dpal/privacy.hpp"
#include "dpal/rng.hpp"

namespace dpal::selection {

enum class Method { kRandom, kEntropy, kMargin, kOnlyPublic, kNearPrivate };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

enum class Uncertainty { kEntropy, kMargin };
std::string uncertainty_name(Uncertainty u);
Uncertainty uncertainty_from_name(const std::string& name);

struct SelectionConfig {
  std::size_t n_labeled = 0;
  std::size_t k_uncertain = 0;   // candidate pool size, must exceed n_labeled
  std::size_t n_components = 8;  // PCA dimensionality
  std::size_t n_cluster = 0;
  std::size_t n_each = 0;
  Uncertainty uncertainty = Uncertainty::kEntropy;
  double eps_dppca = 0.0;
  double eps_support = 0.0;
  double delta_dppca = 1e-6;
  std::uint64_t seed = 0;

  void validate_common() const;
  void validate_onlypublic() const;   // additionally n_cluster * n_each == n_labeled
  void validate_nearprivate() const;  // additionally positive budgets
};

struct SelectionResult {
  std::vector<std::size_t> chosen;  // public-set indices
  std::vector<double> scores;       // uncertainty of each chosen point
  // Neighbor-count diagnostics, aligned with candidate_indices (the
  // k_uncertain public candidates); filled only by the counting selector.
  std::vector<double> raw_counts;
  std::vector<double> noisy_counts;
  std::vector<std::size_t> candidate_indices;
  std::pair<double, double> privacy_spent{0.0, 0.0};  // (epsilon, delta)
};

// Per-row uncertainty of a logits matrix, higher = more uncertain.
// entropy: Shannon entropy of the softmax, in nats. margin: negative gap
// between the two largest softmax probabilities.
std::vector<double> uncertainty_scores(const Matrix& logits,
                                       Uncertainty method);

// Indices of the k largest scores; equal scores break toward the lower index.
std::vector<std::size_t> top_k_indices(const std::vector<double>& scores,
                                       std::size_t k);

SelectionResult select_random(std::size_t n_public, std::size_t n_labeled,
                              std::uint64_t seed);

SelectionResult select_uncertain(const model::ModelParams& params,
                                 const data::Dataset& public_data,
                                 std::size_t n_labeled, Uncertainty method);

// Label diverse uncertain points using public data only: PCA on all public
// embeddings, k-means over the projected k most uncertain, then the n_each
// points nearest each centroid. Undersized clusters yield their whole
// membership and the deficit is filled with the globally nearest leftover
// candidates. Pure post-processing: no privacy ledger involved.
SelectionResult select_onlypublic(const model::ModelParams& params,
                                  const data::Dataset& public_data,
                                  const SelectionConfig& cfg);

// For each private row, the Euclidean-nearest public row gets one count
// (ties toward the lower public index). Returned counts sum to rows(s_train).
std::vector<std::size_t> assign_neighbors(const Matrix& s_train,
                                          const Matrix& s_public);

// Label uncertain public points that are well-supported by private data:
// DP-PCA on the private embeddings, nearest-neighbor counts from the k most
// uncertain private onto the k most uncertain public points, Laplace noise on
// the counts, then the n_labeled highest noisy counts. Spends
// eps_dppca + eps_support (two ledger entries). private_data may be absent
// only in principle: passing null raises ContractError, because this method,
// unlike the public-only ones, genuinely reads the training data.
SelectionResult select_nearprivate(const model::ModelParams& params,
                                   const data::Dataset* private_data,
                                   const data::Dataset& public_data,
                                   const SelectionConfig& cfg, Rng& rng,
                                   privacy::PrivacyLedger& ledger);

struct Manifest {
  Method method = Method::kRandom;
  SelectionConfig config;
  SelectionResult result;
};

// JSON wire form {method, config, chosen, scores, raw_counts, noisy_counts,
// candidate_indices, privacy_spent}; unknown extra fields are ignored on
// parse so carriers can extend the document.
std::string manifest_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);

}  // namespace dpal::selection
