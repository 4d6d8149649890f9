#pragma once

#include <cstddef>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "dpal/matrix.hpp"
#include "dpal/model.hpp"
#include "dpal/numerics.hpp"
#include "dpal/rng.hpp"

namespace dpal::privacy {

struct DpSgdConfig {
  // +infinity disables clipping (test/baseline mode; needs noise_multiplier 0).
  double clip_norm = 1.0;
  double noise_multiplier = 1.1;  // sigma, as a multiple of clip_norm
  double sampling_rate = 0.01;    // Poisson inclusion probability q
  double learning_rate = 0.1;
  std::size_t steps_per_epoch = 1;
  std::size_t epochs = 1;

  bool clipping_enabled() const;
  void validate() const;
};

enum class Mechanism { kSubsampledGaussian, kGaussian, kLaplace };

std::string mechanism_name(Mechanism m);
Mechanism mechanism_from_name(const std::string& name);

struct LedgerEntry {
  Mechanism mechanism = Mechanism::kLaplace;
  // subsampled_gaussian: q and sigma; gaussian: epsilon and delta;
  // laplace: epsilon. Unused fields stay zero.
  double q = 0.0;
  double sigma = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  std::string label;
};

// Append-only log of mechanism invocations. Composition: subsampled-Gaussian
// entries compose in RDP and convert at delta_target; Laplace and Gaussian
// entries add their epsilons (and deltas) linearly on top.
class PrivacyLedger {
 public:
  explicit PrivacyLedger(double delta_target);
  PrivacyLedger(const PrivacyLedger& other);
  PrivacyLedger& operator=(const PrivacyLedger& other);

  double delta_target() const { return delta_target_; }
  std::size_t size() const;
  std::vector<LedgerEntry> entries() const;

  void append_subsampled_gaussian(double q, double sigma,
                                  const std::string& label = "");
  void append_gaussian(double epsilon, double delta,
                       const std::string& label = "");
  void append_laplace(double epsilon, const std::string& label = "");

  std::string to_json() const;
  static PrivacyLedger from_json(const std::string& text);

 private:
  double delta_target_;
  std::vector<LedgerEntry> entries_;
  mutable std::mutex mutex_;
};

struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> values;
};

// The fixed accounting grid: orders 1.25, 1.5 and the integers 2..64.
const std::vector<double>& default_rdp_orders();

// Per-step RDP of the Poisson-subsampled Gaussian mechanism. q = 1 is the
// exact Gaussian alpha/(2 sigma^2); q < 1 uses the binomial-expansion upper
// bound at integer orders and the conservative max of the two adjacent
// integer orders elsewhere.
RdpCurve rdp_subsampled_gaussian(double q, double sigma,
                                 const std::vector<double>& orders);

// Composed (epsilon_total, delta_total) of everything in the ledger.
std::pair<double, double> compose_epsilon(const PrivacyLedger& ledger);

// g scaled by min(1, clip_norm / ||g||_2) over the flattened gradient.
model::GradientSet clip_gradient(const model::GradientSet& g, double clip_norm);

// Noise std for the (epsilon, delta) Gaussian mechanism at l2 sensitivity 1:
// sqrt(2 ln(1.25/delta)) / epsilon.
double gaussian_mechanism_sigma(double epsilon, double delta);

// l1 sensitivity assumed for noised count vectors. The neighbor-count noise
// scale is kLaplaceCountSensitivity / epsilon; under add/remove adjacency one
// example moves one count by 1, which this value encodes.
inline constexpr double kLaplaceCountSensitivity = 1.0;

// Adds iid Laplace(kLaplaceCountSensitivity / epsilon) noise per coordinate
// and logs one entry.
std::vector<double> laplace_mechanism(const std::vector<double>& value,
                                      double epsilon, Rng& rng,
                                      PrivacyLedger& ledger);

// Covariance-perturbation DP-PCA on the uncentered second moment of the
// row-normalized input; logs one Gaussian entry. The returned basis has a
// zero mean vector.
numerics::PcaBasis dp_pca(const Matrix& embeddings, std::size_t p,
                          double epsilon, double delta, Rng& rng,
                          PrivacyLedger& ledger);

// One DP-SGD step: Poisson-subsample, clip per-example gradients, add
// Gaussian noise, normalize by the expected batch size q*N, apply the update,
// log one subsampled-Gaussian entry. An empty sample skips the update but
// still logs the entry.
void dpsgd_step(model::ModelParams& params, const Matrix& features,
                const std::vector<int>& labels, const DpSgdConfig& cfg,
                Rng& rng, PrivacyLedger& ledger);

}  // namespace dpal::privacy
