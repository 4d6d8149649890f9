#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "dpal/error.hpp"
#include "dpal/privacy.hpp"

namespace dpal::privacy {

namespace {

double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Subsampled-Gaussian RDP upper bound at an integer order alpha >= 2:
//   (1/(alpha-1)) * log sum_{j=0}^{alpha} C(alpha,j) (1-q)^(alpha-j) q^j
//                                          * exp(j(j-1) / (2 sigma^2))
// evaluated in log space so large alpha / small sigma cannot overflow.
// Only called with q strictly below 1.
double rdp_integer_order(double q, double sigma, int alpha) {
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  std::vector<double> terms(alpha + 1);
  double max_term = -std::numeric_limits<double>::infinity();
  for (int j = 0; j <= alpha; ++j) {
    const double t = log_binom(alpha, j) + j * log_q + (alpha - j) * log_1mq +
                     j * (j - 1) / (2.0 * sigma * sigma);
    terms[j] = t;
    max_term = std::max(max_term, t);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return (max_term + std::log(acc)) / (alpha - 1.0);
}

}  // namespace

const std::vector<double>& default_rdp_orders() {
  static const std::vector<double> orders = [] {
    std::vector<double> o{1.25, 1.5};
    for (int a = 2; a <= 64; ++a) o.push_back(static_cast<double>(a));
    return o;
  }();
  return orders;
}

RdpCurve rdp_subsampled_gaussian(double q, double sigma,
                                 const std::vector<double>& orders) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ParameterError("rdp_subsampled_gaussian: q must be in (0, 1]");
  }
  if (!(sigma > 0.0)) {
    throw ParameterError("rdp_subsampled_gaussian: sigma must be > 0");
  }
  RdpCurve curve;
  curve.orders = orders;
  curve.values.reserve(orders.size());
  for (double alpha : orders) {
    if (!(alpha > 1.0)) {
      throw ParameterError("rdp_subsampled_gaussian: orders must be > 1");
    }
    double value;
    if (q == 1.0) {
      value = alpha / (2.0 * sigma * sigma);
    } else if (std::floor(alpha) == alpha) {
      value = rdp_integer_order(q, sigma, static_cast<int>(alpha));
    } else {
      // Renyi divergence is non-decreasing in the order, so the larger
      // integer neighbor bounds the fractional order from above. Neighbors
      // below 2 (where the expansion is undefined) clamp up to 2.
      const int lo = std::max(2, static_cast<int>(std::floor(alpha)));
      const int hi = std::max(2, static_cast<int>(std::ceil(alpha)));
      value = std::max(rdp_integer_order(q, sigma, lo),
                       rdp_integer_order(q, sigma, hi));
    }
    curve.values.push_back(value);
  }
  return curve;
}

std::pair<double, double> compose_epsilon(const PrivacyLedger& ledger) {
  const std::vector<LedgerEntry> entries = ledger.entries();
  if (entries.empty()) return {0.0, 0.0};

  double eps_linear = 0.0;
  double delta_linear = 0.0;
  // Steps with identical (q, sigma) share one RDP curve; count repetitions.
  std::map<std::pair<double, double>, std::size_t> groups;
  bool noise_free_release = false;
  for (const LedgerEntry& e : entries) {
    switch (e.mechanism) {
      case Mechanism::kSubsampledGaussian:
        if (e.sigma > 0.0) {
          ++groups[{e.q, e.sigma}];
        } else {
          noise_free_release = true;
        }
        break;
      case Mechanism::kGaussian:
        eps_linear += e.epsilon;
        delta_linear += e.delta;
        break;
      case Mechanism::kLaplace:
        eps_linear += e.epsilon;
        break;
    }
  }

  const bool spends_delta_target = noise_free_release || !groups.empty();
  const double delta_total =
      delta_linear + (spends_delta_target ? ledger.delta_target() : 0.0);
  if (noise_free_release) {
    // A sigma = 0 step published an exact function of the data; no finite
    // epsilon covers it.
    return {std::numeric_limits<double>::infinity(), delta_total};
  }
  if (groups.empty()) return {eps_linear, delta_total};

  const std::vector<double>& orders = default_rdp_orders();
  std::vector<double> total_rdp(orders.size(), 0.0);
  for (const auto& [params, count] : groups) {
    const RdpCurve curve =
        rdp_subsampled_gaussian(params.first, params.second, orders);
    for (std::size_t i = 0; i < orders.size(); ++i) {
      total_rdp[i] += static_cast<double>(count) * curve.values[i];
    }
  }

  const double log_inv_delta = std::log(1.0 / ledger.delta_target());
  double eps_rdp = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < orders.size(); ++i) {
    eps_rdp = std::min(eps_rdp, total_rdp[i] + log_inv_delta / (orders[i] - 1.0));
  }
  return {eps_rdp + eps_linear, delta_total};
}

}  // namespace dpal::privacy
