#include <cmath>
#include <cstddef>
#include <vector>

#include "dpal/error.hpp"
#include "dpal/privacy.hpp"

namespace dpal::privacy {

bool DpSgdConfig::clipping_enabled() const { return std::isfinite(clip_norm); }

void DpSgdConfig::validate() const {
  if (!(clip_norm > 0.0)) {
    throw ParameterError("dpsgd: clip_norm must be > 0 (inf disables clipping)");
  }
  if (!(noise_multiplier >= 0.0)) {
    throw ParameterError("dpsgd: noise_multiplier must be >= 0");
  }
  if (noise_multiplier > 0.0 && !clipping_enabled()) {
    throw ParameterError(
        "dpsgd: noise with an infinite clip_norm has unbounded sensitivity");
  }
  if (!(sampling_rate > 0.0 && sampling_rate <= 1.0)) {
    throw ParameterError("dpsgd: sampling_rate must be in (0, 1]");
  }
  if (!(learning_rate > 0.0)) {
    throw ParameterError("dpsgd: learning_rate must be > 0");
  }
  if (steps_per_epoch < 1 || epochs < 1) {
    throw ParameterError("dpsgd: steps_per_epoch and epochs must be >= 1");
  }
}

void dpsgd_step(model::ModelParams& params, const Matrix& features,
                const std::vector<int>& labels, const DpSgdConfig& cfg,
                Rng& rng, PrivacyLedger& ledger) {
  cfg.validate();
  const std::size_t n = features.rows();
  if (n == 0) throw ParameterError("dpsgd_step: empty dataset");
  if (labels.size() != n) {
    throw DimensionError("dpsgd_step: labels/features length mismatch");
  }

  const double q = cfg.sampling_rate;
  // Poisson subsampling: each example joins the batch independently.
  std::vector<std::size_t> batch_idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < q) batch_idx.push_back(i);
  }

  if (!batch_idx.empty()) {
    const std::size_t b = batch_idx.size();
    Matrix batch(b, features.cols());
    std::vector<int> batch_labels(b);
    for (std::size_t r = 0; r < b; ++r) {
      const double* src = features.row(batch_idx[r]);
      double* dst = batch.row(r);
      for (std::size_t j = 0; j < features.cols(); ++j) dst[j] = src[j];
      batch_labels[r] = labels[batch_idx[r]];
    }

    const model::BackwardCache cache =
        model::backward_pass(params, batch, batch_labels);

    // Sum of clipped per-example gradients, accumulated straight from the
    // cache: the clip coefficient needs only the gradient norm, which the
    // factored form gives without materializing any per-example gradient.
    model::GradientSet summed = model::zero_gradients(params);
    for (std::size_t r = 0; r < b; ++r) {
      double coeff = 1.0;
      if (cfg.clipping_enabled()) {
        const double norm = std::sqrt(model::example_gradient_sqnorm(cache, r));
        if (norm > cfg.clip_norm) coeff = cfg.clip_norm / norm;
      }
      model::accumulate_example_gradient(cache, r, coeff, summed);
    }

    if (cfg.noise_multiplier > 0.0) {
      const double noise_std = cfg.noise_multiplier * cfg.clip_norm;
      for (model::Layer& layer : summed) {
        double* w = layer.weights.data();
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
          w[i] += noise_std * rng.normal();
        }
        for (double& bias : layer.biases) bias += noise_std * rng.normal();
      }
    }

    // Normalize by the expected batch size q*N and step.
    model::apply_update(params, summed,
                        cfg.learning_rate / (q * static_cast<double>(n)));
  }
  // An empty sample skips the update, but the mechanism ran with these
  // parameters, so the cost is paid either way.
  ledger.append_subsampled_gaussian(q, cfg.noise_multiplier, "dpsgd_step");
}

}  // namespace dpal::privacy
