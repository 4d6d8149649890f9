#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dpal/matrix.hpp"

namespace dpal::model {

enum class Activation { kRelu, kTanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;  // may be empty (logistic regression)
  std::size_t num_classes = 0;
  Activation activation = Activation::kRelu;

  void validate() const;
  // Width of the pre-logit embedding: last hidden dim, or input_dim when
  // there are no hidden layers.
  std::size_t embedding_dim() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }
  std::size_t num_layers() const { return hidden_dims.size() + 1; }
};

struct Layer {
  Matrix weights;               // fan_in x fan_out
  std::vector<double> biases;   // fan_out
};

struct ModelParams {
  Architecture arch;
  std::vector<Layer> layers;

  std::size_t num_scalars() const;
  bool operator==(const ModelParams& other) const;
};

struct ForwardResult {
  Matrix logits;     // batch x num_classes
  Matrix embedding;  // batch x embedding_dim, activations before the logits
};

// One gradient per layer, same shapes as the corresponding Layer.
using GradientSet = std::vector<Layer>;

// Per-layer activations and back-propagated deltas for a batch; the raw
// material for batch gradients, per-example gradients and per-example norms.
struct BackwardCache {
  std::vector<Matrix> activations;  // [L+1]: input, then each hidden output
  std::vector<Matrix> deltas;       // [L]: d(per-example loss)/d(pre-activation)
  double mean_loss = 0.0;
};

// Glorot-uniform weights, zero biases; deterministic in the seed.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

ForwardResult forward(const ModelParams& params, const Matrix& batch);

BackwardCache backward_pass(const ModelParams& params, const Matrix& batch,
                            const std::vector<int>& labels);

// Mean softmax cross-entropy and the full per-example gradients.
// mean(per_example_grads) equals the batch gradient of the mean loss.
std::pair<double, std::vector<GradientSet>> loss_and_grads(
    const ModelParams& params, const Matrix& batch,
    const std::vector<int>& labels);

// Batch gradient of the mean loss, computed with batched matrix products.
std::pair<double, GradientSet> loss_and_mean_grad(const ModelParams& params,
                                                  const Matrix& batch,
                                                  const std::vector<int>& labels);

// Gradient of a single example extracted from a BackwardCache.
GradientSet example_gradient(const ModelParams& params,
                             const BackwardCache& cache, std::size_t example);

// Squared flattened l2 norm of example i's gradient, via
// ||a x delta^T||_F = ||a|| * ||delta|| per layer; no materialization.
double example_gradient_sqnorm(const BackwardCache& cache, std::size_t example);

GradientSet zero_gradients(const ModelParams& params);

// grads_out += coeff * (gradient of example i), again without materializing.
void accumulate_example_gradient(const BackwardCache& cache, std::size_t example,
                                 double coeff, GradientSet& grads_out);

// params -= scale * grads
void apply_update(ModelParams& params, const GradientSet& grads, double scale);

double flat_sqnorm(const GradientSet& grads);

}  // namespace dpal::model
