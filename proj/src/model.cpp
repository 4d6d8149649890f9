#include "dpal/model.hpp"

#include <cmath>
#include <string>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"
#include "dpal/rng.hpp"

namespace dpal::model {
namespace {

std::vector<std::size_t> layer_widths(const Architecture& arch) {
  std::vector<std::size_t> widths;
  widths.push_back(arch.input_dim);
  for (std::size_t h : arch.hidden_dims) widths.push_back(h);
  widths.push_back(arch.num_classes);
  return widths;
}

void check_labels(const std::vector<int>& labels, std::size_t num_classes,
                  std::size_t batch) {
  if (labels.size() != batch) {
    throw LabelError("labels/batch size mismatch: " +
                     std::to_string(labels.size()) + " vs " +
                     std::to_string(batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw LabelError("label " + std::to_string(y) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
  }
}

inline void apply_activation(double* row, std::size_t n, Activation act) {
  if (act == Activation::kRelu) {
    for (std::size_t j = 0; j < n; ++j) row[j] = row[j] > 0.0 ? row[j] : 0.0;
  } else {
    for (std::size_t j = 0; j < n; ++j) row[j] = std::tanh(row[j]);
  }
}

// out = act(in * W + b) for one layer; activation skipped for the logits.
Matrix affine_forward(const Matrix& in, const Layer& layer) {
  Matrix out = matmul(in, layer.weights);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double* r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += layer.biases[j];
  }
  return out;
}

// Per-example softmax cross-entropy; writes softmax - onehot into delta.
double softmax_xent_backward(const Matrix& logits,
                             const std::vector<int>& labels, Matrix& delta) {
  const std::size_t batch = logits.rows();
  const std::size_t k = logits.cols();
  double total_loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* z = logits.row(i);
    double m = z[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - m);
    const double lse = m + std::log(sum);
    total_loss += lse - z[labels[i]];
    double* dr = delta.row(i);
    for (std::size_t j = 0; j < k; ++j) dr[j] = std::exp(z[j] - lse);
    dr[labels[i]] -= 1.0;
  }
  return total_loss / static_cast<double>(batch);
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
  }
  throw ParameterError("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw FormatError("unknown activation '" + name + "'");
}

void Architecture::validate() const {
  if (input_dim < 1) throw ParameterError("Architecture: input_dim must be >= 1");
  if (num_classes < 2) {
    throw ParameterError("Architecture: num_classes must be >= 2");
  }
  for (std::size_t h : hidden_dims) {
    if (h < 1) throw ParameterError("Architecture: hidden dim must be >= 1");
  }
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!(layers[i].weights == other.layers[i].weights)) return false;
    if (layers[i].biases != other.layers[i].biases) return false;
  }
  return true;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  ModelParams params;
  params.arch = arch;
  const auto widths = layer_widths(arch);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Layer layer;
    layer.weights = Matrix(fan_in, fan_out);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) {
      layer.weights.data()[i] = (2.0 * rng.uniform() - 1.0) * s;
    }
    layer.biases.assign(fan_out, 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardResult forward(const ModelParams& params, const Matrix& batch) {
  if (batch.cols() != params.arch.input_dim) {
    throw DimensionError("forward: batch has " + std::to_string(batch.cols()) +
                         " cols, model expects " +
                         std::to_string(params.arch.input_dim));
  }
  const std::size_t num_hidden = params.arch.hidden_dims.size();
  // Borrow the input until the first hidden output exists; copying a large
  // batch just to own it would double peak memory on full-dataset passes.
  const Matrix* source = &batch;
  Matrix current;
  for (std::size_t l = 0; l < num_hidden; ++l) {
    Matrix next = affine_forward(*source, params.layers[l]);
    for (std::size_t i = 0; i < next.rows(); ++i) {
      apply_activation(next.row(i), next.cols(), params.arch.activation);
    }
    current = std::move(next);
    source = &current;
  }
  ForwardResult result;
  result.embedding = num_hidden > 0 ? std::move(current) : batch;
  result.logits = affine_forward(result.embedding, params.layers[num_hidden]);
  return result;
}

BackwardCache backward_pass(const ModelParams& params, const Matrix& batch,
                            const std::vector<int>& labels) {
  if (batch.rows() == 0) throw ParameterError("backward_pass: empty batch");
  if (batch.cols() != params.arch.input_dim) {
    throw DimensionError("backward_pass: batch width mismatch");
  }
  check_labels(labels, params.arch.num_classes, batch.rows());

  const std::size_t num_layers = params.layers.size();
  const Activation act = params.arch.activation;

  BackwardCache cache;
  cache.activations.reserve(num_layers);
  cache.activations.push_back(batch);
  for (std::size_t l = 0; l + 1 < num_layers; ++l) {
    Matrix next = affine_forward(cache.activations.back(), params.layers[l]);
    for (std::size_t i = 0; i < next.rows(); ++i) {
      apply_activation(next.row(i), next.cols(), act);
    }
    cache.activations.push_back(std::move(next));
  }
  Matrix logits = affine_forward(cache.activations.back(),
                                 params.layers[num_layers - 1]);

  cache.deltas.assign(num_layers, Matrix());
  cache.deltas[num_layers - 1] = Matrix(logits.rows(), logits.cols());
  cache.mean_loss =
      softmax_xent_backward(logits, labels, cache.deltas[num_layers - 1]);

  for (std::size_t l = num_layers - 1; l > 0; --l) {
    // delta_{l-1} = (delta_l * W_l^T) .* act'(h_{l-1})
    Matrix prev = matmul_transpose_b(cache.deltas[l], params.layers[l].weights);
    const Matrix& h = cache.activations[l];
    for (std::size_t i = 0; i < prev.rows(); ++i) {
      double* pr = prev.row(i);
      const double* hr = h.row(i);
      if (act == Activation::kRelu) {
        for (std::size_t j = 0; j < prev.cols(); ++j) {
          if (hr[j] <= 0.0) pr[j] = 0.0;
        }
      } else {
        for (std::size_t j = 0; j < prev.cols(); ++j) {
          pr[j] *= 1.0 - hr[j] * hr[j];
        }
      }
    }
    cache.deltas[l - 1] = std::move(prev);
  }
  return cache;
}

GradientSet zero_gradients(const ModelParams& params) {
  GradientSet grads;
  grads.reserve(params.layers.size());
  for (const Layer& l : params.layers) {
    Layer g;
    g.weights = Matrix(l.weights.rows(), l.weights.cols());
    g.biases.assign(l.biases.size(), 0.0);
    grads.push_back(std::move(g));
  }
  return grads;
}

GradientSet example_gradient(const ModelParams& params,
                             const BackwardCache& cache, std::size_t example) {
  GradientSet grads = zero_gradients(params);
  accumulate_example_gradient(cache, example, 1.0, grads);
  return grads;
}

double example_gradient_sqnorm(const BackwardCache& cache, std::size_t example) {
  double total = 0.0;
  for (std::size_t l = 0; l < cache.deltas.size(); ++l) {
    const Matrix& a = cache.activations[l];
    const Matrix& d = cache.deltas[l];
    const double a_sq = kernels::nrm2sq(a.row(example), a.cols());
    const double d_sq = kernels::nrm2sq(d.row(example), d.cols());
    total += a_sq * d_sq + d_sq;  // weight block + bias block
  }
  return total;
}

void accumulate_example_gradient(const BackwardCache& cache, std::size_t example,
                                 double coeff, GradientSet& grads_out) {
  for (std::size_t l = 0; l < cache.deltas.size(); ++l) {
    const double* a = cache.activations[l].row(example);
    const double* d = cache.deltas[l].row(example);
    const std::size_t fan_in = cache.activations[l].cols();
    const std::size_t fan_out = cache.deltas[l].cols();
    Matrix& w = grads_out[l].weights;
    for (std::size_t i = 0; i < fan_in; ++i) {
      if (a[i] != 0.0) kernels::axpy(coeff * a[i], d, w.row(i), fan_out);
    }
    kernels::axpy(coeff, d, grads_out[l].biases.data(), fan_out);
  }
}

std::pair<double, std::vector<GradientSet>> loss_and_grads(
    const ModelParams& params, const Matrix& batch,
    const std::vector<int>& labels) {
  BackwardCache cache = backward_pass(params, batch, labels);
  std::vector<GradientSet> grads;
  grads.reserve(batch.rows());
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    grads.push_back(example_gradient(params, cache, i));
  }
  return {cache.mean_loss, std::move(grads)};
}

std::pair<double, GradientSet> loss_and_mean_grad(
    const ModelParams& params, const Matrix& batch,
    const std::vector<int>& labels) {
  BackwardCache cache = backward_pass(params, batch, labels);
  GradientSet grads = zero_gradients(params);
  const double inv_batch = 1.0 / static_cast<double>(batch.rows());
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    accumulate_example_gradient(cache, i, inv_batch, grads);
  }
  return {cache.mean_loss, std::move(grads)};
}

void apply_update(ModelParams& params, const GradientSet& grads, double scale) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    kernels::axpy(-scale, grads[l].weights.data(),
                  params.layers[l].weights.data(),
                  params.layers[l].weights.size());
    kernels::axpy(-scale, grads[l].biases.data(),
                  params.layers[l].biases.data(), params.layers[l].biases.size());
  }
}

double flat_sqnorm(const GradientSet& grads) {
  double total = 0.0;
  for (const Layer& g : grads) {
    total += kernels::nrm2sq(g.weights.data(), g.weights.size());
    total += kernels::nrm2sq(g.biases.data(), g.biases.size());
  }
  return total;
}

}  // namespace dpal::model
