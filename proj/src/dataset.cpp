#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>

#include "dpal/data.hpp"
#include "dpal/error.hpp"

namespace dpal::data {

std::string role_name(Role r) {
  switch (r) {
    case Role::kPrivateTrain:
      return "private_train";
    case Role::kTest:
      return "test";
    case Role::kPublic:
      return "public";
  }
  throw ParameterError("role_name: unknown role");
}

Role role_from_name(const std::string& name) {
  if (name == "private_train") return Role::kPrivateTrain;
  if (name == "test") return Role::kTest;
  if (name == "public") return Role::kPublic;
  throw FormatError("unknown dataset role '" + name + "'");
}

std::string pollution_policy_name(PollutionLabelPolicy p) {
  switch (p) {
    case PollutionLabelPolicy::kRandomLabel:
      return "random_label";
    case PollutionLabelPolicy::kExclude:
      return "exclude";
  }
  throw ParameterError("pollution_policy_name: unknown policy");
}

PollutionLabelPolicy pollution_policy_from_name(const std::string& name) {
  if (name == "random_label") return PollutionLabelPolicy::kRandomLabel;
  if (name == "exclude") return PollutionLabelPolicy::kExclude;
  throw FormatError("unknown pollution label policy '" + name + "'");
}

double Dataset::pollution_fraction() const {
  if (provenance.empty()) return 0.0;
  std::size_t flagged = 0;
  for (Provenance p : provenance) {
    if (p == Provenance::kPollution) ++flagged;
  }
  return static_cast<double>(flagged) / static_cast<double>(provenance.size());
}

void Dataset::validate(std::size_t num_classes) const {
  if (has_labels() && labels.size() != size()) {
    throw DimensionError("dataset: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(size()) + " examples");
  }
  if (provenance.size() != size()) {
    throw DimensionError("dataset: provenance flags do not cover all examples");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw LabelError("dataset: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset synth_blobs(std::size_t num_classes, std::size_t per_class,
                    std::size_t dim, double spread, std::uint64_t seed,
                    double separation) {
  if (num_classes < 2) {
    throw ParameterError("synth_blobs: num_classes must be >= 2");
  }
  if (dim < num_classes) {
    throw ParameterError(
        "synth_blobs: dim must be >= num_classes for simplex centers");
  }
  if (!(spread >= 0.0) || !(separation > 0.0)) {
    throw ParameterError("synth_blobs: spread must be >= 0, separation > 0");
  }

  // Centers: scaled basis vectors recentered at the origin. |e_c - e_j| is
  // sqrt(2), so scaling by separation/sqrt(2) makes every pairwise center
  // distance exactly `separation`.
  const double scale = separation / std::sqrt(2.0);
  const double shift = scale / static_cast<double>(num_classes);

  Rng rng(seed);
  const std::size_t n = num_classes * per_class;
  Dataset ds;
  ds.features = Matrix(n, dim);
  ds.labels.resize(n);
  ds.provenance.assign(n, Provenance::kClean);
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      double* x = ds.features.row(row);
      for (std::size_t j = 0; j < dim; ++j) {
        const double center =
            (j < num_classes ? (j == c ? scale : 0.0) - shift : 0.0);
        x[j] = center + spread * rng.normal();
      }
      ds.labels[row] = static_cast<int>(c);
    }
  }
  return ds;
}

Dataset synth_noise_blobs(std::size_t num_centers, std::size_t total,
                          std::size_t dim, double spread, std::uint64_t seed,
                          std::size_t num_classes, double separation) {
  if (num_centers < 1) {
    throw ParameterError("synth_noise_blobs: num_centers must be >= 1");
  }
  if (dim < num_classes + num_centers) {
    throw ParameterError(
        "synth_noise_blobs: dim must be >= num_classes + num_centers");
  }
  if (!(spread >= 0.0) || !(separation > 0.0)) {
    throw ParameterError(
        "synth_noise_blobs: spread must be >= 0, separation > 0");
  }

  // Match the norm of the synth_blobs class centers so the pollution sits at
  // a comparable distance from the origin, just in orthogonal directions.
  const double center_norm =
      separation * std::sqrt((static_cast<double>(num_classes) - 1.0) /
                             (2.0 * static_cast<double>(num_classes)));

  Rng rng(seed);
  Dataset ds;
  ds.features = Matrix(total, dim);
  ds.labels.resize(total);
  ds.provenance.assign(total, Provenance::kPollution);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t center = i % num_centers;
    const std::size_t axis = num_classes + center;
    double* x = ds.features.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      x[j] = (j == axis ? center_norm : 0.0) + spread * rng.normal();
    }
    ds.labels[i] = static_cast<int>(center % num_classes);
  }
  return ds;
}

Dataset make_polluted_public(const Dataset& clean, const Dataset& pollution,
                             Rng& rng) {
  if (pollution.size() > 0 && pollution.dim() != clean.dim()) {
    throw DimensionError("make_polluted_public: feature dimension mismatch");
  }
  if (pollution.size() > 0 && clean.has_labels() != pollution.has_labels()) {
    throw ParameterError(
        "make_polluted_public: both parts must be labeled, or neither");
  }

  const std::size_t n1 = clean.size();
  const std::size_t n2 = pollution.size();
  const std::size_t n = n1 + n2;
  const std::size_t d = clean.dim();
  const bool labeled = clean.has_labels();

  Dataset out;
  out.role = Role::kPublic;
  out.features = Matrix(n, d);
  if (labeled) out.labels.resize(n);
  out.provenance.resize(n);

  const std::vector<std::size_t> perm = rng.permutation(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = perm[i];
    const bool from_clean = src < n1;
    const Dataset& part = from_clean ? clean : pollution;
    const std::size_t j = from_clean ? src : src - n1;
    const double* srow = part.features.row(j);
    double* drow = out.features.row(i);
    for (std::size_t k = 0; k < d; ++k) drow[k] = srow[k];
    if (labeled) out.labels[i] = part.labels[j];
    out.provenance[i] =
        from_clean ? part.provenance[j] : Provenance::kPollution;
  }
  return out;
}

std::string dataset_manifest_json(const Dataset& ds, const std::string& path) {
  std::ostringstream out;
  out << "{\"path\":\"" << path << "\",\"role\":\"" << role_name(ds.role)
      << "\",\"num_examples\":" << ds.size() << ",\"dim\":" << ds.dim()
      << ",\"pollution_fraction\":" << ds.pollution_fraction() << "}";
  return out.str();
}

LabelOracle::LabelOracle(const Dataset& source, std::size_t num_classes,
                         std::size_t budget, PollutionLabelPolicy policy,
                         std::uint64_t seed)
    : source_(&source),
      num_classes_(num_classes),
      budget_(budget),
      policy_(policy),
      rng_(seed) {
  if (num_classes < 2) {
    throw ParameterError("LabelOracle: num_classes must be >= 2");
  }
  if (!source.has_labels()) {
    throw ParameterError("LabelOracle: source has no ground-truth labels");
  }
  source.validate(num_classes);
}

LabeledSubset LabelOracle::reveal(const std::vector<std::size_t>& indices) {
  for (std::size_t idx : indices) {
    if (idx >= source_->size()) {
      throw ParameterError("LabelOracle: index " + std::to_string(idx) +
                           " out of range");
    }
  }
  if (queries_ + indices.size() > budget_) {
    throw BudgetError("LabelOracle: revealing " +
                      std::to_string(indices.size()) + " labels would exceed " +
                      std::to_string(budget_) + " (already used " +
                      std::to_string(queries_) + ")");
  }
  queries_ += indices.size();

  // Which requested examples survive: under "exclude", flagged ones drop out
  // of the subset (the query still counted above).
  std::vector<std::size_t> kept;
  std::vector<int> kept_labels;
  for (std::size_t idx : indices) {
    const bool polluted = source_->provenance[idx] == Provenance::kPollution;
    if (polluted && policy_ == PollutionLabelPolicy::kExclude) continue;
    int label;
    if (polluted) {
      label = static_cast<int>(rng_.uniform_int(num_classes_));
    } else {
      label = source_->labels[idx];
    }
    kept.push_back(idx);
    kept_labels.push_back(label);
  }

  LabeledSubset subset;
  subset.source_role = source_->role;
  subset.indices = std::move(kept);
  subset.labels = std::move(kept_labels);
  subset.features = Matrix(subset.indices.size(), source_->dim());
  subset.provenance.resize(subset.indices.size());
  for (std::size_t r = 0; r < subset.indices.size(); ++r) {
    const double* srow = source_->features.row(subset.indices[r]);
    double* drow = subset.features.row(r);
    for (std::size_t k = 0; k < source_->dim(); ++k) drow[k] = srow[k];
    subset.provenance[r] = source_->provenance[subset.indices[r]];
  }
  return subset;
}

}  // namespace dpal::data
