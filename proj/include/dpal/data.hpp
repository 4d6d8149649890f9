#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dpal/matrix.hpp"
#include "dpal/rng.hpp"

namespace dpal::data {

enum class Role { kPrivateTrain, kTest, kPublic };
enum class Provenance : std::uint8_t { kClean, kPollution };

std::string role_name(Role r);
Role role_from_name(const std::string& name);

// A feature table with optional labels and a per-example source flag. IDX
// ingestion scales pixels into [0, 1]; synthetic generators may produce any
// finite values.
struct Dataset {
  Matrix features;
  std::vector<int> labels;             // empty = unlabeled
  Role role = Role::kPublic;
  std::vector<Provenance> provenance;  // one flag per example

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool has_labels() const { return !labels.empty(); }
  double pollution_fraction() const;
  void validate(std::size_t num_classes) const;
};

// Big-endian IDX reader: magic 0x00000803 for image tensors, 0x00000801 for
// label vectors; pixel bytes scale by 1/255; a ".gz" suffix decompresses
// transparently. Images flatten to rows x (h*w). The caller assigns the role.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path = "");

// Inverse of load_idx for round trips: values clamp to [0, 1] and quantize
// back to bytes, written as n x 1 x dim. A ".gz" suffix writes gzip.
void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path = "");

// Gaussian class blobs: class c is an isotropic Gaussian (std = spread)
// around a center on a regular simplex with pairwise center distance
// `separation`, centered at the origin. Examples come out class-major.
// Requires dim >= num_classes (the simplex is built from basis vectors).
Dataset synth_blobs(std::size_t num_classes, std::size_t per_class,
                    std::size_t dim, double spread, std::uint64_t seed,
                    double separation = 10.0);

// Pollution stand-in for out-of-distribution images: Gaussian blobs around
// `num_centers` centers orthogonal to the synth_blobs class simplex
// (coordinates num_classes onward, norm matched to the class centers), so
// they are structured and clusterable but live nowhere near real classes.
// Flagged kPollution; labels (center index mod num_classes) ride along for
// evaluation only. Requires dim >= num_classes + num_centers.
Dataset synth_noise_blobs(std::size_t num_centers, std::size_t total,
                          std::size_t dim, double spread, std::uint64_t seed,
                          std::size_t num_classes, double separation = 10.0);

// Concatenate and shuffle; everything arriving via `pollution` is flagged so
// selection quality can be audited later. Labels ride along for evaluation.
Dataset make_polluted_public(const Dataset& clean, const Dataset& pollution,
                             Rng& rng);

// Single-line JSON summary {path, role, num_examples, dim, pollution_fraction}.
std::string dataset_manifest_json(const Dataset& ds, const std::string& path);

// What an annotator does with an example that has no valid class.
enum class PollutionLabelPolicy { kRandomLabel, kExclude };

std::string pollution_policy_name(PollutionLabelPolicy p);
PollutionLabelPolicy pollution_policy_from_name(const std::string& name);

// Features + labels of the revealed examples, aligned index-for-index.
// `indices` are positions in the source dataset; source_role lets consumers
// refuse private-role data.
struct LabeledSubset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
  Role source_role = Role::kPublic;
  std::vector<Provenance> provenance;

  std::size_t size() const { return labels.size(); }
};

// Ground-truth label access with a hard budget. Clean examples reveal their
// hidden labels; pollution examples follow the configured policy: a seeded
// uniformly random label (annotator confusion) or exclusion from the subset.
// Either way the query counter advances — the annotator's time is spent.
class LabelOracle {
 public:
  // `source` is borrowed and must outlive the oracle.
  LabelOracle(const Dataset& source, std::size_t num_classes,
              std::size_t budget, PollutionLabelPolicy policy,
              std::uint64_t seed);

  LabeledSubset reveal(const std::vector<std::size_t>& indices);

  std::size_t queries() const { return queries_; }
  std::size_t budget() const { return budget_; }

 private:
  const Dataset* source_;
  std::size_t num_classes_;
  std::size_t budget_;
  PollutionLabelPolicy policy_;
  Rng rng_;
  std::size_t queries_ = 0;
};

}  // namespace dpal::data
