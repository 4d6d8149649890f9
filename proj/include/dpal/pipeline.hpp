#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpal/data.hpp"
#include "dpal/model.hpp"
#include "dpal/privacy.hpp"
#include "dpal/selection.hpp"

namespace dpal::pipeline {

// Model state captured after an epoch, with the privacy spent to reach it.
struct Checkpoint {
  model::ModelParams params;
  std::size_t epoch = 0;
  privacy::PrivacyLedger ledger{1e-5};
  double test_accuracy = 0.0;
  std::uint64_t seed = 0;
};

struct FinetuneSettings {
  double learning_rate = 0.05;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;

  void validate() const;
};

// Where the three datasets come from: generated blobs, or IDX files.
struct DatasetSpec {
  std::string source = "synthetic";  // "synthetic" | "idx"

  // synthetic mode
  std::size_t num_classes = 10;
  std::size_t dim = 784;
  std::size_t train_per_class = 6000;
  std::size_t test_per_class = 1000;
  std::size_t public_per_class = 1000;
  double spread = 3.0;
  double separation = 10.0;
  // Fraction of the final public pool made of noise blobs (0 = clean pool).
  double pollution_fraction = 0.0;
  std::size_t pollution_centers = 10;
  std::uint64_t data_seed = 1;

  // idx mode (public labels feed the label oracle)
  std::string train_images, train_labels;
  std::string test_images, test_labels;
  std::string public_images, public_labels;

  void validate() const;
};

struct BuiltDatasets {
  data::Dataset train;        // role private_train
  data::Dataset test;         // role test
  data::Dataset public_pool;  // role public, possibly polluted
};

BuiltDatasets build_datasets(const DatasetSpec& spec);

struct ExperimentConfig {
  DatasetSpec dataset;
  model::Architecture arch;
  privacy::DpSgdConfig dpsgd;
  double delta = 1e-5;  // ledger delta target
  selection::SelectionConfig selection;
  FinetuneSettings finetune_settings;
  std::optional<double> eps_limit;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<selection::Method> methods;
  std::uint64_t train_seed = 42;
  data::PollutionLabelPolicy pollution_policy =
      data::PollutionLabelPolicy::kRandomLabel;

  void validate() const;
};

// JSON document mirroring the field names above; ConfigError on anything
// malformed. load_config_file adds file I/O.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::string& path);

// Fraction of examples whose argmax logit equals the label; runs in chunks so
// full-dataset evaluation does not spike memory.
double evaluate_accuracy(const model::ModelParams& params,
                         const data::Dataset& ds);

// DP-SGD for epochs x steps_per_epoch on the private train set, snapshotting
// params + ledger + test accuracy after every epoch. Deterministic in
// cfg.train_seed (init stream) and train_seed + 1 (sampling/noise stream).
std::vector<Checkpoint> train_baseline(const ExperimentConfig& cfg,
                                       const BuiltDatasets& datasets);

// Plain mini-batch SGD on labeled public examples, starting from `start`.
// The ledger is carried over untouched: fine-tuning is post-processing.
// Rejects private-role subsets (ContractError) and empty ones.
Checkpoint finetune(const Checkpoint& start, const data::LabeledSubset& labeled,
                    const FinetuneSettings& settings, const data::Dataset& test,
                    std::uint64_t seed);

// Latest checkpoint index whose composed epsilon plus the selection costs
// stays within eps_limit; BudgetError (with the numbers) when none does.
std::size_t budget_plan(const std::vector<Checkpoint>& checkpoints,
                        double eps_limit, double eps_dppca, double eps_support);

struct RunRow {
  std::uint64_t seed = 0;
  selection::Method method = selection::Method::kRandom;
  std::size_t n_labeled = 0;
  double eps_total = 0.0;
  double test_accuracy = 0.0;
  double pollution_fraction = 0.0;
};

struct MethodAggregate {
  selection::Method method = selection::Method::kRandom;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample std over seeds (0 for a single run)
  double mean_eps = 0.0;
  double mean_pollution_fraction = 0.0;
};

struct RunReport {
  std::vector<RunRow> rows;
  std::vector<MethodAggregate> aggregates;
  // The checkpoint a zero-selection-cost method starts from, un-fine-tuned.
  double baseline_accuracy = 0.0;
  double baseline_eps = 0.0;
};

// Selection + labeling + fine-tune for every (method, seed) pair on shared
// baseline checkpoints. Per-method manifests land in `manifest_sink` when one
// is provided (filled in method-major, seed-minor order).
RunReport run_experiment(const ExperimentConfig& cfg,
                         const BuiltDatasets& datasets,
                         const std::vector<Checkpoint>& checkpoints,
                         std::vector<selection::Manifest>* manifest_sink = nullptr);

// Convenience: build datasets, train the baseline, then run.
RunReport run_experiment(const ExperimentConfig& cfg);

std::vector<MethodAggregate> aggregate_rows(const std::vector<RunRow>& rows);

// Per-run streams derived from the run seed, kept apart so the oracle's
// random labels never shift the fine-tune shuffle (and vice versa).
std::uint64_t oracle_seed(std::uint64_t run_seed);
std::uint64_t finetune_seed(std::uint64_t run_seed);

// CSV with the fixed header seed,method,n_labeled,eps_total,test_acc,
// pollution_fraction; parse is the exact inverse.
std::string rows_csv(const std::vector<RunRow>& rows);
std::vector<RunRow> rows_from_csv(const std::string& text);

// Binary checkpoint file: magic "DPAL0001", little-endian header
// (activation, layer widths, epoch, seed, test accuracy), float32 weights in
// layer order, then the ledger as length-prefixed JSON.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dpal::pipeline
