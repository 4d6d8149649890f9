#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>

#include "dpal/error.hpp"
#include "dpal/pipeline.hpp"

namespace dpal::pipeline {

namespace {

Matrix gather_rows(const Matrix& source, const std::size_t* rows,
                   std::size_t count) {
  Matrix out(count, source.cols());
  for (std::size_t r = 0; r < count; ++r) {
    const double* src = source.row(rows[r]);
    double* dst = out.row(r);
    for (std::size_t j = 0; j < source.cols(); ++j) dst[j] = src[j];
  }
  return out;
}

}  // namespace

void FinetuneSettings::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("finetune settings: learning_rate must be > 0");
  }
  if (batch_size < 1) {
    throw ConfigError("finetune settings: batch_size must be >= 1");
  }
}

void DatasetSpec::validate() const {
  if (source == "synthetic") {
    if (num_classes < 2) {
      throw ConfigError("dataset: num_classes must be >= 2");
    }
    if (dim < num_classes) {
      throw ConfigError("dataset: dim must be >= num_classes");
    }
    if (train_per_class < 1 || test_per_class < 1 || public_per_class < 1) {
      throw ConfigError("dataset: per-class counts must be >= 1");
    }
    if (!(spread >= 0.0) || !(separation > 0.0)) {
      throw ConfigError("dataset: spread must be >= 0 and separation > 0");
    }
    if (!(pollution_fraction >= 0.0 && pollution_fraction < 1.0)) {
      throw ConfigError("dataset: pollution_fraction must be in [0, 1)");
    }
    if (pollution_fraction > 0.0) {
      if (pollution_centers < 1) {
        throw ConfigError("dataset: pollution_centers must be >= 1");
      }
      if (dim < num_classes + pollution_centers) {
        throw ConfigError(
            "dataset: dim must be >= num_classes + pollution_centers");
      }
    }
  } else if (source == "idx") {
    if (train_images.empty() || train_labels.empty() || test_images.empty() ||
        test_labels.empty() || public_images.empty() ||
        public_labels.empty()) {
      throw ConfigError("dataset: idx mode needs all six file paths");
    }
    if (pollution_fraction != 0.0) {
      throw ConfigError(
          "dataset: pollution mixing is only available for synthetic data");
    }
  } else {
    throw ConfigError("dataset: source must be 'synthetic' or 'idx'");
  }
}

BuiltDatasets build_datasets(const DatasetSpec& spec) {
  spec.validate();
  BuiltDatasets out;
  if (spec.source == "idx") {
    out.train = data::load_idx(spec.train_images, spec.train_labels);
    out.test = data::load_idx(spec.test_images, spec.test_labels);
    out.public_pool = data::load_idx(spec.public_images, spec.public_labels);
  } else {
    out.train = data::synth_blobs(spec.num_classes, spec.train_per_class,
                                  spec.dim, spec.spread, spec.data_seed,
                                  spec.separation);
    out.test = data::synth_blobs(spec.num_classes, spec.test_per_class,
                                 spec.dim, spec.spread, spec.data_seed + 1,
                                 spec.separation);
    data::Dataset clean = data::synth_blobs(
        spec.num_classes, spec.public_per_class, spec.dim, spec.spread,
        spec.data_seed + 2, spec.separation);
    if (spec.pollution_fraction > 0.0) {
      const double f = spec.pollution_fraction;
      const auto n_clean = static_cast<double>(clean.size());
      const auto n_pollution =
          static_cast<std::size_t>(std::llround(f / (1.0 - f) * n_clean));
      const data::Dataset pollution = data::synth_noise_blobs(
          spec.pollution_centers, n_pollution, spec.dim, spec.spread,
          spec.data_seed + 3, spec.num_classes, spec.separation);
      Rng mix_rng(spec.data_seed + 4);
      out.public_pool = data::make_polluted_public(clean, pollution, mix_rng);
    } else {
      out.public_pool = std::move(clean);
    }
  }
  out.train.role = data::Role::kPrivateTrain;
  out.test.role = data::Role::kTest;
  out.public_pool.role = data::Role::kPublic;
  return out;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  arch.validate();
  dpsgd.validate();
  finetune_settings.validate();
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("experiment: delta must be in (0, 1)");
  }
  if (dataset.source == "synthetic") {
    if (arch.input_dim != dataset.dim) {
      throw ConfigError("experiment: architecture input_dim != dataset dim");
    }
    if (arch.num_classes != dataset.num_classes) {
      throw ConfigError(
          "experiment: architecture num_classes != dataset num_classes");
    }
  }
  if (seeds.empty()) {
    throw ConfigError("experiment: at least one seed required");
  }
  if (eps_limit.has_value() && !(*eps_limit > 0.0)) {
    throw ConfigError("experiment: eps_limit must be > 0 when set");
  }
  for (selection::Method m : methods) {
    if (m == selection::Method::kOnlyPublic) {
      selection.validate_onlypublic();
    } else if (m == selection::Method::kNearPrivate) {
      selection.validate_nearprivate();
    } else if (selection.n_labeled > 0 &&
               (m == selection::Method::kEntropy ||
                m == selection::Method::kMargin)) {
      // Score-ranked baselines only need a sane n_labeled, checked at use.
    }
  }
}

double evaluate_accuracy(const model::ModelParams& params,
                         const data::Dataset& ds) {
  if (!ds.has_labels()) {
    throw ParameterError("evaluate_accuracy: dataset has no labels");
  }
  const std::size_t n = ds.size();
  if (n == 0) throw ParameterError("evaluate_accuracy: empty dataset");

  constexpr std::size_t kChunk = 4096;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t b = std::min(kChunk, n - start);
    Matrix batch(b, ds.dim());
    for (std::size_t r = 0; r < b; ++r) {
      const double* src = ds.features.row(start + r);
      double* dst = batch.row(r);
      for (std::size_t j = 0; j < ds.dim(); ++j) dst[j] = src[j];
    }
    const model::ForwardResult fwd = model::forward(params, batch);
    for (std::size_t r = 0; r < b; ++r) {
      const double* z = fwd.logits.row(r);
      std::size_t argmax = 0;
      for (std::size_t j = 1; j < fwd.logits.cols(); ++j) {
        if (z[j] > z[argmax]) argmax = j;
      }
      if (static_cast<int>(argmax) == ds.labels[start + r]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<Checkpoint> train_baseline(const ExperimentConfig& cfg,
                                       const BuiltDatasets& datasets) {
  cfg.arch.validate();
  cfg.dpsgd.validate();
  if (!datasets.train.has_labels()) {
    throw ParameterError("train_baseline: training data has no labels");
  }
  datasets.train.validate(cfg.arch.num_classes);

  model::ModelParams params = model::init_params(cfg.arch, cfg.train_seed);
  // Init and training draw from separate streams so architecture changes do
  // not shift the sampling/noise sequence.
  Rng rng(cfg.train_seed + 1);
  privacy::PrivacyLedger ledger(cfg.delta);

  std::vector<Checkpoint> checkpoints;
  checkpoints.reserve(cfg.dpsgd.epochs);
  for (std::size_t epoch = 1; epoch <= cfg.dpsgd.epochs; ++epoch) {
    for (std::size_t step = 0; step < cfg.dpsgd.steps_per_epoch; ++step) {
      privacy::dpsgd_step(params, datasets.train.features,
                          datasets.train.labels, cfg.dpsgd, rng, ledger);
    }
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.epoch = epoch;
    ckpt.ledger = ledger;
    ckpt.test_accuracy = evaluate_accuracy(params, datasets.test);
    ckpt.seed = cfg.train_seed;
    checkpoints.push_back(std::move(ckpt));
  }
  return checkpoints;
}

Checkpoint finetune(const Checkpoint& start, const data::LabeledSubset& labeled,
                    const FinetuneSettings& settings, const data::Dataset& test,
                    std::uint64_t seed) {
  settings.validate();
  if (labeled.source_role != data::Role::kPublic) {
    throw ContractError(
        "finetune: labeled subset must come from public data, got role '" +
        data::role_name(labeled.source_role) + "'");
  }
  if (labeled.size() == 0) {
    throw ParameterError("finetune: empty labeled subset");
  }

  model::ModelParams params = start.params;
  const std::size_t n = labeled.size();
  Rng rng(seed);
  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    const std::vector<std::size_t> perm = rng.permutation(n);
    for (std::size_t ofs = 0; ofs < n; ofs += settings.batch_size) {
      const std::size_t b = std::min(settings.batch_size, n - ofs);
      const Matrix batch = gather_rows(labeled.features, perm.data() + ofs, b);
      std::vector<int> batch_labels(b);
      for (std::size_t r = 0; r < b; ++r) {
        batch_labels[r] = labeled.labels[perm[ofs + r]];
      }
      const auto [loss, grads] =
          model::loss_and_mean_grad(params, batch, batch_labels);
      (void)loss;
      model::apply_update(params, grads, settings.learning_rate);
    }
  }

  Checkpoint out;
  out.params = std::move(params);
  out.epoch = start.epoch;
  out.ledger = start.ledger;  // post-processing: nothing appended
  out.test_accuracy = evaluate_accuracy(out.params, test);
  out.seed = start.seed;
  return out;
}

std::size_t budget_plan(const std::vector<Checkpoint>& checkpoints,
                        double eps_limit, double eps_dppca,
                        double eps_support) {
  if (checkpoints.empty()) {
    throw ParameterError("budget_plan: no checkpoints");
  }
  const double cost = eps_dppca + eps_support;
  for (std::size_t i = checkpoints.size(); i-- > 0;) {
    const double eps_dp =
        privacy::compose_epsilon(checkpoints[i].ledger).first;
    if (eps_dp + cost <= eps_limit) return i;
  }
  const double cheapest =
      privacy::compose_epsilon(checkpoints.front().ledger).first;
  std::ostringstream msg;
  msg << "budget_plan: no checkpoint fits: cheapest eps_dp " << cheapest
      << " + selection cost " << cost << " > eps_limit " << eps_limit;
  throw BudgetError(msg.str());
}

std::uint64_t oracle_seed(std::uint64_t run_seed) {
  return run_seed + 0x9e3779b97f4a7c15ULL;
}

std::uint64_t finetune_seed(std::uint64_t run_seed) {
  return run_seed + 2 * 0x9e3779b97f4a7c15ULL;
}

RunReport run_experiment(const ExperimentConfig& cfg,
                         const BuiltDatasets& datasets,
                         const std::vector<Checkpoint>& checkpoints,
                         std::vector<selection::Manifest>* manifest_sink) {
  cfg.validate();
  if (checkpoints.empty()) {
    throw ParameterError("run_experiment: no checkpoints");
  }
  const data::Dataset& pool = datasets.public_pool;

  RunReport report;
  const std::size_t zero_cost_idx =
      cfg.eps_limit.has_value()
          ? budget_plan(checkpoints, *cfg.eps_limit, 0.0, 0.0)
          : checkpoints.size() - 1;
  report.baseline_accuracy = checkpoints[zero_cost_idx].test_accuracy;
  report.baseline_eps =
      privacy::compose_epsilon(checkpoints[zero_cost_idx].ledger).first;

  for (selection::Method method : cfg.methods) {
    double cost_dppca = 0.0, cost_support = 0.0;
    if (method == selection::Method::kNearPrivate) {
      cost_dppca = cfg.selection.eps_dppca;
      cost_support = cfg.selection.eps_support;
    }
    const std::size_t idx =
        cfg.eps_limit.has_value()
            ? budget_plan(checkpoints, *cfg.eps_limit, cost_dppca,
                          cost_support)
            : checkpoints.size() - 1;
    const Checkpoint& ckpt = checkpoints[idx];

    for (std::uint64_t seed : cfg.seeds) {
      selection::SelectionConfig scfg = cfg.selection;
      scfg.seed = seed;

      selection::Manifest manifest;
      manifest.method = method;
      manifest.config = scfg;

      privacy::PrivacyLedger run_ledger = ckpt.ledger;
      switch (method) {
        case selection::Method::kRandom:
          manifest.result =
              selection::select_random(pool.size(), scfg.n_labeled, seed);
          break;
        case selection::Method::kEntropy:
          manifest.result = selection::select_uncertain(
              ckpt.params, pool, scfg.n_labeled,
              selection::Uncertainty::kEntropy);
          break;
        case selection::Method::kMargin:
          manifest.result = selection::select_uncertain(
              ckpt.params, pool, scfg.n_labeled,
              selection::Uncertainty::kMargin);
          break;
        case selection::Method::kOnlyPublic:
          manifest.result = selection::select_onlypublic(ckpt.params, pool, scfg);
          break;
        case selection::Method::kNearPrivate: {
          Rng selection_rng(seed);
          manifest.result = selection::select_nearprivate(
              ckpt.params, &datasets.train, pool, scfg, selection_rng,
              run_ledger);
          break;
        }
      }
      const double eps_total = privacy::compose_epsilon(run_ledger).first;

      double accuracy = ckpt.test_accuracy;
      if (!manifest.result.chosen.empty()) {
        data::LabelOracle oracle(pool, cfg.arch.num_classes,
                                 manifest.result.chosen.size(),
                                 cfg.pollution_policy, oracle_seed(seed));
        const data::LabeledSubset labeled =
            oracle.reveal(manifest.result.chosen);
        if (labeled.size() > 0) {
          const Checkpoint tuned =
              finetune(ckpt, labeled, cfg.finetune_settings, datasets.test,
                       finetune_seed(seed));
          accuracy = tuned.test_accuracy;
        }
      }

      std::size_t polluted = 0;
      for (std::size_t chosen_idx : manifest.result.chosen) {
        if (pool.provenance[chosen_idx] == data::Provenance::kPollution) {
          ++polluted;
        }
      }
      const double pollution_fraction =
          manifest.result.chosen.empty()
              ? 0.0
              : static_cast<double>(polluted) /
                    static_cast<double>(manifest.result.chosen.size());

      RunRow row;
      row.seed = seed;
      row.method = method;
      row.n_labeled = cfg.selection.n_labeled;
      row.eps_total = eps_total;
      row.test_accuracy = accuracy;
      row.pollution_fraction = pollution_fraction;
      report.rows.push_back(row);

      if (manifest_sink != nullptr) {
        manifest_sink->push_back(std::move(manifest));
      }
    }
  }
  report.aggregates = aggregate_rows(report.rows);
  return report;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const BuiltDatasets datasets = build_datasets(cfg.dataset);
  const std::vector<Checkpoint> checkpoints = train_baseline(cfg, datasets);
  return run_experiment(cfg, datasets, checkpoints, nullptr);
}

std::vector<MethodAggregate> aggregate_rows(const std::vector<RunRow>& rows) {
  std::vector<MethodAggregate> aggregates;
  for (const RunRow& row : rows) {
    MethodAggregate* agg = nullptr;
    for (MethodAggregate& a : aggregates) {
      if (a.method == row.method) {
        agg = &a;
        break;
      }
    }
    if (agg == nullptr) {
      aggregates.push_back(MethodAggregate{});
      aggregates.back().method = row.method;
      agg = &aggregates.back();
    }
    ++agg->runs;
    agg->mean_accuracy += row.test_accuracy;
    agg->mean_eps += row.eps_total;
    agg->mean_pollution_fraction += row.pollution_fraction;
  }
  for (MethodAggregate& a : aggregates) {
    const double n = static_cast<double>(a.runs);
    a.mean_accuracy /= n;
    a.mean_eps /= n;
    a.mean_pollution_fraction /= n;
  }
  // Sample standard deviation needs the means first.
  for (MethodAggregate& a : aggregates) {
    if (a.runs < 2) continue;
    double ss = 0.0;
    for (const RunRow& row : rows) {
      if (row.method != a.method) continue;
      const double d = row.test_accuracy - a.mean_accuracy;
      ss += d * d;
    }
    a.std_accuracy = std::sqrt(ss / static_cast<double>(a.runs - 1));
  }
  return aggregates;
}

namespace {

constexpr const char* kCsvHeader =
    "seed,method,n_labeled,eps_total,test_acc,pollution_fraction";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string rows_csv(const std::vector<RunRow>& rows) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const RunRow& row : rows) {
    out << row.seed << ',' << selection::method_name(row.method) << ','
        << row.n_labeled << ',' << format_double(row.eps_total) << ','
        << format_double(row.test_accuracy) << ','
        << format_double(row.pollution_fraction) << '\n';
  }
  return out.str();
}

std::vector<RunRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("rows_from_csv: empty input");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw FormatError("rows_from_csv: bad header '" + line + "', expected '" +
                      kCsvHeader + "'");
  }
  std::vector<RunRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6) {
      throw FormatError("rows_from_csv: line " + std::to_string(line_no) +
                        " has " + std::to_string(fields.size()) +
                        " fields, expected 6");
    }
    try {
      RunRow row;
      row.seed = std::stoull(fields[0]);
      row.method = selection::method_from_name(fields[1]);
      row.n_labeled = std::stoull(fields[2]);
      row.eps_total = std::stod(fields[3]);
      row.test_accuracy = std::stod(fields[4]);
      row.pollution_fraction = std::stod(fields[5]);
      rows.push_back(row);
    } catch (const FormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError("rows_from_csv: line " + std::to_string(line_no) +
                        ": " + e.what());
    }
  }
  return rows;
}

}  // namespace dpal::pipeline
