#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpal/error.hpp"
#include "dpal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dpal;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;
constexpr int kExitFormat = 4;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw FormatError("write to '" + path + "' failed");
}

std::string checkpoint_filename(std::size_t epoch) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checkpoint_epoch_%03zu.dpal", epoch);
  return buf;
}

void print_aggregates(const pipeline::RunReport& report) {
  std::printf("%-12s %5s %10s %9s %9s %15s\n", "method", "runs", "mean_acc",
              "std_acc", "mean_eps", "mean_pollution");
  for (const pipeline::MethodAggregate& a : report.aggregates) {
    std::printf("%-12s %5zu %10.4f %9.4f %9.4f %15.4f\n",
                selection::method_name(a.method).c_str(), a.runs,
                a.mean_accuracy, a.std_accuracy, a.mean_eps,
                a.mean_pollution_fraction);
  }
  std::printf("baseline (no fine-tune): accuracy %.4f at eps %.4f\n",
              report.baseline_accuracy, report.baseline_eps);
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  pipeline::ExperimentConfig cfg = pipeline::load_config_file(config_path);
  cfg.validate();
  fs::create_directories(out_dir);

  const pipeline::BuiltDatasets datasets = pipeline::build_datasets(cfg.dataset);
  const std::vector<pipeline::Checkpoint> checkpoints =
      pipeline::train_baseline(cfg, datasets);

  write_text_file((fs::path(out_dir) / "config.json").string(),
                  pipeline::config_to_json(cfg));
  for (const pipeline::Checkpoint& ckpt : checkpoints) {
    const fs::path path = fs::path(out_dir) / checkpoint_filename(ckpt.epoch);
    pipeline::save_checkpoint(ckpt, path.string());
    const auto [eps, delta] = privacy::compose_epsilon(ckpt.ledger);
    std::printf("epoch %3zu: test accuracy %.4f, eps %.4f (delta %.2e) -> %s\n",
                ckpt.epoch, ckpt.test_accuracy, eps, delta,
                path.string().c_str());
  }
  return 0;
}

int cmd_select(const std::string& method_name, const std::string& ckpt_path,
               const std::string& config_path, const std::string& out_path) {
  pipeline::ExperimentConfig cfg = pipeline::load_config_file(config_path);
  const selection::Method method = selection::method_from_name(method_name);
  const pipeline::Checkpoint ckpt = pipeline::load_checkpoint(ckpt_path);
  const pipeline::BuiltDatasets datasets = pipeline::build_datasets(cfg.dataset);

  selection::Manifest manifest;
  manifest.method = method;
  manifest.config = cfg.selection;
  privacy::PrivacyLedger ledger = ckpt.ledger;
  switch (method) {
    case selection::Method::kRandom:
      manifest.result = selection::select_random(
          datasets.public_pool.size(), cfg.selection.n_labeled,
          cfg.selection.seed);
      break;
    case selection::Method::kEntropy:
      manifest.result = selection::select_uncertain(
          ckpt.params, datasets.public_pool, cfg.selection.n_labeled,
          selection::Uncertainty::kEntropy);
      break;
    case selection::Method::kMargin:
      manifest.result = selection::select_uncertain(
          ckpt.params, datasets.public_pool, cfg.selection.n_labeled,
          selection::Uncertainty::kMargin);
      break;
    case selection::Method::kOnlyPublic:
      manifest.result = selection::select_onlypublic(
          ckpt.params, datasets.public_pool, cfg.selection);
      break;
    case selection::Method::kNearPrivate: {
      Rng rng(cfg.selection.seed);
      manifest.result = selection::select_nearprivate(
          ckpt.params, &datasets.train, datasets.public_pool, cfg.selection,
          rng, ledger);
      break;
    }
  }

  // The manifest carries the full experiment config so `finetune` can rebuild
  // the same datasets and oracle without a separate config file, and the
  // post-selection ledger so the spend follows the artifact chain.
  nlohmann::json j = nlohmann::json::parse(selection::manifest_json(manifest));
  j["experiment"] = nlohmann::json::parse(pipeline::config_to_json(cfg));
  j["ledger"] = nlohmann::json::parse(ledger.to_json());
  write_text_file(out_path, j.dump(2) + "\n");

  std::printf("%s: chose %zu of %zu public examples (eps spent %.4f) -> %s\n",
              selection::method_name(method).c_str(),
              manifest.result.chosen.size(), datasets.public_pool.size(),
              manifest.result.privacy_spent.first, out_path.c_str());
  return 0;
}

int cmd_finetune(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& out_path) {
  const std::string manifest_text = read_text_file(manifest_path);
  const selection::Manifest manifest =
      selection::manifest_from_json(manifest_text);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest_text);
  } catch (const std::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (!j.contains("experiment")) {
    throw ConfigError(
        "manifest '" + manifest_path +
        "' lacks the experiment config echo; re-run `select` to produce one");
  }
  const pipeline::ExperimentConfig cfg =
      pipeline::config_from_json(j.at("experiment").dump());

  pipeline::Checkpoint start = pipeline::load_checkpoint(ckpt_path);
  if (j.contains("ledger")) {
    // The manifest's ledger already includes the selection spend; prefer it
    // over the pre-selection checkpoint ledger.
    start.ledger = privacy::PrivacyLedger::from_json(j.at("ledger").dump());
  }
  const pipeline::BuiltDatasets datasets = pipeline::build_datasets(cfg.dataset);

  data::LabelOracle oracle(datasets.public_pool, cfg.arch.num_classes,
                           manifest.result.chosen.size(), cfg.pollution_policy,
                           pipeline::oracle_seed(manifest.config.seed));
  const data::LabeledSubset labeled = oracle.reveal(manifest.result.chosen);

  const pipeline::Checkpoint tuned = pipeline::finetune(
      start, labeled, cfg.finetune_settings, datasets.test,
      pipeline::finetune_seed(manifest.config.seed));
  pipeline::save_checkpoint(tuned, out_path);

  const auto [eps, delta] = privacy::compose_epsilon(tuned.ledger);
  std::printf(
      "fine-tuned on %zu labels: test accuracy %.4f -> %.4f at eps %.4f, "
      "saved %s\n",
      labeled.size(), start.test_accuracy, tuned.test_accuracy, eps,
      out_path.c_str());
  return 0;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir) {
  pipeline::ExperimentConfig cfg = pipeline::load_config_file(config_path);
  cfg.validate();
  fs::create_directories(out_dir);

  const pipeline::BuiltDatasets datasets = pipeline::build_datasets(cfg.dataset);
  const std::vector<pipeline::Checkpoint> checkpoints =
      pipeline::train_baseline(cfg, datasets);

  std::vector<selection::Manifest> manifests;
  const pipeline::RunReport report =
      pipeline::run_experiment(cfg, datasets, checkpoints, &manifests);

  write_text_file((fs::path(out_dir) / "config.json").string(),
                  pipeline::config_to_json(cfg));
  write_text_file((fs::path(out_dir) / "rows.csv").string(),
                  pipeline::rows_csv(report.rows));
  std::size_t m = 0;
  for (selection::Method method : cfg.methods) {
    for (std::uint64_t seed : cfg.seeds) {
      const std::string name = "manifest_" + selection::method_name(method) +
                               "_seed" + std::to_string(seed) + ".json";
      write_text_file((fs::path(out_dir) / name).string(),
                      selection::manifest_json(manifests.at(m)));
      ++m;
    }
  }
  print_aggregates(report);
  return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out_path) {
  std::vector<std::string> csv_paths;
  for (const fs::directory_entry& entry : fs::directory_iterator(in_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      csv_paths.push_back(entry.path().string());
    }
  }
  std::sort(csv_paths.begin(), csv_paths.end());

  std::vector<pipeline::RunRow> rows;
  std::size_t used = 0;
  for (const std::string& path : csv_paths) {
    try {
      const std::vector<pipeline::RunRow> part =
          pipeline::rows_from_csv(read_text_file(path));
      rows.insert(rows.end(), part.begin(), part.end());
      ++used;
    } catch (const FormatError& e) {
      std::fprintf(stderr, "skipping %s: %s\n", path.c_str(), e.what());
    }
  }
  if (used == 0) {
    throw FormatError("no readable run CSV found in '" + in_dir + "'");
  }

  write_text_file(out_path, pipeline::rows_csv(rows));

  pipeline::RunReport report;
  report.rows = rows;
  report.aggregates = pipeline::aggregate_rows(rows);
  std::printf("%zu rows from %zu file(s) -> %s\n", rows.size(), used,
              out_path.c_str());
  std::printf("%-12s %5s %10s %9s %9s %15s\n", "method", "runs", "mean_acc",
              "std_acc", "mean_eps", "mean_pollution");
  for (const pipeline::MethodAggregate& a : report.aggregates) {
    std::printf("%-12s %5zu %10.4f %9.4f %9.4f %15.4f\n",
                selection::method_name(a.method).c_str(), a.runs,
                a.mean_accuracy, a.std_accuracy, a.mean_eps,
                a.mean_pollution_fraction);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private active learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, ckpt_path, manifest_path, method, in_dir;

  CLI::App* train = app.add_subcommand("train", "Run DP-SGD on the private set,"
                                                " checkpointing every epoch");
  train->add_option("--config", config_path, "Experiment config JSON")
      ->required();
  train->add_option("--out", out_path, "Output directory")->required();

  CLI::App* select = app.add_subcommand(
      "select", "Pick public examples to label from a checkpoint");
  select
      ->add_option("--method", method,
                   "random|entropy|margin|onlypublic|nearprivate")
      ->required()
      ->check(CLI::IsMember(
          {"random", "entropy", "margin", "onlypublic", "nearprivate"}));
  select->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  select->add_option("--config", config_path, "Experiment config JSON")
      ->required();
  select->add_option("--out", out_path, "Manifest JSON to write")->required();

  CLI::App* finetune = app.add_subcommand(
      "finetune", "Fine-tune a checkpoint on a selection manifest's labels");
  finetune->add_option("--checkpoint", ckpt_path, "Checkpoint file")
      ->required();
  finetune->add_option("--manifest", manifest_path, "Manifest from `select`")
      ->required();
  finetune->add_option("--out", out_path, "Checkpoint file to write")
      ->required();

  CLI::App* experiment = app.add_subcommand(
      "experiment", "Train once, then selection + fine-tune per method/seed");
  experiment->add_option("--config", config_path, "Experiment config JSON")
      ->required();
  experiment->add_option("--out", out_path, "Output directory")->required();

  CLI::App* report = app.add_subcommand(
      "report", "Merge run CSVs from a directory and print aggregates");
  report->add_option("--in", in_dir, "Directory holding run CSVs")->required();
  report->add_option("--out", out_path, "Merged CSV to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_path);
    if (select->parsed()) {
      return cmd_select(method, ckpt_path, config_path, out_path);
    }
    if (finetune->parsed()) {
      return cmd_finetune(ckpt_path, manifest_path, out_path);
    }
    if (experiment->parsed()) return cmd_experiment(config_path, out_path);
    if (report->parsed()) return cmd_report(in_dir, out_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const BudgetError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBudget;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  } catch (const LabelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
