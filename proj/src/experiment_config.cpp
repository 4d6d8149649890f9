#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dpal/error.hpp"
#include "dpal/pipeline.hpp"

namespace dpal::pipeline {

namespace {

using nlohmann::json;

json dataset_to_json(const DatasetSpec& spec) {
  json j;
  j["source"] = spec.source;
  j["num_classes"] = spec.num_classes;
  j["dim"] = spec.dim;
  j["train_per_class"] = spec.train_per_class;
  j["test_per_class"] = spec.test_per_class;
  j["public_per_class"] = spec.public_per_class;
  j["spread"] = spec.spread;
  j["separation"] = spec.separation;
  j["pollution_fraction"] = spec.pollution_fraction;
  j["pollution_centers"] = spec.pollution_centers;
  j["data_seed"] = spec.data_seed;
  if (spec.source == "idx") {
    j["train_images"] = spec.train_images;
    j["train_labels"] = spec.train_labels;
    j["test_images"] = spec.test_images;
    j["test_labels"] = spec.test_labels;
    j["public_images"] = spec.public_images;
    j["public_labels"] = spec.public_labels;
  }
  return j;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec spec;
  spec.source = j.value("source", spec.source);
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.dim = j.value("dim", spec.dim);
  spec.train_per_class = j.value("train_per_class", spec.train_per_class);
  spec.test_per_class = j.value("test_per_class", spec.test_per_class);
  spec.public_per_class = j.value("public_per_class", spec.public_per_class);
  spec.spread = j.value("spread", spec.spread);
  spec.separation = j.value("separation", spec.separation);
  spec.pollution_fraction =
      j.value("pollution_fraction", spec.pollution_fraction);
  spec.pollution_centers = j.value("pollution_centers", spec.pollution_centers);
  spec.data_seed = j.value("data_seed", spec.data_seed);
  spec.train_images = j.value("train_images", spec.train_images);
  spec.train_labels = j.value("train_labels", spec.train_labels);
  spec.test_images = j.value("test_images", spec.test_images);
  spec.test_labels = j.value("test_labels", spec.test_labels);
  spec.public_images = j.value("public_images", spec.public_images);
  spec.public_labels = j.value("public_labels", spec.public_labels);
  return spec;
}

json architecture_to_json(const model::Architecture& arch) {
  json j;
  j["input_dim"] = arch.input_dim;
  j["hidden_dims"] = arch.hidden_dims;
  j["num_classes"] = arch.num_classes;
  j["activation"] = model::activation_name(arch.activation);
  return j;
}

model::Architecture architecture_from_json(const json& j) {
  model::Architecture arch;
  arch.input_dim = j.at("input_dim").get<std::size_t>();
  arch.hidden_dims = j.value("hidden_dims", std::vector<std::size_t>{});
  arch.num_classes = j.at("num_classes").get<std::size_t>();
  if (j.contains("activation")) {
    arch.activation =
        model::activation_from_name(j.at("activation").get<std::string>());
  }
  return arch;
}

json dpsgd_to_json(const privacy::DpSgdConfig& cfg) {
  json j;
  j["clip_norm"] = cfg.clip_norm;
  j["noise_multiplier"] = cfg.noise_multiplier;
  j["sampling_rate"] = cfg.sampling_rate;
  j["learning_rate"] = cfg.learning_rate;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["epochs"] = cfg.epochs;
  return j;
}

privacy::DpSgdConfig dpsgd_from_json(const json& j) {
  privacy::DpSgdConfig cfg;
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  cfg.noise_multiplier = j.value("noise_multiplier", cfg.noise_multiplier);
  cfg.sampling_rate = j.value("sampling_rate", cfg.sampling_rate);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.steps_per_epoch = j.value("steps_per_epoch", cfg.steps_per_epoch);
  cfg.epochs = j.value("epochs", cfg.epochs);
  return cfg;
}

json selection_to_json(const selection::SelectionConfig& cfg) {
  json j;
  j["n_labeled"] = cfg.n_labeled;
  j["k_uncertain"] = cfg.k_uncertain;
  j["n_components"] = cfg.n_components;
  j["n_cluster"] = cfg.n_cluster;
  j["n_each"] = cfg.n_each;
  j["uncertainty"] = selection::uncertainty_name(cfg.uncertainty);
  j["eps_dppca"] = cfg.eps_dppca;
  j["eps_support"] = cfg.eps_support;
  j["delta_dppca"] = cfg.delta_dppca;
  j["seed"] = cfg.seed;
  return j;
}

selection::SelectionConfig selection_from_json(const json& j) {
  selection::SelectionConfig cfg;
  cfg.n_labeled = j.value("n_labeled", cfg.n_labeled);
  cfg.k_uncertain = j.value("k_uncertain", cfg.k_uncertain);
  cfg.n_components = j.value("n_components", cfg.n_components);
  cfg.n_cluster = j.value("n_cluster", cfg.n_cluster);
  cfg.n_each = j.value("n_each", cfg.n_each);
  if (j.contains("uncertainty")) {
    cfg.uncertainty = selection::uncertainty_from_name(
        j.at("uncertainty").get<std::string>());
  }
  cfg.eps_dppca = j.value("eps_dppca", cfg.eps_dppca);
  cfg.eps_support = j.value("eps_support", cfg.eps_support);
  cfg.delta_dppca = j.value("delta_dppca", cfg.delta_dppca);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

json finetune_to_json(const FinetuneSettings& s) {
  json j;
  j["learning_rate"] = s.learning_rate;
  j["epochs"] = s.epochs;
  j["batch_size"] = s.batch_size;
  return j;
}

FinetuneSettings finetune_from_json(const json& j) {
  FinetuneSettings s;
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  return s;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"] = dataset_to_json(cfg.dataset);
  j["architecture"] = architecture_to_json(cfg.arch);
  j["dpsgd"] = dpsgd_to_json(cfg.dpsgd);
  j["delta"] = cfg.delta;
  j["selection"] = selection_to_json(cfg.selection);
  j["finetune"] = finetune_to_json(cfg.finetune_settings);
  if (cfg.eps_limit.has_value()) {
    j["eps_limit"] = *cfg.eps_limit;
  } else {
    j["eps_limit"] = nullptr;
  }
  j["seeds"] = cfg.seeds;
  json methods = json::array();
  for (selection::Method m : cfg.methods) {
    methods.push_back(selection::method_name(m));
  }
  j["methods"] = methods;
  j["train_seed"] = cfg.train_seed;
  j["pollution_policy"] = data::pollution_policy_name(cfg.pollution_policy);
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ExperimentConfig cfg;
    if (j.contains("dataset")) cfg.dataset = dataset_from_json(j.at("dataset"));
    if (!j.contains("architecture")) {
      throw ConfigError("config: missing 'architecture'");
    }
    cfg.arch = architecture_from_json(j.at("architecture"));
    if (j.contains("dpsgd")) cfg.dpsgd = dpsgd_from_json(j.at("dpsgd"));
    cfg.delta = j.value("delta", cfg.delta);
    if (j.contains("selection")) {
      cfg.selection = selection_from_json(j.at("selection"));
    }
    if (j.contains("finetune")) {
      cfg.finetune_settings = finetune_from_json(j.at("finetune"));
    }
    if (j.contains("eps_limit") && !j.at("eps_limit").is_null()) {
      cfg.eps_limit = j.at("eps_limit").get<double>();
    }
    if (j.contains("seeds")) {
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    }
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const json& m : j.at("methods")) {
        cfg.methods.push_back(
            selection::method_from_name(m.get<std::string>()));
      }
    }
    cfg.train_seed = j.value("train_seed", cfg.train_seed);
    if (j.contains("pollution_policy")) {
      cfg.pollution_policy = data::pollution_policy_from_name(
          j.at("pollution_policy").get<std::string>());
    }
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("config: cannot open '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return config_from_json(buffer.str());
}

}  // namespace dpal::pipeline
