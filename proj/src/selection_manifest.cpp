#include <json.hpp>

#include "dpal/error.hpp"
#include "dpal/selection.hpp"

namespace dpal::selection {

using nlohmann::json;

std::string manifest_json(const Manifest& m) {
  json cfg;
  cfg["n_labeled"] = m.config.n_labeled;
  cfg["k_uncertain"] = m.config.k_uncertain;
  cfg["n_components"] = m.config.n_components;
  cfg["n_cluster"] = m.config.n_cluster;
  cfg["n_each"] = m.config.n_each;
  cfg["uncertainty"] = uncertainty_name(m.config.uncertainty);
  cfg["eps_dppca"] = m.config.eps_dppca;
  cfg["eps_support"] = m.config.eps_support;
  cfg["delta_dppca"] = m.config.delta_dppca;
  cfg["seed"] = m.config.seed;

  json root;
  root["method"] = method_name(m.method);
  root["config"] = std::move(cfg);
  root["chosen"] = m.result.chosen;
  root["scores"] = m.result.scores;
  root["raw_counts"] = m.result.raw_counts;
  root["noisy_counts"] = m.result.noisy_counts;
  root["candidate_indices"] = m.result.candidate_indices;
  root["privacy_spent"] = json{{"epsilon", m.result.privacy_spent.first},
                               {"delta", m.result.privacy_spent.second}};
  return root.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    throw FormatError(std::string("manifest JSON parse error: ") + err.what());
  }
  try {
    Manifest m;
    m.method = method_from_name(root.at("method").get<std::string>());
    const json& cfg = root.at("config");
    m.config.n_labeled = cfg.at("n_labeled").get<std::size_t>();
    m.config.k_uncertain = cfg.at("k_uncertain").get<std::size_t>();
    m.config.n_components = cfg.at("n_components").get<std::size_t>();
    m.config.n_cluster = cfg.at("n_cluster").get<std::size_t>();
    m.config.n_each = cfg.at("n_each").get<std::size_t>();
    m.config.uncertainty =
        uncertainty_from_name(cfg.at("uncertainty").get<std::string>());
    m.config.eps_dppca = cfg.at("eps_dppca").get<double>();
    m.config.eps_support = cfg.at("eps_support").get<double>();
    m.config.delta_dppca = cfg.at("delta_dppca").get<double>();
    m.config.seed = cfg.at("seed").get<std::uint64_t>();

    m.result.chosen = root.at("chosen").get<std::vector<std::size_t>>();
    m.result.scores = root.at("scores").get<std::vector<double>>();
    m.result.raw_counts = root.at("raw_counts").get<std::vector<double>>();
    m.result.noisy_counts =
        root.at("noisy_counts").get<std::vector<double>>();
    m.result.candidate_indices =
        root.at("candidate_indices").get<std::vector<std::size_t>>();
    m.result.privacy_spent = {
        root.at("privacy_spent").at("epsilon").get<double>(),
        root.at("privacy_spent").at("delta").get<double>()};
    return m;
  } catch (const json::exception& err) {
    throw FormatError(std::string("manifest JSON field error: ") + err.what());
  }
}

}  // namespace dpal::selection
