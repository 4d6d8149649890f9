#include <json.hpp>

#include "dpal/error.hpp"
#include "dpal/privacy.hpp"

namespace dpal::privacy {

using nlohmann::json;

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kSubsampledGaussian:
      return "subsampled_gaussian";
    case Mechanism::kGaussian:
      return "gaussian";
    case Mechanism::kLaplace:
      return "laplace";
  }
  throw ParameterError("mechanism_name: unknown mechanism");
}

Mechanism mechanism_from_name(const std::string& name) {
  if (name == "subsampled_gaussian") return Mechanism::kSubsampledGaussian;
  if (name == "gaussian") return Mechanism::kGaussian;
  if (name == "laplace") return Mechanism::kLaplace;
  throw FormatError("unknown mechanism name '" + name + "'");
}

PrivacyLedger::PrivacyLedger(double delta_target) : delta_target_(delta_target) {
  if (!(delta_target > 0.0 && delta_target < 1.0)) {
    throw ParameterError("PrivacyLedger: delta_target must be in (0, 1)");
  }
}

PrivacyLedger::PrivacyLedger(const PrivacyLedger& other)
    : delta_target_(other.delta_target()) {
  entries_ = other.entries();
}

PrivacyLedger& PrivacyLedger::operator=(const PrivacyLedger& other) {
  if (this == &other) return *this;
  auto copied = other.entries();
  const double delta = other.delta_target();
  std::lock_guard<std::mutex> lock(mutex_);
  delta_target_ = delta;
  entries_ = std::move(copied);
  return *this;
}

std::size_t PrivacyLedger::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

std::vector<LedgerEntry> PrivacyLedger::entries() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_;
}

void PrivacyLedger::append_subsampled_gaussian(double q, double sigma,
                                               const std::string& label) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw ParameterError("ledger: q must be in (0, 1]");
  }
  if (!(sigma >= 0.0)) throw ParameterError("ledger: sigma must be >= 0");
  LedgerEntry e;
  e.mechanism = Mechanism::kSubsampledGaussian;
  e.q = q;
  e.sigma = sigma;
  e.label = label;
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.push_back(std::move(e));
}

void PrivacyLedger::append_gaussian(double epsilon, double delta,
                                    const std::string& label) {
  if (!(epsilon >= 0.0)) throw ParameterError("ledger: epsilon must be >= 0");
  if (!(delta >= 0.0 && delta < 1.0)) {
    throw ParameterError("ledger: delta must be in [0, 1)");
  }
  LedgerEntry e;
  e.mechanism = Mechanism::kGaussian;
  e.epsilon = epsilon;
  e.delta = delta;
  e.label = label;
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.push_back(std::move(e));
}

void PrivacyLedger::append_laplace(double epsilon, const std::string& label) {
  if (!(epsilon > 0.0)) throw ParameterError("ledger: epsilon must be > 0");
  LedgerEntry e;
  e.mechanism = Mechanism::kLaplace;
  e.epsilon = epsilon;
  e.label = label;
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.push_back(std::move(e));
}

std::string PrivacyLedger::to_json() const {
  json root;
  root["delta_target"] = delta_target_;
  json arr = json::array();
  for (const LedgerEntry& e : entries()) {
    json params;
    switch (e.mechanism) {
      case Mechanism::kSubsampledGaussian:
        params["q"] = e.q;
        params["sigma"] = e.sigma;
        break;
      case Mechanism::kGaussian:
        params["epsilon"] = e.epsilon;
        params["delta"] = e.delta;
        break;
      case Mechanism::kLaplace:
        params["epsilon"] = e.epsilon;
        break;
    }
    arr.push_back(json{{"mechanism", mechanism_name(e.mechanism)},
                       {"params", params},
                       {"label", e.label}});
  }
  root["entries"] = std::move(arr);
  return root.dump();
}

PrivacyLedger PrivacyLedger::from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& err) {
    throw FormatError(std::string("ledger JSON parse error: ") + err.what());
  }
  if (!root.contains("delta_target") || !root.contains("entries")) {
    throw FormatError("ledger JSON missing delta_target or entries");
  }
  PrivacyLedger ledger(root["delta_target"].get<double>());
  for (const json& ej : root["entries"]) {
    const Mechanism m = mechanism_from_name(ej.at("mechanism").get<std::string>());
    const json& params = ej.at("params");
    const std::string label = ej.value("label", "");
    switch (m) {
      case Mechanism::kSubsampledGaussian:
        ledger.append_subsampled_gaussian(params.at("q").get<double>(),
                                          params.at("sigma").get<double>(),
                                          label);
        break;
      case Mechanism::kGaussian:
        ledger.append_gaussian(params.at("epsilon").get<double>(),
                               params.at("delta").get<double>(), label);
        break;
      case Mechanism::kLaplace:
        ledger.append_laplace(params.at("epsilon").get<double>(), label);
        break;
    }
  }
  return ledger;
}

}  // namespace dpal::privacy
