#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedseg/params.hpp"

namespace fedseg {

enum class RuleKind { kFedAvg, kVanillaAvg, kBetaWeighting, kSoftmax, kFedProx };

// Tagged choice of server aggregation rule. FedProx shares FedAvg's weights
// and additionally drives the proximal term in local training.
struct AggregationRule {
  RuleKind kind = RuleKind::kFedAvg;
  double beta = 0.999;  // BetaWeighting discount, in [0,1)
  double mu = 0.01;     // FedProx proximal strength, >= 0

  static AggregationRule fedavg() { return {RuleKind::kFedAvg}; }
  static AggregationRule vanillaavg() { return {RuleKind::kVanillaAvg}; }
  static AggregationRule beta_weighting(double b) {
    return {RuleKind::kBetaWeighting, b};
  }
  static AggregationRule softmax() { return {RuleKind::kSoftmax}; }
  static AggregationRule fedprox(double m) {
    AggregationRule r{RuleKind::kFedProx};
    r.mu = m;
    return r;
  }

  void validate() const {
    if (kind == RuleKind::kBetaWeighting && !(beta >= 0.0 && beta < 1.0))
      throw std::invalid_argument("beta must lie in [0,1)");
    if (kind == RuleKind::kFedProx && !(mu >= 0.0))
      throw std::invalid_argument("mu must be non-negative");
  }

  std::string name() const {
    switch (kind) {
      case RuleKind::kFedAvg: return "fedavg";
      case RuleKind::kVanillaAvg: return "vanillaavg";
      case RuleKind::kBetaWeighting: return "beta";
      case RuleKind::kSoftmax: return "softmax";
      case RuleKind::kFedProx: return "fedprox";
    }
    return "?";
  }

  static AggregationRule parse(const std::string& name) {
    if (name == "fedavg") return fedavg();
    if (name == "vanillaavg") return vanillaavg();
    if (name == "beta") return AggregationRule{RuleKind::kBetaWeighting};
    if (name == "softmax") return softmax();
    if (name == "fedprox") return AggregationRule{RuleKind::kFedProx};
    throw std::invalid_argument("unknown aggregation rule: " + name);
  }
};

inline const std::vector<std::string>& all_rule_names() {
  static const std::vector<std::string> names{"fedavg", "vanillaavg", "beta",
                                              "softmax", "fedprox"};
  return names;
}

// Normalized per-client weights; each in [0,1], summing to 1 within 1e-9.
struct KappaWeights {
  std::vector<double> weights;
};

// kappa(i) for each rule over the clients' training-set sizes.
//   fedavg / fedprox : |D_i| / sum |D_j|
//   vanillaavg       : 1/N
//   beta             : W_i / sum W_j with W_i = (1-beta)/(1-beta^|D_i|)
//   softmax          : exp(|D_i|) / sum exp(|D_j|), max-shifted for stability
inline KappaWeights compute_kappa(const AggregationRule& rule,
                                  const std::vector<std::size_t>& sizes) {
  rule.validate();
  if (sizes.empty()) throw std::invalid_argument("compute_kappa: no clients");
  const std::size_t n = sizes.size();
  if (rule.kind != RuleKind::kVanillaAvg) {
    for (auto s : sizes)
      if (s < 1) throw std::invalid_argument("compute_kappa: client with zero samples");
  }

  KappaWeights out;
  out.weights.resize(n);
  switch (rule.kind) {
    case RuleKind::kFedAvg:
    case RuleKind::kFedProx: {
      double total = 0.0;
      for (auto s : sizes) total += static_cast<double>(s);
      for (std::size_t i = 0; i < n; ++i)
        out.weights[i] = static_cast<double>(sizes[i]) / total;
      break;
    }
    case RuleKind::kVanillaAvg: {
      for (auto& w : out.weights) w = 1.0 / static_cast<double>(n);
      break;
    }
    case RuleKind::kBetaWeighting: {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        out.weights[i] = (1.0 - rule.beta) /
                         (1.0 - std::pow(rule.beta, static_cast<double>(sizes[i])));
        total += out.weights[i];
      }
      for (auto& w : out.weights) w /= total;
      break;
    }
    case RuleKind::kSoftmax: {
      // exp(635) overflows; shifting by the max size is algebraically identical
      const double m = static_cast<double>(*std::max_element(sizes.begin(), sizes.end()));
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        out.weights[i] = std::exp(static_cast<double>(sizes[i]) - m);
        total += out.weights[i];
      }
      for (auto& w : out.weights) w /= total;
      break;
    }
  }
  return out;
}

// Server-side fusion: the convex combination of client models under the
// rule's weights.
inline ParameterSet aggregate(const AggregationRule& rule,
                              const std::vector<ParameterSet>& models,
                              const std::vector<std::size_t>& sizes) {
  if (models.size() != sizes.size())
    throw std::invalid_argument("aggregate: models/sizes length mismatch");
  return weighted_sum(models, compute_kappa(rule, sizes).weights);
}

}  // namespace fedseg
