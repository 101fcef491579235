#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "opportune/dag.hpp"
#include "opportune/errors.hpp"
#include "opportune/think_prior_data.hpp"

namespace opportune {

// Empirical think-time distribution: a fixed prior plus a bounded reservoir of
// gaps observed in the current session. Quantiles are nearest-rank over the
// merged multiset, so fresh models answer from the prior and long sessions are
// dominated by the user's own behavior.
class ThinkTimeModel {
public:
  static constexpr std::size_t kDefaultReservoirCap = 1024;

  explicit ThinkTimeModel(std::vector<double> prior = default_prior(),
                          std::size_t reservoir_cap = kDefaultReservoirCap)
      : prior_(std::move(prior)), cap_(reservoir_cap) {}

  static std::vector<double> default_prior() {
    return std::vector<double>(kDefaultThinkPrior.begin(), kDefaultThinkPrior.end());
  }

  static ThinkTimeModel from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataLoadError("cannot open prior sample file: " + path);
    std::vector<double> samples;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      samples.push_back(std::stod(line));
    }
    if (samples.empty()) throw DataLoadError("prior sample file is empty: " + path);
    return ThinkTimeModel(std::move(samples));
  }

  void observe(double gap_seconds) {
    if (gap_seconds < 0) throw NegativeDuration(gap_seconds);
    if (reservoir_.size() == cap_) reservoir_.pop_front();
    reservoir_.push_back(gap_seconds);
  }

  std::size_t observation_count() const { return reservoir_.size(); }

  // Nearest-rank quantile over prior + observations.
  double quantile(double q) const {
    std::vector<double> all(prior_.begin(), prior_.end());
    all.insert(all.end(), reservoir_.begin(), reservoir_.end());
    if (all.empty()) return 0.0;
    std::sort(all.begin(), all.end());
    double rank = std::ceil(q * static_cast<double>(all.size())) - 1.0;
    std::size_t idx = rank < 0 ? 0 : static_cast<std::size_t>(rank);
    if (idx >= all.size()) idx = all.size() - 1;
    return all[idx];
  }

  double p25() const { return quantile(0.25); }
  double p50() const { return quantile(0.50); }
  double p75() const { return quantile(0.75); }

  // Point prediction of the next gap: the median.
  double predict() const { return p50(); }

private:
  std::vector<double> prior_;
  std::deque<double> reservoir_;
  std::size_t cap_;
};

// Chance that a given operator's future children include an interaction.
// Defaults to 1 everywhere (every operator equally worth helping); per-node
// or per-kind overrides plug in smarter predictors.
class InteractionProbabilityProvider {
public:
  InteractionProbabilityProvider() = default;

  static InteractionProbabilityProvider uniform() { return {}; }

  static InteractionProbabilityProvider from_kind_weights(
      std::unordered_map<OpKind, double> weights) {
    InteractionProbabilityProvider p;
    for (auto& [k, w] : weights) p.kind_weights_[k] = clamp01(w);
    return p;
  }

  void set(NodeId id, double p) { node_overrides_[id] = clamp01(p); }

  double probability(const OperatorDag& dag, NodeId id) const {
    NodeId r = dag.resolve(id);
    auto it = node_overrides_.find(r);
    if (it != node_overrides_.end()) return it->second;
    auto kt = kind_weights_.find(dag.node(r).kind);
    if (kt != kind_weights_.end()) return kt->second;
    return 1.0;
  }

private:
  static double clamp01(double v) { return v < 0 ? 0.0 : (v > 1 ? 1.0 : v); }

  std::unordered_map<NodeId, double> node_overrides_;
  std::unordered_map<OpKind, double> kind_weights_;
};

}  // namespace opportune
