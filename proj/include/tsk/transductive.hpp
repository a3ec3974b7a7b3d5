#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tsk/corpus.hpp"
#include "tsk/error.hpp"
#include "tsk/kernel_matrix.hpp"
#include "tsk/krr.hpp"

namespace tsk {

inline constexpr std::size_t kDefaultAdopted = 1000;

/// Transductive kernel classifier settings.
struct TkcConfig {
  /// Number of confidently predicted test samples added to the training set.
  long long r = static_cast<long long>(kDefaultAdopted);
  /// Learning iterations; only 2 is supported.
  int iterations = 2;
  KrrConfig krr{};

  void validate() const {
    if (r < 0) throw ConfigError("TKC r must be >= 0");
    if (iterations != 2) throw ConfigError("TKC runs exactly two learning iterations");
    krr.validate();
  }
};

/// A test sample moved into the training set with its first-iteration label.
struct AdoptedSample {
  std::size_t index = 0;  ///< joint index (>= m)
  std::string pseudo_label;
  double confidence = 0.0;

  bool operator==(const AdoptedSample&) const = default;
};

/// Audit record of one TKC run.
struct TkcTrace {
  PredictionSet first_iteration;
  std::vector<AdoptedSample> adopted;  ///< in confidence rank order
  PredictionSet second_iteration;
  std::size_t requested = 0;
  std::vector<std::string> warnings;

  bool operator==(const TkcTrace&) const = default;
};

struct TkcResult {
  PredictionSet predictions;
  TkcTrace trace;
};

/// Positions of `predictions` sorted by confidence, highest first; equal
/// confidences keep ascending sample order.
inline std::vector<std::size_t> confidence_ranking(const PredictionSet& predictions) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return predictions[a].confidence > predictions[b].confidence;
  });
  return order;
}

/// Two-iteration self-training over a kernel whose joint order is
/// [train..., test...]. Test labels are not an input.
///
///  1. Fit KRR on the training block and predict every test sample.
///  2. Rank test samples by confidence.
///  3. Add the top min(r, n) to the training set with their predicted labels.
///  4. Refit and predict every test sample again; these are the outputs.
inline TkcResult tkc_run(const KernelMatrix& k, std::span<const std::string> train_labels,
                         const TkcConfig& config = {}) {
  config.validate();
  const std::size_t m = k.m();
  const std::size_t n = k.n();
  if (train_labels.size() != m)
    throw ValidationError("tkc_run: expected " + std::to_string(m) + " training labels, got " +
                          std::to_string(train_labels.size()));

  const auto codec = LabelCodec::from_labels({train_labels.begin(), train_labels.end()});
  const auto train = index_range(0, m);
  const auto test = index_range(m, n);

  TkcResult result;
  auto& trace = result.trace;
  trace.requested = static_cast<std::size_t>(config.r);

  const auto first = fit(k, train, encode_targets(train_labels, codec), codec, config.krr);
  trace.first_iteration = predict(first, k, test);

  std::size_t take = trace.requested;
  if (take > n) {
    trace.warnings.push_back("r = " + std::to_string(take) + " exceeds the " +
                             std::to_string(n) + " test samples; adopting all of them");
    take = n;
  }

  const auto ranking = confidence_ranking(trace.first_iteration);
  std::vector<std::size_t> augmented = train;
  std::vector<std::string> augmented_labels(train_labels.begin(), train_labels.end());
  for (std::size_t r = 0; r < take; ++r) {
    const auto& p = trace.first_iteration[ranking[r]];
    trace.adopted.push_back({p.index, p.label, p.confidence});
    augmented.push_back(p.index);
    augmented_labels.push_back(p.label);
  }

  const auto second =
      fit(k, augmented, encode_targets(augmented_labels, codec), codec, config.krr);
  trace.second_iteration = predict(second, k, test);
  result.predictions = trace.second_iteration;
  return result;
}

/// Fraction of adopted samples whose pseudo-label differs from the gold
/// label. `gold_test_labels` is indexed by test position (joint index - m).
inline double pseudo_label_error_rate(const TkcTrace& trace, std::size_t m,
                                      std::span<const std::string> gold_test_labels) {
  if (trace.adopted.empty()) return 0.0;
  std::size_t wrong = 0;
  for (const auto& a : trace.adopted) {
    const auto pos = a.index - m;
    if (a.index < m || pos >= gold_test_labels.size())
      throw ValidationError("pseudo_label_error_rate: adopted index outside the test block");
    if (gold_test_labels[pos] != a.pseudo_label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(trace.adopted.size());
}

namespace detail {

inline nlohmann::json predictions_json(const PredictionSet& ps,
                                       std::span<const std::string> ids) {
  auto arr = nlohmann::json::array();
  for (const auto& p : ps) {
    nlohmann::json j;
    j["index"] = p.index;
    if (p.index < ids.size()) j["id"] = ids[p.index];
    j["label"] = p.label;
    j["confidence"] = p.confidence;
    j["scores"] = p.scores;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace detail

/// JSON report of a trace. `ids` are the joint-order ids (may be empty).
/// When gold test labels are supplied, the pseudo-label error rate is added.
inline nlohmann::json trace_to_json(const TkcTrace& trace, std::span<const std::string> ids,
                                    std::size_t m,
                                    std::span<const std::string> gold_test_labels = {}) {
  nlohmann::json j;
  j["requested"] = trace.requested;
  j["warnings"] = trace.warnings;
  auto adopted = nlohmann::json::array();
  for (const auto& a : trace.adopted) {
    nlohmann::json e;
    e["index"] = a.index;
    if (a.index < ids.size()) e["id"] = ids[a.index];
    e["pseudo_label"] = a.pseudo_label;
    e["confidence"] = a.confidence;
    adopted.push_back(std::move(e));
  }
  j["adopted"] = std::move(adopted);
  j["first_iteration"] = detail::predictions_json(trace.first_iteration, ids);
  j["second_iteration"] = detail::predictions_json(trace.second_iteration, ids);
  if (!gold_test_labels.empty())
    j["pseudo_label_error_rate"] = pseudo_label_error_rate(trace, m, gold_test_labels);
  return j;
}

}  // namespace tsk
