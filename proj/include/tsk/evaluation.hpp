#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tsk/error.hpp"
#include "tsk/krr.hpp"

namespace tsk {

struct EvalResult {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<bool> hits;  ///< per-sample correctness, in prediction order
};

inline EvalResult accuracy(std::span<const std::string> predicted,
                           std::span<const std::string> gold) {
  if (predicted.size() != gold.size())
    throw ValidationError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(gold.size()) + " gold labels");
  if (predicted.empty()) throw ValidationError("accuracy: no samples");
  EvalResult r;
  r.total = predicted.size();
  r.hits.resize(r.total);
  for (std::size_t i = 0; i < r.total; ++i) {
    r.hits[i] = predicted[i] == gold[i];
    r.correct += r.hits[i] ? 1 : 0;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

inline EvalResult accuracy(const PredictionSet& predictions, std::span<const std::string> gold) {
  const auto predicted = labels_of(predictions);
  return accuracy(predicted, gold);
}

struct McNemarResult {
  std::size_t b = 0;  ///< A correct, B wrong
  std::size_t c = 0;  ///< A wrong, B correct
  double statistic = 0.0;
  double critical_value = 0.0;
  bool significant = false;
};

inline constexpr double kDefaultSignificance = 0.01;

/// Upper-tail chi-square critical value with one degree of freedom.
inline double chi_square_critical(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("significance level must be in (0, 1)");
  return boost::math::quantile(boost::math::complement(boost::math::chi_squared(1.0), alpha));
}

/// Continuity-corrected McNemar test on paired per-sample outcomes:
/// statistic = max(|b - c| - 1, 0)^2 / (b + c), or 0 when b + c = 0.
inline McNemarResult mcnemar(const EvalResult& a, const EvalResult& b,
                             double alpha = kDefaultSignificance) {
  if (a.hits.size() != b.hits.size())
    throw ValidationError("mcnemar: results cover different sample counts");
  McNemarResult r;
  for (std::size_t i = 0; i < a.hits.size(); ++i) {
    if (a.hits[i] && !b.hits[i]) ++r.b;
    if (!a.hits[i] && b.hits[i]) ++r.c;
  }
  r.critical_value = chi_square_critical(alpha);
  const double disagreements = static_cast<double>(r.b + r.c);
  if (disagreements > 0.0) {
    const double diff =
        std::max(std::abs(static_cast<double>(r.b) - static_cast<double>(r.c)) - 1.0, 0.0);
    r.statistic = diff * diff / disagreements;
  }
  r.significant = r.statistic > r.critical_value;
  return r;
}

/// Test from disagreement counts alone.
inline McNemarResult mcnemar_counts(std::size_t b, std::size_t c,
                                    double alpha = kDefaultSignificance) {
  EvalResult x, y;
  x.hits.reserve(b + c);
  y.hits.reserve(b + c);
  for (std::size_t i = 0; i < b; ++i) {
    x.hits.push_back(true);
    y.hits.push_back(false);
  }
  for (std::size_t i = 0; i < c; ++i) {
    x.hits.push_back(false);
    y.hits.push_back(true);
  }
  return mcnemar(x, y, alpha);
}

}  // namespace tsk
