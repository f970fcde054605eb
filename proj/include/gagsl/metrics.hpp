#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "gagsl/error.hpp"
#include "gagsl/matrix.hpp"

namespace gagsl {

// Micro-averaged F1 for single-label classification equals plain accuracy.
inline double f1_micro(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ContractViolation("f1_micro: label vectors empty or mismatched");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

// Macro-averaged F1 over all class ids in [0, class_count). A class with no
// true and no predicted instances contributes F1 = 0 (with a warning), which
// keeps the average comparable across perturbed reruns of one dataset.
inline double f1_macro(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                       int class_count, bool quiet = false) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ContractViolation("f1_macro: label vectors empty or mismatched");
  if (class_count < 1) throw ContractViolation("f1_macro: class_count must be >= 1");
  double sum = 0.0;
  for (int c = 0; c < class_count; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      const bool t = y_true[i] == c;
      const bool p = y_pred[i] == c;
      if (t && p)
        ++tp;
      else if (!t && p)
        ++fp;
      else if (t && !p)
        ++fn;
    }
    if (tp + fn == 0) {
      // No true instances of this class in the evaluated set: F1 term is 0.
      if (!quiet)
        warn("f1_macro: class " + std::to_string(c) +
             " has no true instances in this set, scored as 0");
      continue;
    }
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp) +
                         static_cast<double>(fn);
    sum += 2.0 * static_cast<double>(tp) / denom;
  }
  return sum / static_cast<double>(class_count);
}

// One-vs-rest AUC for a single class given per-row scores; ties receive
// midranks. Returns false when the class has no positives or no negatives.
inline bool auc_one_vs_rest(const std::vector<int>& y_true, const std::vector<double>& scores,
                            int cls, double* out) {
  const std::size_t n = y_true.size();
  std::size_t pos = 0;
  for (int y : y_true)
    if (y == cls) ++pos;
  if (pos == 0 || pos == n) return false;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midrank sum over positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (y_true[order[k]] == cls) rank_sum += midrank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double q = static_cast<double>(n - pos);
  *out = (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
  return true;
}

// Macro one-vs-rest AUC over class probability columns; classes without both
// positives and negatives are skipped with a warning.
inline double auc_ovr_macro(const std::vector<int>& y_true, const Matrix& probabilities,
                            int class_count, bool quiet = false) {
  if (probabilities.rows() != y_true.size())
    throw ContractViolation("auc_ovr_macro: row count does not match labels");
  if (probabilities.cols() != static_cast<std::size_t>(class_count))
    throw ContractViolation("auc_ovr_macro: column count does not match class_count");
  double sum = 0.0;
  int counted = 0;
  std::vector<double> col(y_true.size());
  for (int c = 0; c < class_count; ++c) {
    for (std::size_t i = 0; i < y_true.size(); ++i)
      col[i] = probabilities(i, static_cast<std::size_t>(c));
    double a = 0.0;
    if (auc_one_vs_rest(y_true, col, c, &a)) {
      sum += a;
      ++counted;
    } else if (!quiet) {
      warn("auc_ovr_macro: class " + std::to_string(c) +
           " lacks positives or negatives in this split, skipped");
    }
  }
  if (counted == 0) {
    if (!quiet) warn("auc_ovr_macro: no class was scorable, returning 0");
    return 0.0;
  }
  return sum / static_cast<double>(counted);
}

}  // namespace gagsl
