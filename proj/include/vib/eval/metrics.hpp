#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"

namespace vib::eval {

namespace detail {
inline void check_pair(std::span<const std::size_t> preds,
                       std::span<const std::size_t> labels) {
  if (preds.size() != labels.size()) {
    throw InputError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw InputError("metrics: empty input");
}
}  // namespace detail

/// correct / total.
inline double accuracy(std::span<const std::size_t> preds,
                       std::span<const std::size_t> labels) {
  detail::check_pair(preds, labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

/// Unweighted mean of per-class F1 over classes that occur in either preds
/// or labels. Classes present only in labels with no true positives score 0.
inline double macro_f1(std::span<const std::size_t> preds,
                       std::span<const std::size_t> labels, std::size_t classes) {
  detail::check_pair(preds, labels);
  std::vector<std::size_t> tp(classes, 0), pred_n(classes, 0), true_n(classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= classes || labels[i] >= classes) {
      throw InputError("metrics: class index out of range for " +
                       std::to_string(classes) + " classes");
    }
    ++pred_n[preds[i]];
    ++true_n[labels[i]];
    tp[preds[i]] += preds[i] == labels[i];
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (pred_n[c] == 0 && true_n[c] == 0) continue;
    ++counted;
    // 2PR/(P+R) == 2TP / (pred + true); zero when TP == 0.
    sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(pred_n[c] + true_n[c]);
  }
  return sum / static_cast<double>(counted);
}

// One line of the metrics log.
struct MetricsRecord {
  std::string run_id;
  std::string dataset;
  std::string method;
  std::size_t K = 0;      // 0 when not a vib run
  double beta = 0.0;      // meaningful only for vib runs
  int subsample_pct = 100;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::string split;  // train | valid | test
  double ce = 0.0;
  double kl = 0.0;
  double total_loss = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

}  // namespace vib::eval
