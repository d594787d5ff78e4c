#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/model/vib_model.hpp"

namespace vib::training {

enum class Method { cnn, dropout, weight_decay, vib };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::cnn: return "cnn";
    case Method::dropout: return "dropout";
    case Method::weight_decay: return "weight-decay";
    case Method::vib: return "vib";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "cnn") return Method::cnn;
  if (s == "dropout") return Method::dropout;
  if (s == "weight-decay" || s == "weight_decay") return Method::weight_decay;
  if (s == "vib") return Method::vib;
  throw UsageError("unknown method '" + s + "' (expected cnn, dropout, weight-decay or vib)");
}

inline const std::vector<int>& allowed_subsample_pcts() {
  static const std::vector<int> v = {5, 10, 30, 50, 100};
  return v;
}

inline bool is_allowed_pct(int pct) {
  for (int p : allowed_subsample_pcts()) {
    if (p == pct) return true;
  }
  return false;
}

struct TrainConfig {
  double lr0 = 0.001;
  double decay = 0.98;  // per epoch
  std::size_t batch_size = 8;
  int epochs = 40;
  std::uint64_t seed = 0;
  Method method = Method::cnn;
  int subsample_pct = 100;
  std::size_t K = 20;
  double beta = 5e-3;
  double dropout_p = 0.2;
  double weight_decay = 1e-4;
  std::vector<std::size_t> grid_K{20, 50, 100, 200};
  std::vector<double> grid_beta{2e-3, 5e-3, 2e-2, 5e-2};
  model::EncoderConfig encoder;
  std::string dataset = "custom";
  std::string run_id;
};

/// Epoch budget per dataset: 20 for TUT, 40 otherwise.
inline int default_epochs(const std::string& dataset) {
  return dataset == "tut" ? 20 : 40;
}

/// lr0 * decay^epoch (epoch counted from 0).
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw InputError("lr_at: epoch must be non-negative");
  return cfg.lr0 * std::pow(cfg.decay, epoch);
}

}  // namespace vib::training
