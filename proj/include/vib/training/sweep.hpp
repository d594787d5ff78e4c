#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/eval/metrics.hpp"
#include "vib/training/config.hpp"
#include "vib/training/parallel.hpp"
#include "vib/training/trainer.hpp"

namespace vib::training {

struct GridCell {
  std::size_t K = 0;
  double beta = 0.0;
  double valid_accuracy = 0.0;
  double valid_ce = 0.0;
  std::vector<eval::MetricsRecord> log;
};

struct GridResult {
  std::vector<GridCell> cells;  // K-major, in the order of cfg.grid_K x cfg.grid_beta
  std::size_t best = 0;
};

/// Highest validation accuracy; ties go to the smaller K, then smaller beta.
inline std::size_t select_best(const std::vector<GridCell>& cells) {
  if (cells.empty()) throw InputError("select_best: empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const GridCell& a = cells[i];
    const GridCell& b = cells[best];
    if (a.valid_accuracy != b.valid_accuracy) {
      if (a.valid_accuracy > b.valid_accuracy) best = i;
    } else if (a.K != b.K) {
      if (a.K < b.K) best = i;
    } else if (a.beta < b.beta) {
      best = i;
    }
  }
  return best;
}

/// Final-epoch validation record of a log, or nullptr if it has none.
inline const eval::MetricsRecord* last_valid(const std::vector<eval::MetricsRecord>& log) {
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (it->split == "valid") return &*it;
  }
  return nullptr;
}

inline const eval::MetricsRecord* last_train(const std::vector<eval::MetricsRecord>& log) {
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (it->split == "train") return &*it;
  }
  return nullptr;
}

/// Config for one (K, beta) cell of a vib grid.
inline TrainConfig cell_config(const TrainConfig& base, std::size_t K, double beta) {
  TrainConfig c = base;
  c.method = Method::vib;
  c.K = K;
  c.beta = beta;
  return c;
}

/// Runs `run(cell_config)` for every grid cell, possibly in parallel, and
/// picks the winner. `run` must return that cell's metrics log.
using CellRunner = std::function<std::vector<eval::MetricsRecord>(const TrainConfig&)>;

inline GridResult grid_search(const TrainConfig& cfg, const CellRunner& run, unsigned jobs = 1) {
  if (cfg.grid_K.empty() || cfg.grid_beta.empty()) throw UsageError("grid_search: empty grid");
  GridResult g;
  for (std::size_t K : cfg.grid_K) {
    for (double b : cfg.grid_beta) g.cells.push_back({K, b, 0.0, 0.0, {}});
  }
  parallel_for(g.cells.size(), jobs, [&](std::size_t i) {
    GridCell& c = g.cells[i];
    c.log = run(cell_config(cfg, c.K, c.beta));
    const eval::MetricsRecord* v = last_valid(c.log);
    if (v == nullptr) throw DataError("grid_search: cell has no validation records");
    c.valid_accuracy = v->accuracy;
    c.valid_ce = v->ce;
  });
  g.best = select_best(g.cells);
  return g;
}

inline GridResult grid_search(const TrainConfig& cfg, const TrainData& data, unsigned jobs = 1) {
  return grid_search(cfg, [&](const TrainConfig& c) { return train(c, data).log; }, jobs);
}

struct BetaRow {
  double beta = 0.0;
  double train_ce = 0.0;
  double valid_ce = 0.0;
};

/// One vib run per beta at fixed K; final-epoch train and validation CE.
inline std::vector<BetaRow> beta_sweep(const TrainConfig& cfg, const std::vector<double>& betas,
                                       std::size_t K, const CellRunner& run, unsigned jobs = 1) {
  std::vector<BetaRow> rows(betas.size());
  parallel_for(betas.size(), jobs, [&](std::size_t i) {
    const auto log = run(cell_config(cfg, K, betas[i]));
    const eval::MetricsRecord* t = last_train(log);
    const eval::MetricsRecord* v = last_valid(log);
    if (t == nullptr || v == nullptr) throw DataError("beta_sweep: run has no train/valid records");
    rows[i] = {betas[i], t->ce, v->ce};
  });
  return rows;
}

inline std::vector<BetaRow> beta_sweep(const TrainConfig& cfg, const std::vector<double>& betas,
                                       std::size_t K, const TrainData& data, unsigned jobs = 1) {
  return beta_sweep(cfg, betas, K, [&](const TrainConfig& c) { return train(c, data).log; }, jobs);
}

}  // namespace vib::training
