#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/eval/metrics.hpp"

namespace vib::eval {

/// Shortest decimal form that parses back to the same double.
inline std::string fmt(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw FormatError("cannot format number");
  return std::string(buf.data(), end);
}

inline const std::vector<std::string>& report_methods() {
  static const std::vector<std::string> m = {"cnn", "dropout", "weight-decay", "vib"};
  return m;
}

inline const std::vector<int>& report_pcts() {
  static const std::vector<int> p = {5, 10, 30, 50, 100};
  return p;
}

struct TableCell {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::string run_id;
};

struct TableRow {
  std::string dataset;
  std::string method;
  std::array<std::optional<TableCell>, 5> cells;  // indexed like report_pcts()
};

struct ResultsTable {
  std::vector<TableRow> rows;
  std::size_t filled() const {
    std::size_t n = 0;
    for (const auto& r : rows) {
      for (const auto& c : r.cells) n += c.has_value();
    }
    return n;
  }
};

namespace detail {

struct RunSummary {
  std::string run_id, dataset, method;
  int pct = 100;
  std::size_t K = 0;
  double beta = 0.0;
  std::optional<MetricsRecord> valid;  // last epoch
  std::optional<MetricsRecord> test;   // last appended
};

inline std::vector<RunSummary> summarize(const std::vector<MetricsRecord>& records) {
  std::map<std::string, RunSummary> runs;
  for (const auto& r : records) {
    auto [it, fresh] = runs.try_emplace(r.run_id);
    RunSummary& s = it->second;
    if (fresh) {
      s.run_id = r.run_id;
      s.dataset = r.dataset;
      s.method = r.method;
      s.pct = r.subsample_pct;
      s.K = r.K;
      s.beta = r.beta;
    }
    if (r.split == "valid" && (!s.valid || r.epoch >= s.valid->epoch)) s.valid = r;
    if (r.split == "test") s.test = r;
  }
  std::vector<RunSummary> out;
  for (auto& [id, s] : runs) out.push_back(std::move(s));
  return out;
}

}  // namespace detail

/// Table of test accuracy and F1 per dataset x method x subsample percentage.
/// Within a cell the run with the best final validation accuracy is shown
/// (ties: smaller K, smaller beta, then run id). Only runs with a test
/// record are eligible.
inline ResultsTable report_table(const std::vector<MetricsRecord>& records) {
  const auto runs = detail::summarize(records);
  std::set<std::string> datasets;
  for (const auto& r : runs) datasets.insert(r.dataset);
  const auto& methods = report_methods();
  const auto& pcts = report_pcts();

  ResultsTable t;
  for (const auto& ds : datasets) {
    for (const auto& m : methods) {
      TableRow row{ds, m, {}};
      for (std::size_t p = 0; p < pcts.size(); ++p) {
        const detail::RunSummary* best = nullptr;
        for (const auto& r : runs) {
          if (r.dataset != ds || r.method != m || r.pct != pcts[p] || !r.test) continue;
          if (best == nullptr) {
            best = &r;
            continue;
          }
          const double a = r.valid ? r.valid->accuracy : -1.0;
          const double b = best->valid ? best->valid->accuracy : -1.0;
          if (std::tie(b, r.K, r.beta, r.run_id) < std::tie(a, best->K, best->beta, best->run_id)) {
            best = &r;
          }
        }
        if (best != nullptr) row.cells[p] = TableCell{best->test->accuracy, best->test->f1, best->run_id};
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

/// CSV with columns dataset, method, then <pct>_acc and <pct>_f1 per
/// percentage. Missing cells hold "NA".
inline std::string table_csv(const ResultsTable& t) {
  std::ostringstream os;
  os << "dataset,method";
  for (int p : report_pcts()) os << ',' << p << "_acc," << p << "_f1";
  os << '\n';
  for (const auto& r : t.rows) {
    os << r.dataset << ',' << r.method;
    for (const auto& c : r.cells) {
      if (c) os << ',' << fmt(c->accuracy) << ',' << fmt(c->f1);
      else os << ",NA,NA";
    }
    os << '\n';
  }
  return os.str();
}

struct Series {
  std::string name;
  std::vector<double> y;
};

/// Minimal line chart: axes with min/max tick labels, one polyline per
/// series and a legend. x positions are evenly spaced and labelled with
/// `x_labels`.
inline std::string line_chart_svg(const std::string& title, const std::string& x_title,
                                  const std::vector<std::string>& x_labels,
                                  const std::vector<Series>& series) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  const double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi == lo) hi = lo + 1.0;
  const std::size_t n = x_labels.size();
  auto px = [&](std::size_t i) {
    return n <= 1 ? L + (W - L - R) / 2 : L + (W - L - R) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto py = [&](double v) { return T + (H - T - B) * (hi - v) / (hi - lo); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << L - 5 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << fmt(hi) << "</text>\n";
  os << "<text x=\"" << L - 5 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << fmt(lo) << "</text>\n";
  const std::size_t step = std::max<std::size_t>(1, n / 10);
  for (std::size_t i = 0; i < n; i += step) {
    os << "<text x=\"" << px(i) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">"
       << x_labels[i] << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
     << x_title << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* c = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size() && i < n; ++i) {
      if (std::isfinite(series[s].y[i])) os << px(i) << ',' << py(series[s].y[i]) << ' ';
    }
    os << "\"/>\n";
    const double ly = T + 20.0 * static_cast<double>(s);
    os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << series[s].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct EpochCurves {
  std::vector<int> epoch;
  std::vector<double> train_loss, valid_loss, train_acc, valid_acc, train_ce, valid_ce;
};

/// Per-epoch curves of one run. Epochs lacking either split are dropped.
inline EpochCurves epoch_curves(const std::vector<MetricsRecord>& log) {
  std::map<int, const MetricsRecord*> tr, va;
  for (const auto& r : log) {
    if (r.split == "train") tr[r.epoch] = &r;
    else if (r.split == "valid") va[r.epoch] = &r;
  }
  EpochCurves c;
  for (const auto& [e, t] : tr) {
    auto it = va.find(e);
    if (it == va.end()) continue;
    const MetricsRecord* v = it->second;
    c.epoch.push_back(e);
    c.train_loss.push_back(t->total_loss);
    c.valid_loss.push_back(v->total_loss);
    c.train_acc.push_back(t->accuracy);
    c.valid_acc.push_back(v->accuracy);
    c.train_ce.push_back(t->ce);
    c.valid_ce.push_back(v->ce);
  }
  return c;
}

inline std::string curves_csv(const EpochCurves& c) {
  std::ostringstream os;
  os << "epoch,train_loss,valid_loss,train_acc,valid_acc,train_ce,valid_ce\n";
  for (std::size_t i = 0; i < c.epoch.size(); ++i) {
    os << c.epoch[i] << ',' << fmt(c.train_loss[i]) << ',' << fmt(c.valid_loss[i]) << ','
       << fmt(c.train_acc[i]) << ',' << fmt(c.valid_acc[i]) << ',' << fmt(c.train_ce[i]) << ','
       << fmt(c.valid_ce[i]) << '\n';
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

/// Writes <stem>.csv, <stem>_loss.svg and <stem>_acc.svg under `dir`.
/// Returns the number of CSV data rows.
inline std::size_t emit_curves(const std::vector<MetricsRecord>& log,
                               const std::filesystem::path& dir, const std::string& stem) {
  const EpochCurves c = epoch_curves(log);
  std::vector<std::string> xs;
  for (int e : c.epoch) xs.push_back(std::to_string(e));
  write_text(dir / (stem + ".csv"), curves_csv(c));
  write_text(dir / (stem + "_loss.svg"),
             line_chart_svg(stem + " loss", "epoch", xs,
                            {{"train", c.train_loss}, {"valid", c.valid_loss}}));
  write_text(dir / (stem + "_acc.svg"),
             line_chart_svg(stem + " accuracy", "epoch", xs,
                            {{"train", c.train_acc}, {"valid", c.valid_acc}}));
  return c.epoch.size();
}

struct BetaPoint {
  double beta = 0.0;
  double train_ce = 0.0;
  double valid_ce = 0.0;
};

inline std::string beta_csv(const std::vector<BetaPoint>& rows) {
  std::ostringstream os;
  os << "beta,train_ce,valid_ce\n";
  for (const auto& r : rows) os << fmt(r.beta) << ',' << fmt(r.train_ce) << ',' << fmt(r.valid_ce) << '\n';
  return os.str();
}

/// Writes <stem>.csv and <stem>.svg for a beta sweep.
inline std::size_t emit_beta_curves(const std::vector<BetaPoint>& rows,
                                    const std::filesystem::path& dir, const std::string& stem) {
  std::vector<std::string> xs;
  Series tr{"train CE", {}}, va{"valid CE", {}};
  for (const auto& r : rows) {
    xs.push_back(fmt(r.beta));
    tr.y.push_back(r.train_ce);
    va.y.push_back(r.valid_ce);
  }
  write_text(dir / (stem + ".csv"), beta_csv(rows));
  write_text(dir / (stem + ".svg"), line_chart_svg(stem, "beta", xs, {tr, va}));
  return rows.size();
}

}  // namespace vib::eval
