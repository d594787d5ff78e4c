#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vib/core/errors.hpp"
#include "vib/eval/metrics.hpp"

namespace vib::eval {

inline nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["run_id"] = r.run_id;
  j["dataset"] = r.dataset;
  j["method"] = r.method;
  if (r.method == "vib") {
    j["K"] = r.K;
    j["beta"] = r.beta;
  } else {
    j["K"] = nullptr;
    j["beta"] = nullptr;
  }
  j["subsample_pct"] = r.subsample_pct;
  j["seed"] = r.seed;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["ce"] = r.ce;
  j["kl"] = r.kl;
  j["total_loss"] = r.total_loss;
  j["accuracy"] = r.accuracy;
  j["f1"] = r.f1;
  return j;
}

inline std::string to_json_line(const MetricsRecord& r) { return to_json(r).dump(); }

inline MetricsRecord record_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.dataset = j.value("dataset", std::string{});
  r.method = j.at("method").get<std::string>();
  if (!j.at("K").is_null()) r.K = j.at("K").get<std::size_t>();
  if (!j.at("beta").is_null()) r.beta = j.at("beta").get<double>();
  r.subsample_pct = j.at("subsample_pct").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epoch = j.at("epoch").get<int>();
  r.split = j.at("split").get<std::string>();
  r.ce = j.at("ce").get<double>();
  r.kl = j.at("kl").get<double>();
  r.total_loss = j.at("total_loss").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.f1 = j.at("f1").get<double>();
  return r;
}

inline void append_records(const std::filesystem::path& path,
                           const std::vector<MetricsRecord>& records) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw FormatError(path.string() + ": cannot open metrics log");
  for (const auto& r : records) os << to_json_line(r) << '\n';
}

/// Parses a JSON-lines metrics log; blank lines are skipped.
inline std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(path.string() + ": cannot open metrics log");
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        ": malformed metrics record (" + e.what() + ")");
    }
  }
  return out;
}

}  // namespace vib::eval
