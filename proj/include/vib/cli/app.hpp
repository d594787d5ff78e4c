#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vib/core/errors.hpp"
#include "vib/core/rng.hpp"
#include "vib/datasets/synthetic.hpp"
#include "vib/dsp/cache.hpp"
#include "vib/dsp/features.hpp"
#include "vib/dsp/wav.hpp"
#include "vib/eval/manifest.hpp"
#include "vib/eval/metrics_log.hpp"
#include "vib/eval/report.hpp"
#include "vib/model/checkpoint.hpp"
#include "vib/training/config.hpp"
#include "vib/training/parallel.hpp"
#include "vib/training/subsample.hpp"
#include "vib/training/sweep.hpp"
#include "vib/training/trainer.hpp"

namespace vib::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

inline constexpr const char* kRunsEnv = "VIB_RUNS_DIR";

inline fs::path default_runs_dir() {
  const char* env = std::getenv(kRunsEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

inline std::string hex(std::uint64_t v, int digits = 16) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf + 16 - digits);
}

/// <out>/<wav stem>-<8 hex of the manifest path>.vibf
inline fs::path cache_path(const fs::path& dir, const std::string& wav) {
  return dir / (fs::path(wav).stem().string() + "-" + hex(fnv1a64(wav), 8) + ".vibf");
}

/// Clip length for a dataset id; "custom" needs an explicit value.
inline double clip_seconds(const std::string& dataset, double given) {
  if (given > 0.0) return given;
  if (dataset == "custom") throw UsageError("--dataset custom requires --seconds");
  return dsp::dataset_seconds(dataset);
}

// ---------------------------------------------------------------- featurize

struct FeaturizeSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // path, message
};

inline bool cache_is_valid(const fs::path& p, std::size_t frames) {
  if (!fs::exists(p)) return false;
  try {
    const auto fm = io::read_cache(p);
    return fm.bands == dsp::kMelBands && fm.frames == frames;
  } catch (const Error&) {
    return false;
  }
}

inline FeaturizeSummary featurize(const eval::Manifest& m, const fs::path& out,
                                  const std::string& dataset, double seconds, unsigned jobs) {
  fs::create_directories(out);
  const std::size_t frames = dsp::frames_for_seconds(seconds);
  enum class Status { written, skipped, failed };
  std::vector<Status> status(m.rows.size());
  std::vector<std::string> message(m.rows.size());
  training::parallel_for(m.rows.size(), jobs, [&](std::size_t i) {
    const auto& row = m.rows[i];
    const fs::path dst = cache_path(out, row.path);
    if (cache_is_valid(dst, frames)) {
      status[i] = Status::skipped;
      return;
    }
    try {
      io::write_cache(dsp::featurize_clip(dsp::load_wav(row.path), seconds, dataset), dst);
      status[i] = Status::written;
    } catch (const std::exception& e) {
      status[i] = Status::failed;
      message[i] = e.what();
    }
  });
  FeaturizeSummary s;
  for (std::size_t i = 0; i < status.size(); ++i) {
    if (status[i] == Status::written) ++s.written;
    if (status[i] == Status::skipped) ++s.skipped;
    if (status[i] == Status::failed) s.failures.emplace_back(m.rows[i].path, message[i]);
  }
  return s;
}

// --------------------------------------------------------------- run specs

// Everything that determines a training run. config.json holds exactly this.
struct RunSpec {
  training::Method method = training::Method::cnn;
  std::string dataset = "custom";
  std::string manifest;
  std::string features;
  int pct = 100;
  std::uint64_t seed = 0;
  int epochs = 40;
  std::size_t K = 20;
  double beta = 5e-3;
  double lr0 = 0.001;
  double decay = 0.98;
  std::size_t batch_size = 8;
  double dropout_p = 0.2;
  double weight_decay = 1e-4;
  std::string manifest_digest;

  bool vib() const { return method == training::Method::vib; }
};

// Hashed fields: paths are left out so the id depends on content only.
inline json identity_json(const RunSpec& s) {
  json j;
  j["method"] = training::method_name(s.method);
  j["dataset"] = s.dataset;
  j["pct"] = s.pct;
  j["seed"] = s.seed;
  j["epochs"] = s.epochs;
  j["K"] = s.vib() ? json(s.K) : json(nullptr);
  j["beta"] = s.vib() ? json(s.beta) : json(nullptr);
  j["lr0"] = s.lr0;
  j["decay"] = s.decay;
  j["batch_size"] = s.batch_size;
  j["dropout_p"] = s.dropout_p;
  j["weight_decay"] = s.weight_decay;
  j["manifest_digest"] = s.manifest_digest;
  return j;
}

inline std::string run_id(const RunSpec& s) { return hex(fnv1a64(identity_json(s).dump()), 12); }

inline json to_json(const RunSpec& s) {
  json j = identity_json(s);
  j["manifest"] = s.manifest;
  j["features"] = s.features;
  j["run_id"] = run_id(s);
  return j;
}

inline RunSpec spec_from_json(const json& j) {
  try {
    RunSpec s;
    s.method = training::parse_method(j.at("method").get<std::string>());
    s.dataset = j.at("dataset").get<std::string>();
    s.manifest = j.at("manifest").get<std::string>();
    s.features = j.at("features").get<std::string>();
    s.pct = j.at("pct").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.epochs = j.at("epochs").get<int>();
    if (s.vib()) {
      s.K = j.at("K").get<std::size_t>();
      s.beta = j.at("beta").get<double>();
    }
    s.lr0 = j.at("lr0").get<double>();
    s.decay = j.at("decay").get<double>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.dropout_p = j.at("dropout_p").get<double>();
    s.weight_decay = j.at("weight_decay").get<double>();
    s.manifest_digest = j.at("manifest_digest").get<std::string>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
}

inline RunSpec read_spec(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw UsageError(path.string() + ": not found");
  try {
    return spec_from_json(json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline training::TrainConfig train_config(const RunSpec& s) {
  training::TrainConfig c;
  c.method = s.method;
  c.dataset = s.dataset;
  c.subsample_pct = s.pct;
  c.seed = s.seed;
  c.epochs = s.epochs;
  c.K = s.K;
  c.beta = s.beta;
  c.lr0 = s.lr0;
  c.decay = s.decay;
  c.batch_size = s.batch_size;
  c.dropout_p = s.dropout_p;
  c.weight_decay = s.weight_decay;
  c.run_id = run_id(s);
  return c;
}

// -------------------------------------------------------------- data loading

inline eval::Manifest load_manifest(const std::string& path, const std::string& dataset) {
  return eval::read_manifest(path, dataset);
}

inline std::vector<training::Example> load_examples(const eval::Manifest& m, eval::Split split,
                                                    const fs::path& features) {
  std::vector<training::Example> out;
  std::vector<std::string> missing;
  for (const auto& r : m.rows) {
    if (r.split != split) continue;
    const fs::path p = cache_path(features, r.path);
    if (!fs::exists(p)) {
      missing.push_back(r.path);
      continue;
    }
    out.push_back({model::to_input<float>(io::read_cache(p)), r.label});
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " feature caches missing under " +
                      features.string() + " (run featurize first):";
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i) msg += " " + missing[i];
    throw DataError(msg);
  }
  return out;
}

/// Train (subsampled) and validation examples for a run.
inline training::TrainData load_train_data(const RunSpec& s, const eval::Manifest& m) {
  const eval::Manifest sub = training::subsample(m, s.pct, s.seed);
  training::TrainData d;
  d.classes = m.class_count;
  d.train = load_examples(sub, eval::Split::train, s.features);
  d.valid = load_examples(sub, eval::Split::valid, s.features);
  if (d.train.empty()) throw DataError("manifest has no training rows");
  return d;
}

// ------------------------------------------------------------------ running

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline void note(const std::string& line) {
  std::lock_guard lock(log_mutex());
  std::cerr << line << '\n';
}

/// Trains the run described by `s` under `runs/<run_id>`, or reuses it when
/// its checkpoint already exists. Returns the run's metrics log.
inline std::vector<eval::MetricsRecord> run_or_resume(const RunSpec& s,
                                                      const training::TrainData& data,
                                                      const fs::path& runs, bool quiet) {
  const std::string id = run_id(s);
  const fs::path dir = runs / id;
  const fs::path metrics = dir / "metrics.jsonl";
  if (fs::exists(dir / "checkpoint") && fs::exists(metrics)) {
    if (!quiet) note(id + ": complete, skipped");
    return eval::read_metrics_log(metrics);
  }
  fs::create_directories(dir);
  eval::write_text(dir / "config.json", to_json(s).dump(2) + "\n");
  fs::remove(metrics);
  auto sink = [&](const eval::MetricsRecord& r) {
    eval::append_records(metrics, {r});
    if (!quiet) {
      std::ostringstream os;
      os << id << " epoch " << r.epoch << " " << r.split << " ce=" << r.ce << " acc=" << r.accuracy;
      note(os.str());
    }
  };
  training::TrainResult res = training::train(train_config(s), data, sink);
  model::save_checkpoint(res.model, dir / "checkpoint");
  return res.log;
}

// --------------------------------------------------------------------- app

struct TrainFlags {
  std::string method = "cnn";
  std::string dataset = "custom";
  std::string manifest;
  std::string features;
  int pct = 100;
  std::uint64_t seed = 0;
  int epochs = 0;  // 0: dataset default
  std::size_t K = 20;
  double beta = 5e-3;
  std::size_t batch_size = 8;
  double lr0 = 0.001;
  std::string runs;
  std::string config;
  bool quiet = false;
  CLI::Option* k_opt = nullptr;
  CLI::Option* beta_opt = nullptr;
};

inline void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_method) {
  if (with_method) cmd->add_option("--method", f.method, "cnn, dropout, weight-decay or vib");
  cmd->add_option("--dataset", f.dataset, "audio-mnist, esc50, tess, tut or custom");
  cmd->add_option("--manifest", f.manifest, "manifest CSV");
  cmd->add_option("--features", f.features, "feature cache directory");
  cmd->add_option("--pct", f.pct, "training subsample percentage (5, 10, 30, 50, 100)");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--epochs", f.epochs, "epoch budget (default 20 for tut, else 40)");
  f.k_opt = cmd->add_option("--k", f.K, "bottleneck size");
  f.beta_opt = cmd->add_option("--beta", f.beta, "KL weight");
  cmd->add_option("--batch-size", f.batch_size, "mini-batch size");
  cmd->add_option("--lr", f.lr0, "initial learning rate");
  cmd->add_option("--runs", f.runs, std::string("run root (default $") + kRunsEnv + " or ./runs)");
  cmd->add_flag("--quiet", f.quiet, "no per-epoch progress");
}

inline RunSpec spec_from_flags(const TrainFlags& f) {
  if (f.manifest.empty()) throw UsageError("--manifest is required");
  if (f.features.empty()) throw UsageError("--features is required");
  if (!training::is_allowed_pct(f.pct)) {
    throw UsageError("--pct " + std::to_string(f.pct) + " not in {5, 10, 30, 50, 100}");
  }
  RunSpec s;
  s.method = training::parse_method(f.method);
  if (f.dataset != "custom") dsp::dataset_seconds(f.dataset);  // validates the id
  s.dataset = f.dataset;
  s.manifest = fs::absolute(f.manifest).lexically_normal().string();
  s.features = fs::absolute(f.features).lexically_normal().string();
  s.pct = f.pct;
  s.seed = f.seed;
  s.epochs = f.epochs > 0 ? f.epochs : training::default_epochs(f.dataset);
  s.K = f.K;
  s.beta = f.beta;
  s.batch_size = f.batch_size;
  s.lr0 = f.lr0;
  if (s.batch_size == 0) throw UsageError("--batch-size must be positive");
  if (s.K == 0) throw UsageError("--k must be positive");
  if (!(s.beta >= 0.0)) throw UsageError("--beta must be non-negative");
  return s;
}

inline int cmd_manifest(const fs::path& root, const std::string& dataset, std::uint64_t seed,
                        const fs::path& out) {
  const eval::Manifest m = eval::build_manifest(root, dataset, seed);
  eval::write_manifest(m, out);
  std::cout << "wrote " << out.string() << ": " << m.count(eval::Split::train) << " train, "
            << m.count(eval::Split::valid) << " valid, " << m.count(eval::Split::test)
            << " test\n";
  return kOk;
}

inline int cmd_synth(const fs::path& out, std::uint64_t seed, std::size_t train, std::size_t valid,
                     std::size_t test) {
  const datasets::ToneSpec spec;
  const eval::Manifest m = datasets::write_tone_corpus(spec, seed, out / "audio", train, valid, test);
  eval::write_manifest(m, out / "manifest.csv");
  std::cout << "wrote " << m.rows.size() << " clips and " << (out / "manifest.csv").string()
            << " (" << spec.classes() << " classes, " << eval::fmt(spec.seconds)
            << " s; featurize with --dataset custom --seconds " << eval::fmt(spec.seconds) << ")\n";
  return kOk;
}

inline int cmd_featurize(const std::string& manifest, const fs::path& out, const std::string& dataset,
                         double seconds_flag, unsigned jobs) {
  const double seconds = clip_seconds(dataset, seconds_flag);
  if (dataset != "custom" && seconds_flag > 0.0 && seconds_flag != dsp::dataset_seconds(dataset)) {
    throw UsageError("--seconds conflicts with the clip length of --dataset " + dataset);
  }
  const eval::Manifest m = load_manifest(manifest, dataset);
  const FeaturizeSummary s = featurize(m, out, dataset, seconds, jobs == 0 ? 1 : jobs);
  std::cout << "featurized " << s.written << ", skipped " << s.skipped << ", failed "
            << s.failures.size() << " (" << dsp::frames_for_seconds(seconds) << " frames per clip)\n";
  if (s.failures.empty()) return kOk;
  std::cerr << "error: data: " << s.failures.size() << " file(s) failed:\n";
  for (const auto& [path, msg] : s.failures) std::cerr << "  " << path << ": " << msg << '\n';
  return kData;
}

inline int cmd_train(const TrainFlags& f) {
  RunSpec s;
  if (!f.config.empty()) {
    s = read_spec(f.config);
  } else {
    s = spec_from_flags(f);
    if (!s.vib() && (f.k_opt->count() > 0 || f.beta_opt->count() > 0)) {
      throw UsageError("--k and --beta apply only to --method vib");
    }
    if (s.vib() && (f.k_opt->count() == 0 || f.beta_opt->count() == 0)) {
      throw UsageError("--method vib needs --k and --beta (or use sweep --grid)");
    }
  }
  const eval::Manifest m = load_manifest(s.manifest, s.dataset);
  const std::string digest = hex(eval::manifest_digest(m));
  if (!s.manifest_digest.empty() && s.manifest_digest != digest) {
    throw DataError(s.manifest + ": manifest changed since the config was written");
  }
  s.manifest_digest = digest;
  const training::TrainData data = load_train_data(s, m);
  const fs::path runs = f.runs.empty() ? default_runs_dir() : fs::path(f.runs);
  const auto log = run_or_resume(s, data, runs, f.quiet);
  const eval::MetricsRecord* v = training::last_valid(log);
  json out;
  out["run_id"] = run_id(s);
  out["dir"] = (runs / run_id(s)).string();
  if (v != nullptr) {
    out["valid_accuracy"] = v->accuracy;
    out["valid_ce"] = v->ce;
  }
  std::cout << out.dump() << '\n';
  return kOk;
}

struct SweepFlags {
  bool grid = false;
  bool beta_sweep = false;
  std::vector<std::size_t> grid_K{20, 50, 100, 200};
  std::vector<double> grid_beta{2e-3, 5e-3, 2e-2, 5e-2};
  std::vector<double> betas{0.0, 5e-3, 5e-2, 1.0, 10.0};
  std::string out;
  unsigned jobs = 1;
};

inline int cmd_sweep(const TrainFlags& f, const SweepFlags& sw) {
  if (sw.grid == sw.beta_sweep) throw UsageError("give exactly one of --grid or --beta-sweep");
  if (sw.grid && f.k_opt->count() + f.beta_opt->count() > 0) {
    throw UsageError("--grid takes --grid-k/--grid-beta, not --k/--beta");
  }
  if (sw.beta_sweep && f.beta_opt->count() > 0) throw UsageError("--beta-sweep takes --betas, not --beta");
  TrainFlags vf = f;
  vf.method = "vib";
  RunSpec base = spec_from_flags(vf);
  const eval::Manifest m = load_manifest(base.manifest, base.dataset);
  base.manifest_digest = hex(eval::manifest_digest(m));
  const training::TrainData data = load_train_data(base, m);
  const fs::path runs = f.runs.empty() ? default_runs_dir() : fs::path(f.runs);
  const unsigned jobs = sw.jobs == 0 ? 1 : sw.jobs;
  auto runner = [&](const training::TrainConfig& c) {
    RunSpec s = base;
    s.K = c.K;
    s.beta = c.beta;
    return run_or_resume(s, data, runs, f.quiet);
  };
  const std::string tag = base.dataset + "_" + std::to_string(base.pct) + "_" + std::to_string(base.seed);
  training::TrainConfig cfg = train_config(base);

  if (sw.grid) {
    cfg.grid_K = sw.grid_K;
    cfg.grid_beta = sw.grid_beta;
    const training::GridResult g = training::grid_search(cfg, runner, jobs);
    json summary;
    summary["cells"] = json::array();
    for (const auto& c : g.cells) {
      RunSpec s = base;
      s.K = c.K;
      s.beta = c.beta;
      summary["cells"].push_back({{"run_id", run_id(s)}, {"K", c.K}, {"beta", c.beta},
                                  {"valid_accuracy", c.valid_accuracy}, {"valid_ce", c.valid_ce}});
    }
    summary["best"] = summary["cells"][g.best];
    const fs::path out = runs / ("grid_" + tag + ".json");
    fs::create_directories(runs);
    eval::write_text(out, summary.dump(2) + "\n");
    std::cout << "best: " << summary["best"].dump() << "\nsummary: " << out.string() << '\n';
    return kOk;
  }

  const auto rows = training::beta_sweep(cfg, sw.betas, base.K, runner, jobs);
  std::vector<eval::BetaPoint> pts;
  for (const auto& r : rows) pts.push_back({r.beta, r.train_ce, r.valid_ce});
  const fs::path out = sw.out.empty() ? runs : fs::path(sw.out);
  fs::create_directories(out);
  eval::emit_beta_curves(pts, out, "beta_sweep_" + tag);
  std::cout << eval::beta_csv(pts) << "wrote " << (out / ("beta_sweep_" + tag + ".csv")).string()
            << '\n';
  return kOk;
}

inline int cmd_evaluate(const fs::path& run, const std::string& split_name, unsigned jobs) {
  const eval::Split split = eval::parse_split(split_name);
  const RunSpec s = read_spec(run / "config.json");
  const auto net_path = run / "checkpoint";
  if (!fs::exists(net_path)) throw UsageError(net_path.string() + ": checkpoint not found");
  model::VibModel<float> net = model::load_checkpoint<float>(net_path);
  const eval::Manifest m = load_manifest(s.manifest, s.dataset);
  if (hex(eval::manifest_digest(m)) != s.manifest_digest) {
    throw DataError(s.manifest + ": manifest changed since training");
  }
  const eval::Manifest rows = split == eval::Split::train ? training::subsample(m, s.pct, s.seed) : m;
  const auto examples = load_examples(rows, split, s.features);
  if (examples.empty()) throw DataError("no " + split_name + " rows in " + s.manifest);
  if (net.classes() != m.class_count) throw DataError("checkpoint class count differs from manifest");
  const training::EvalResult r = training::evaluate(net, examples, 0.0, jobs == 0 ? 1 : jobs);

  eval::MetricsRecord rec;
  rec.run_id = run_id(s);
  rec.dataset = s.dataset;
  rec.method = training::method_name(s.method);
  rec.K = s.vib() ? s.K : 0;
  rec.beta = s.vib() ? s.beta : 0.0;
  rec.subsample_pct = s.pct;
  rec.seed = s.seed;
  rec.epoch = s.epochs;
  rec.split = split_name;
  rec.ce = r.ce;
  rec.kl = r.kl;
  rec.total_loss = r.total;
  rec.accuracy = r.accuracy;
  rec.f1 = r.f1;
  eval::append_records(run / "metrics.jsonl", {rec});
  json out;
  out["run_id"] = rec.run_id;
  out["split"] = split_name;
  out["accuracy"] = r.accuracy;
  out["f1"] = r.f1;
  out["ce"] = r.ce;
  std::cout << out.dump() << '\n';
  return kOk;
}

inline int cmd_report(const fs::path& runs, const fs::path& out) {
  if (!fs::is_directory(runs)) throw UsageError(runs.string() + ": not a directory");
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(runs)) {
    if (e.is_directory() && fs::exists(e.path() / "metrics.jsonl")) logs.push_back(e.path() / "metrics.jsonl");
  }
  if (logs.empty()) throw UsageError(runs.string() + ": no runs with metrics.jsonl");
  std::sort(logs.begin(), logs.end());
  std::vector<eval::MetricsRecord> all;
  fs::create_directories(out / "curves");
  for (const auto& p : logs) {
    auto log = eval::read_metrics_log(p);
    eval::emit_curves(log, out / "curves", p.parent_path().filename().string());
    all.insert(all.end(), log.begin(), log.end());
  }
  const eval::ResultsTable t = eval::report_table(all);
  eval::write_text(out / "results.csv", eval::table_csv(t));
  std::cout << "runs " << logs.size() << ", table cells filled " << t.filled() << ", wrote "
            << (out / "results.csv").string() << " and " << (out / "curves").string() << '\n';
  return kOk;
}

inline int report_error(const char* kind, const std::exception& e, int code) {
  std::cerr << "error: " << kind << ": " << e.what() << '\n';
  return code;
}

inline int run(int argc, char** argv) {
  CLI::App app{"VIB audio classifier: featurize, train, sweep, evaluate, report"};
  app.require_subcommand(1);

  std::string m_root, m_dataset, m_out;
  std::uint64_t m_seed = 42;
  auto* man = app.add_subcommand("manifest", "scan a dataset and write a split manifest");
  man->add_option("--root", m_root, "dataset root")->required();
  man->add_option("--dataset", m_dataset, "audio-mnist, esc50, tess or tut")->required();
  man->add_option("--seed", m_seed, "split seed (42 is canonical)");
  man->add_option("--out", m_out, "manifest CSV to write")->required();

  std::string s_out;
  std::uint64_t s_seed = 0;
  std::size_t s_train = 10, s_valid = 40, s_test = 10;
  auto* syn = app.add_subcommand("synth", "write the tone-in-noise toy corpus and its manifest");
  syn->add_option("--out", s_out, "output directory")->required();
  syn->add_option("--seed", s_seed, "corpus seed");
  syn->add_option("--train", s_train, "training clips per class");
  syn->add_option("--valid", s_valid, "validation clips per class");
  syn->add_option("--test", s_test, "test clips per class");

  std::string f_manifest, f_out, f_dataset;
  double f_seconds = 0.0;
  unsigned f_jobs = 1;
  auto* feat = app.add_subcommand("featurize", "compute log-mel caches for every manifest row");
  feat->add_option("--manifest", f_manifest, "manifest CSV")->required();
  feat->add_option("--out", f_out, "cache directory")->required();
  feat->add_option("--dataset", f_dataset, "audio-mnist, esc50, tess, tut or custom")->required();
  feat->add_option("--seconds", f_seconds, "clip length (required for custom)");
  feat->add_option("--jobs", f_jobs, "worker threads");

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "train one model");
  add_train_flags(tr, tf, true);
  tr->add_option("--config", tf.config, "replay a run's config.json (other flags ignored)");

  TrainFlags sf;
  SweepFlags sw;
  auto* swc = app.add_subcommand("sweep", "vib grid search or beta sweep");
  add_train_flags(swc, sf, false);
  swc->add_flag("--grid", sw.grid, "K x beta grid, picks the best validation accuracy");
  swc->add_flag("--beta-sweep", sw.beta_sweep, "one run per --betas value at fixed --k");
  swc->add_option("--grid-k", sw.grid_K, "grid K values");
  swc->add_option("--grid-beta", sw.grid_beta, "grid beta values");
  swc->add_option("--betas", sw.betas, "beta-sweep values");
  swc->add_option("--out", sw.out, "beta-sweep CSV/SVG directory (default: run root)");
  swc->add_option("--jobs", sw.jobs, "cells trained in parallel");

  std::string e_run, e_split = "test";
  unsigned e_jobs = 1;
  auto* ev = app.add_subcommand("evaluate", "evaluate a trained run on a split");
  ev->add_option("--run", e_run, "run directory")->required();
  ev->add_option("--split", e_split, "train, valid or test");
  ev->add_option("--jobs", e_jobs, "worker threads");

  std::string r_runs, r_out = "reports";
  auto* rep = app.add_subcommand("report", "results table and curves from run logs");
  rep->add_option("--runs", r_runs, "run root");
  rep->add_option("--out", r_out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*man) return cmd_manifest(m_root, m_dataset, m_seed, m_out);
    if (*syn) return cmd_synth(s_out, s_seed, s_train, s_valid, s_test);
    if (*feat) return cmd_featurize(f_manifest, f_out, f_dataset, f_seconds, f_jobs);
    if (*tr) return cmd_train(tf);
    if (*swc) return cmd_sweep(sf, sw);
    if (*ev) return cmd_evaluate(e_run, e_split, e_jobs);
    if (*rep) return cmd_report(r_runs.empty() ? default_runs_dir() : fs::path(r_runs), r_out);
  } catch (const UsageError& e) {
    return report_error("usage", e, kUsage);
  } catch (const NumericError& e) {
    return report_error("numeric", e, kNumeric);
  } catch (const FormatError& e) {
    return report_error("format", e, kData);
  } catch (const IngestionError& e) {
    return report_error("ingestion", e, kData);
  } catch (const DataError& e) {
    return report_error("data", e, kData);
  } catch (const DimensionError& e) {
    return report_error("dimension", e, kData);
  } catch (const InputError& e) {
    return report_error("input", e, kUsage);
  } catch (const std::exception& e) {
    return report_error("internal", e, kFailure);
  }
  return kUsage;
}

}  // namespace vib::cli
