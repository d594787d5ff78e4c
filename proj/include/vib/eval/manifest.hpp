#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vib/core/errors.hpp"
#include "vib/core/rng.hpp"

namespace vib::eval {

enum class Split { train, valid, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw InputError("unknown split '" + s + "' (expected train, valid or test)");
}

struct ManifestRow {
  std::string path;
  std::size_t label = 0;
  Split split = Split::train;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Manifest {
  std::string dataset_id;
  std::size_t class_count = 0;
  double clip_seconds = 0.0;
  std::vector<ManifestRow> rows;

  std::vector<ManifestRow> rows_in(Split s) const {
    std::vector<ManifestRow> out;
    for (const auto& r : rows) {
      if (r.split == s) out.push_back(r);
    }
    return out;
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](const auto& r) { return r.split == s; }));
  }

  /// Labels in range; no path in two splits.
  void validate() const {
    std::map<std::string, Split> seen;
    for (const auto& r : rows) {
      if (r.label >= class_count) {
        throw DataError("manifest: label " + std::to_string(r.label) + " of '" + r.path +
                        "' outside [0, " + std::to_string(class_count) + ")");
      }
      auto [it, fresh] = seen.emplace(r.path, r.split);
      if (!fresh && it->second != r.split) {
        throw DataError("manifest: '" + r.path + "' appears in both " +
                        split_name(it->second) + " and " + split_name(r.split));
      }
    }
  }
};

struct DatasetInfo {
  std::string id;
  std::size_t total;  // 0: accept any count
  std::size_t classes;
  std::size_t train, valid, test;
  double seconds;
};

/// Split sizes per dataset. TUT's published train/valid/test triple sums to
/// 5680 while the corpus has 4680 files, so TUT is split by ratio over
/// whatever files are present.
inline const DatasetInfo& dataset_info(const std::string& id) {
  static const std::vector<DatasetInfo> table = {
      {"audio-mnist", 3000, 10, 1800, 600, 600, 4.0},
      {"esc50", 2000, 50, 1600, 200, 200, 5.0},
      {"tess", 2800, 7, 1680, 560, 560, 2.0},
      {"tut", 0, 15, 3808, 936, 936, 10.0},
  };
  for (const auto& d : table) {
    if (d.id == id) return d;
  }
  throw InputError("unknown dataset '" + id + "' (expected audio-mnist, esc50, tess or tut)");
}

inline std::string to_csv(const Manifest& m) {
  std::ostringstream os;
  os << "path,label,split\n";
  for (const auto& r : m.rows) {
    if (r.path.find_first_of(",\n\"") != std::string::npos) {
      throw DataError("manifest: path '" + r.path + "' contains a CSV delimiter");
    }
    os << r.path << ',' << r.label << ',' << split_name(r.split) << '\n';
  }
  return os.str();
}

inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError(path.string() + ": cannot write manifest");
  os << to_csv(m);
}

inline std::uint64_t manifest_digest(const Manifest& m) { return fnv1a64(to_csv(m)); }

/// Parses a manifest CSV. The class count is taken from the dataset table
/// when `dataset_id` is known, else from the largest label.
inline Manifest read_manifest(const std::filesystem::path& path,
                              const std::string& dataset_id = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(path.string() + ": cannot open manifest");
  Manifest m;
  m.dataset_id = dataset_id;
  std::string line;
  std::size_t lineno = 0;
  std::size_t max_label = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "path,label,split") {
        throw FormatError(path.string() + ": line 1: expected header 'path,label,split'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos ? c2 : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c1 == 0) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        ": expected path,label,split");
    }
    ManifestRow r;
    r.path = line.substr(0, c1);
    try {
      std::size_t used = 0;
      const std::string lab = line.substr(c1 + 1, c2 - c1 - 1);
      r.label = std::stoul(lab, &used);
      if (used != lab.size()) throw std::invalid_argument(lab);
      r.split = parse_split(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) +
                        ": bad label or split");
    }
    max_label = std::max(max_label, r.label);
    m.rows.push_back(std::move(r));
  }
  if (lineno == 0) throw FormatError(path.string() + ": empty manifest");
  if (!dataset_id.empty() && dataset_id != "custom") {
    const auto& info = dataset_info(dataset_id);
    m.class_count = info.classes;
    m.clip_seconds = info.seconds;
  } else {
    m.class_count = m.rows.empty() ? 0 : max_label + 1;
  }
  m.validate();
  return m;
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::vector<std::string> split_tokens(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<std::filesystem::path> wav_files(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && lower(e.path().extension().string()) == ".wav") {
      out.push_back(std::filesystem::relative(e.path(), root));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::size_t parse_index(const std::string& tok, const std::filesystem::path& file) {
  try {
    std::size_t used = 0;
    const auto v = std::stoul(tok, &used);
    if (used == tok.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("cannot derive a label from file name '" + file.string() + "'");
}

}  // namespace detail

/// Scans a dataset in its published layout and assigns a seeded, per-class
/// stratified train/valid/test split at the dataset's split sizes.
inline Manifest build_manifest(const std::filesystem::path& root,
                               const std::string& dataset_id, std::uint64_t seed) {
  const DatasetInfo& info = dataset_info(dataset_id);
  if (!std::filesystem::is_directory(root)) {
    throw DataError(root.string() + ": dataset root is not a directory");
  }

  // (relative path, label)
  std::vector<std::pair<std::filesystem::path, std::size_t>> items;
  if (dataset_id == "tut") {
    const auto meta = root / "meta.txt";
    std::ifstream is(meta);
    if (!is) throw DataError(meta.string() + ": TUT layout requires meta.txt");
    std::vector<std::pair<std::string, std::string>> raw;
    std::set<std::string> names;
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto tok = detail::split_tokens(line, '\t');
      if (tok.size() < 2) throw DataError(meta.string() + ": malformed line '" + line + "'");
      raw.emplace_back(tok[0], tok[1]);
      names.insert(tok[1]);
    }
    std::vector<std::string> sorted(names.begin(), names.end());
    std::vector<std::string> missing;
    for (const auto& [rel, name] : raw) {
      if (!std::filesystem::exists(root / rel)) missing.push_back(rel);
      const auto idx = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), name) - sorted.begin());
      items.emplace_back(rel, idx);
    }
    if (!missing.empty()) {
      std::string msg = "tut: " + std::to_string(missing.size()) + " files listed in meta.txt are missing:";
      for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 10); ++i) msg += " " + missing[i];
      throw DataError(msg);
    }
    if (sorted.size() != info.classes) {
      throw DataError("tut: found " + std::to_string(sorted.size()) + " scene labels, expected " +
                      std::to_string(info.classes));
    }
  } else {
    static const std::vector<std::string> tess_classes = {
        "angry", "disgust", "fear", "happy", "neutral", "ps", "sad"};
    for (const auto& rel : detail::wav_files(root)) {
      const std::string stem = rel.stem().string();
      std::size_t label = 0;
      if (dataset_id == "audio-mnist") {
        label = detail::parse_index(detail::split_tokens(stem, '_').front(), rel);
      } else if (dataset_id == "esc50") {
        label = detail::parse_index(detail::split_tokens(stem, '-').back(), rel);
      } else {  // tess
        const std::string emo = detail::lower(detail::split_tokens(stem, '_').back());
        auto it = std::find(tess_classes.begin(), tess_classes.end(), emo);
        if (it == tess_classes.end()) {
          throw DataError("tess: unknown emotion '" + emo + "' in '" + rel.string() + "'");
        }
        label = static_cast<std::size_t>(it - tess_classes.begin());
      }
      if (label >= info.classes) {
        throw DataError(dataset_id + ": label " + std::to_string(label) + " of '" +
                        rel.string() + "' out of range");
      }
      items.emplace_back(rel, label);
    }
  }

  if (items.empty()) throw DataError(root.string() + ": no audio files found");

  std::vector<std::vector<std::filesystem::path>> by_class(info.classes);
  for (const auto& [rel, label] : items) by_class[label].push_back(rel);

  if (info.total != 0) {
    std::vector<std::string> problems;
    if (items.size() != info.total) {
      problems.push_back("found " + std::to_string(items.size()) + " files, expected " +
                         std::to_string(info.total));
    }
    const std::size_t per_class = info.total / info.classes;
    for (std::size_t c = 0; c < info.classes; ++c) {
      if (by_class[c].size() != per_class) {
        problems.push_back("class " + std::to_string(c) + " has " +
                           std::to_string(by_class[c].size()) + " files, expected " +
                           std::to_string(per_class));
      }
    }
    if (!problems.empty()) {
      std::string msg = dataset_id + " layout mismatch:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw DataError(msg);
    }
  }

  const double denom = static_cast<double>(info.train + info.valid + info.test);
  const double fv = static_cast<double>(info.valid) / denom;
  const double ft = static_cast<double>(info.test) / denom;

  Manifest m;
  m.dataset_id = dataset_id;
  m.class_count = info.classes;
  m.clip_seconds = info.seconds;
  for (std::size_t c = 0; c < info.classes; ++c) {
    auto files = by_class[c];
    std::sort(files.begin(), files.end());
    Rng rng = make_rng(seed, "split", c);
    for (std::size_t i = files.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(files[i - 1], files[pick(rng)]);
    }
    const auto n = static_cast<double>(files.size());
    const auto nv = static_cast<std::size_t>(std::llround(n * fv));
    const auto nt = static_cast<std::size_t>(std::llround(n * ft));
    for (std::size_t i = 0; i < files.size(); ++i) {
      const Split s = i < nv ? Split::valid : (i < nv + nt ? Split::test : Split::train);
      m.rows.push_back({(root / files[i]).generic_string(), c, s});
    }
  }
  std::sort(m.rows.begin(), m.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.path < b.path; });
  m.validate();
  return m;
}

}  // namespace vib::eval
