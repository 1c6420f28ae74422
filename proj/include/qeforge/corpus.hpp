#pragma once

// QE triplet and parallel corpora: loading, validation, seeded splitting,
// subsampling and concatenation. Datasets are plain vectors of immutable
// samples; every operation returns a new dataset.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "qeforge/error.hpp"
#include "qeforge/hash.hpp"
#include "qeforge/random.hpp"

namespace qeforge {

struct LangPair {
  std::string source;
  std::string target;

  std::string str() const { return source + "-" + target; }

  static LangPair parse(std::string_view text) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos || dash == 0 || dash + 1 == text.size())
      throw ValidationError("invalid language pair '" + std::string(text) + "' (expected xx-yy)");
    return {std::string(text.substr(0, dash)), std::string(text.substr(dash + 1))};
  }

  friend bool operator==(const LangPair&, const LangPair&) = default;
  friend auto operator<=>(const LangPair&, const LangPair&) = default;
};

enum class Domain { ID, OOD };
enum class Origin { authentic, synthetic };

inline std::string_view to_string(Domain d) { return d == Domain::ID ? "ID" : "OOD"; }
inline std::string_view to_string(Origin o) {
  return o == Origin::authentic ? "authentic" : "synthetic";
}

inline Domain parse_domain(std::string_view s) {
  if (s == "ID") return Domain::ID;
  if (s == "OOD") return Domain::OOD;
  throw ValidationError("unknown domain '" + std::string(s) + "' (expected ID or OOD)");
}

inline Origin parse_origin(std::string_view s) {
  if (s == "authentic") return Origin::authentic;
  if (s == "synthetic") return Origin::synthetic;
  throw ValidationError("unknown origin '" + std::string(s) + "'");
}

struct QESample {
  std::string src;
  std::string tgt;
  double label = 0.0;  // TER/HTER as a fraction, not a percentage
  LangPair lang_pair;
  Domain domain = Domain::ID;
  Origin origin = Origin::authentic;

  friend bool operator==(const QESample&, const QESample&) = default;
};

struct ParallelSample {
  std::string src;
  std::string ref;
  LangPair lang_pair;

  friend bool operator==(const ParallelSample&, const ParallelSample&) = default;
};

using QEDataset = std::vector<QESample>;
using ParallelDataset = std::vector<ParallelSample>;

/// Template literals that would make rendered model inputs ambiguous.
inline constexpr std::string_view kReservedLiterals[] = {"<s>", "</s>", "<ID>", "<OOD>"};

namespace detail {

inline std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

inline std::string at_line(std::size_t line) { return " at line " + std::to_string(line); }

inline void check_text(std::string_view text, std::string_view what, std::size_t line) {
  if (trim(text).empty()) throw ValidationError("empty " + std::string(what) + at_line(line));
  for (auto lit : kReservedLiterals) {
    if (text.find(lit) != std::string_view::npos)
      throw ValidationError("reserved literal '" + std::string(lit) + "' in " +
                            std::string(what) + at_line(line));
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

inline bool getline_stripped(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace detail

/// Shortest decimal string that parses back to the same double.
inline std::string format_label(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// How to interpret label magnitudes in a triplet file.
enum class LabelScale {
  auto_detect,  // any label > kPercentThreshold means the file is in percent
  fraction,
  percent,
};

inline constexpr double kPercentThreshold = 5.0;

struct LoadReport {
  bool rescaled_from_percent = false;
};

/// Parses src<TAB>tgt<TAB>label rows; extra fields are ignored.
inline QEDataset parse_qe_tsv(std::istream& in, const LangPair& lp, Domain domain, Origin origin,
                              LabelScale scale = LabelScale::auto_detect,
                              LoadReport* report = nullptr) {
  QEDataset out;
  std::string line;
  std::size_t lineno = 0;
  while (detail::getline_stripped(in, line)) {
    ++lineno;
    const auto fields = detail::split_tabs(line);
    if (fields.size() < 3)
      throw ValidationError("malformed row" + detail::at_line(lineno) + ": expected 3 fields, got " +
                            std::to_string(fields.size()));
    const auto label = detail::parse_double(fields[2]);
    if (!label) throw ValidationError("non-numeric label" + detail::at_line(lineno));
    if (*label < 0.0) throw ValidationError("negative label" + detail::at_line(lineno));
    detail::check_text(fields[0], "source", lineno);
    detail::check_text(fields[1], "target", lineno);
    out.push_back({std::string(fields[0]), std::string(fields[1]), *label, lp, domain, origin});
  }

  bool rescale = scale == LabelScale::percent;
  if (scale == LabelScale::auto_detect) {
    rescale = std::any_of(out.begin(), out.end(),
                          [](const QESample& s) { return s.label > kPercentThreshold; });
    if (rescale)
      std::clog << "notice: labels above " << kPercentThreshold
                << " found; treating file as percentages and dividing by 100\n";
  }
  if (rescale)
    for (auto& s : out) s.label /= 100.0;
  if (report) report->rescaled_from_percent = rescale;
  return out;
}

inline QEDataset load_qe_tsv(const std::filesystem::path& path, const LangPair& lp, Domain domain,
                             Origin origin, LabelScale scale = LabelScale::auto_detect,
                             LoadReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return parse_qe_tsv(in, lp, domain, origin, scale, report);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_qe_tsv(std::ostream& out, std::span<const QESample> data) {
  for (const auto& s : data) out << s.src << '\t' << s.tgt << '\t' << format_label(s.label) << '\n';
}

inline void write_qe_tsv(const std::filesystem::path& path, std::span<const QESample> data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_qe_tsv(out, data);
}

inline ParallelDataset parse_parallel(std::istream& src, std::istream& ref, const LangPair& lp) {
  std::vector<std::string> src_lines, ref_lines;
  std::string line;
  while (detail::getline_stripped(src, line)) src_lines.push_back(line);
  while (detail::getline_stripped(ref, line)) ref_lines.push_back(line);
  if (src_lines.size() != ref_lines.size())
    throw ValidationError("line count mismatch " + std::to_string(src_lines.size()) + " vs " +
                          std::to_string(ref_lines.size()));
  ParallelDataset out;
  out.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    detail::check_text(src_lines[i], "source", i + 1);
    detail::check_text(ref_lines[i], "reference", i + 1);
    out.push_back({std::move(src_lines[i]), std::move(ref_lines[i]), lp});
  }
  return out;
}

inline ParallelDataset load_parallel(const std::filesystem::path& src_path,
                                     const std::filesystem::path& ref_path, const LangPair& lp) {
  std::ifstream src(src_path, std::ios::binary), ref(ref_path, std::ios::binary);
  if (!src) throw ValidationError("cannot open " + src_path.string());
  if (!ref) throw ValidationError("cannot open " + ref_path.string());
  return parse_parallel(src, ref, lp);
}

struct SplitSpec {
  double train = 0.98;
  double dev = 0.01;
  double test = 0.01;
  std::uint64_t seed = 8;
  bool shuffle = true;

  void validate() const {
    for (double r : {train, dev, test})
      if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("split ratio outside [0,1]");
    if (std::abs(train + dev + test - 1.0) > 1e-9)
      throw ValidationError("split ratios must sum to 1");
  }
};

template <typename Sample>
struct DataSplit {
  std::vector<Sample> train, dev, test;
  // Positions in the input dataset, parallel to the parts above.
  std::vector<std::size_t> train_index, dev_index, test_index;
};

namespace detail {
// floor(n * r) with slack for ratios like 0.29 whose product lands just below an integer.
inline std::size_t floor_share(std::size_t n, double r) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9));
}
}  // namespace detail

/// Floor allocation: dev and test get floor(n * ratio); train gets the rest.
template <typename Sample>
DataSplit<Sample> split(std::span<const Sample> data, const SplitSpec& spec) {
  spec.validate();
  if (data.empty()) throw ValidationError("cannot split an empty dataset");
  const std::size_t n = data.size();
  const std::size_t n_dev = detail::floor_share(n, spec.dev);
  const std::size_t n_test = detail::floor_share(n, spec.test);
  if (n_dev + n_test > n) throw ValidationError("split ratios exceed dataset size");
  const std::size_t n_train = n - n_dev - n_test;
  if ((spec.dev > 0 && n_dev == 0) || (spec.test > 0 && n_test == 0) ||
      (spec.train > 0 && n_train == 0))
    throw ValidationError("dataset of " + std::to_string(n) +
                          " samples is too small for the requested split ratios");

  std::vector<std::size_t> order;
  if (spec.shuffle) {
    order = permutation(n, spec.seed);
  } else {
    order.resize(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
  }

  DataSplit<Sample> out;
  auto take = [&](std::size_t begin, std::size_t end, std::vector<Sample>& part,
                  std::vector<std::size_t>& index) {
    for (std::size_t k = begin; k < end; ++k) {
      index.push_back(order[k]);
      part.push_back(data[order[k]]);
    }
  };
  take(0, n_train, out.train, out.train_index);
  take(n_train, n_train + n_dev, out.dev, out.dev_index);
  take(n_train + n_dev, n, out.test, out.test_index);
  return out;
}

template <typename Sample>
DataSplit<Sample> split(const std::vector<Sample>& data, const SplitSpec& spec) {
  return split(std::span<const Sample>(data), spec);
}

/// Indices of n distinct samples chosen under seed, in ascending order.
inline std::vector<std::size_t> subsample_indices(std::size_t size, std::size_t n,
                                                  std::uint64_t seed) {
  if (n > size)
    throw ValidationError("cannot subsample " + std::to_string(n) + " of " +
                          std::to_string(size) + " samples");
  auto order = permutation(size, seed);
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

template <typename Sample>
std::vector<Sample> subsample(std::span<const Sample> data, std::size_t n, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(n);
  for (auto i : subsample_indices(data.size(), n, seed)) out.push_back(data[i]);
  return out;
}

template <typename Sample>
std::vector<Sample> subsample(const std::vector<Sample>& data, std::size_t n, std::uint64_t seed) {
  return subsample(std::span<const Sample>(data), n, seed);
}

template <typename Sample>
std::vector<Sample> concat(std::span<const std::vector<Sample>> parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<Sample> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

template <typename Sample>
std::vector<Sample> concat(const std::vector<std::vector<Sample>>& parts) {
  return concat(std::span<const std::vector<Sample>>(parts));
}

inline std::string fingerprint(std::span<const QESample> data) {
  Fingerprint fp;
  fp.u64(data.size());
  for (const auto& s : data) {
    fp.text(s.src).text(s.tgt).f64(s.label).text(s.lang_pair.str());
    fp.text(to_string(s.domain)).text(to_string(s.origin));
  }
  return fp.hex();
}

inline std::string fingerprint(std::span<const ParallelSample> data) {
  Fingerprint fp;
  fp.u64(data.size());
  for (const auto& s : data) fp.text(s.src).text(s.ref).text(s.lang_pair.str());
  return fp.hex();
}

/// Distinct language pairs in first-seen order.
inline std::vector<LangPair> lang_pairs(std::span<const QESample> data) {
  std::vector<LangPair> out;
  for (const auto& s : data)
    if (std::find(out.begin(), out.end(), s.lang_pair) == out.end()) out.push_back(s.lang_pair);
  return out;
}

struct DatasetManifest {
  std::vector<std::string> paths;
  std::vector<std::string> lang_pairs;
  std::string domain;  // "ID", "OOD" or "mixed"
  std::string origin;  // "authentic", "synthetic" or "mixed"
  std::size_t count = 0;
  std::string content_hash;
  nlohmann::json extra = nlohmann::json::object();

  static DatasetManifest describe(std::span<const QESample> data,
                                  std::vector<std::string> paths = {}) {
    DatasetManifest m;
    m.paths = std::move(paths);
    for (const auto& lp : qeforge::lang_pairs(data)) m.lang_pairs.push_back(lp.str());
    auto summarize = [&](auto get) -> std::string {
      if (data.empty()) return "";
      const auto first = get(data.front());
      for (const auto& s : data)
        if (get(s) != first) return "mixed";
      return std::string(first);
    };
    m.domain = summarize([](const QESample& s) { return to_string(s.domain); });
    m.origin = summarize([](const QESample& s) { return to_string(s.origin); });
    m.count = data.size();
    m.content_hash = fingerprint(data);
    return m;
  }

  nlohmann::json to_json() const {
    return {{"paths", paths},   {"lang_pairs", lang_pairs}, {"domain", domain},
            {"origin", origin}, {"count", count},           {"content_hash", content_hash},
            {"extra", extra}};
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.paths = j.at("paths").get<std::vector<std::string>>();
    m.lang_pairs = j.at("lang_pairs").get<std::vector<std::string>>();
    m.domain = j.at("domain").get<std::string>();
    m.origin = j.at("origin").get<std::string>();
    m.count = j.at("count").get<std::size_t>();
    m.content_hash = j.at("content_hash").get<std::string>();
    m.extra = j.value("extra", nlohmann::json::object());
    return m;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
  }
};

}  // namespace qeforge
