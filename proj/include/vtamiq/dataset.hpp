#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/image_io.hpp"
#include "vtamiq/metrics.hpp"
#include "vtamiq/random.hpp"
#include "vtamiq/tensor.hpp"

namespace vtamiq {

enum class ScoreDirection { kHigherIsBetter, kLowerIsBetter };

struct ImageRecord {
  std::filesystem::path reference_path;
  std::filesystem::path distorted_path;
  double score = 0.0;
  std::string reference_id;
};

struct DatasetManifest {
  std::string name;
  std::vector<ImageRecord> records;
  ScoreDirection direction = ScoreDirection::kHigherIsBetter;

  std::vector<std::string> reference_ids() const {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.reference_id);
    return {ids.begin(), ids.end()};
  }
};

namespace detail {

/// Splits one CSV line; fields may be double-quoted with "" as an escaped quote.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Reads a CSV manifest with header `ref_path,dist_path,score,ref_id`. Relative image paths
/// resolve against the manifest's directory; files are not opened here.
inline DatasetManifest load_manifest(const std::filesystem::path& path,
                                     ScoreDirection direction = ScoreDirection::kHigherIsBetter,
                                     std::string name = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.name = name.empty() ? path.stem().string() : std::move(name);
  m.direction = direction;
  const auto base = path.parent_path();

  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    for (auto& f : fields) f = detail::trim(f);
    if (!header) {
      if (fields != std::vector<std::string>{"ref_path", "dist_path", "score", "ref_id"}) {
        throw ParseError("line " + std::to_string(line_no) + ": expected header ref_path,dist_path,score,ref_id");
      }
      header = true;
      continue;
    }
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " + std::to_string(fields.size()));
    }
    ImageRecord r;
    r.reference_path = fields[0];
    r.distorted_path = fields[1];
    if (r.reference_path.is_relative()) r.reference_path = base / r.reference_path;
    if (r.distorted_path.is_relative()) r.distorted_path = base / r.distorted_path;
    std::size_t used = 0;
    try {
      r.score = std::stod(fields[2], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != fields[2].size() || !std::isfinite(r.score)) {
      throw ParseError("line " + std::to_string(line_no) + ": score '" + fields[2] + "' is not a finite number");
    }
    if (fields[0].empty() || fields[1].empty() || fields[3].empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty field");
    }
    r.reference_id = fields[3];
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw ParseError("manifest '" + path.string() + "' is empty");
  return m;
}

/// Disjoint reference-id subsets.
struct SplitSpec {
  std::vector<std::string> train, val, test;  // each sorted
  std::uint64_t seed = 0;
};

enum class Subset { kTrain, kVal, kTest, kNone };

/// Random split along reference images. Validation and test receive round(fraction * n)
/// references each; the remainder goes to training.
inline SplitSpec split_by_reference(const DatasetManifest& manifest, std::array<double, 3> fractions, std::uint64_t seed) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions sum to " + std::to_string(sum) + ", not 1");
  for (double f : fractions)
    if (f < 0) throw ConfigError("split fractions must be nonnegative");
  auto ids = manifest.reference_ids();
  const std::size_t n = ids.size();
  if (n < 3) throw ContractError("splitting needs at least 3 distinct references, got " + std::to_string(n));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(fractions[2] * static_cast<double>(n)));
  if (n_val + n_test > n) throw ConfigError("split fractions leave no room for training");

  // Fisher-Yates with a portable index draw.
  std::mt19937_64 rng(derive_seed(seed, {0x5011}));
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(ids[i - 1], ids[std::min(j, i - 1)]);
  }
  SplitSpec s;
  s.seed = seed;
  s.val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline Subset subset_of(const SplitSpec& split, const std::string& reference_id) {
  if (std::binary_search(split.train.begin(), split.train.end(), reference_id)) return Subset::kTrain;
  if (std::binary_search(split.val.begin(), split.val.end(), reference_id)) return Subset::kVal;
  if (std::binary_search(split.test.begin(), split.test.end(), reference_id)) return Subset::kTest;
  return Subset::kNone;
}

/// Indices of the manifest records whose reference falls in `subset`.
inline std::vector<std::size_t> records_in(const DatasetManifest& m, const SplitSpec& split, Subset subset) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    if (subset_of(split, m.records[i].reference_id) == subset) out.push_back(i);
  return out;
}

/// Text form: one "[train]" / "[val]" / "[test]" header per subset followed by one id per line.
inline void write_split(const std::filesystem::path& path, const SplitSpec& split) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split file '" + path.string() + "'");
  out << "# seed " << split.seed << '\n';
  const std::pair<const char*, const std::vector<std::string>*> parts[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, ids] : parts) {
    out << '[' << name << "]\n";
    for (const auto& id : *ids) out << id << '\n';
  }
}

inline SplitSpec read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file '" + path.string() + "'");
  SplitSpec s;
  std::vector<std::string>* current = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.starts_with("# seed ")) {
      s.seed = std::stoull(line.substr(7));
    } else if (line == "[train]") {
      current = &s.train;
    } else if (line == "[val]") {
      current = &s.val;
    } else if (line == "[test]") {
      current = &s.test;
    } else if (line.starts_with('#')) {
      continue;
    } else if (!current) {
      throw ParseError("split file line " + std::to_string(line_no) + ": id before any subset header");
    } else {
      current->push_back(line);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// Per-channel (v / 255 - mean) / std.
struct NormalizationSpec {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

template <typename T>
Tensor<T> normalize_image(const Rgb8Image& img, const NormalizationSpec& norm = {}) {
  Tensor<T> out(Shape{img.height, img.width, 3});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::size_t c = i % 3;
    out[i] = static_cast<T>((static_cast<double>(img.pixels[i]) / 255.0 - norm.mean[c]) / norm.std[c]);
  }
  return out;
}

/// Inverse of normalize_image, in [0, 255] pixel units.
template <typename T>
Tensor<double> denormalize_image(const Tensor<T>& img, const NormalizationSpec& norm = {}) {
  if (img.rank() != 3 || img.dim(2) != 3) throw DimensionError("denormalize_image: expected [H,W,3]");
  Tensor<double> out(img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const std::size_t c = i % 3;
    out[i] = (static_cast<double>(img[i]) * norm.std[c] + norm.mean[c]) * 255.0;
  }
  return out;
}

template <typename T>
Tensor<T> load_image_normalized(const std::filesystem::path& path, const NormalizationSpec& norm = {}) {
  return normalize_image<T>(read_image(path), norm);
}

/// Rank-based equalisation: s_i -> (rank_i - 0.5) / n with average ranks for ties.
inline std::vector<double> histogram_equalize_scores(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("histogram_equalize_scores: empty input");
  auto ranks = average_ranks(scores);
  const double n = static_cast<double>(scores.size());
  for (double& r : ranks) r = (r - 0.5) / n;
  return ranks;
}

/// Scores mapped linearly onto [0, 1] with 1 the best quality. A constant-score manifest maps
/// to 0.5 everywhere.
inline std::vector<double> normalized_targets(const DatasetManifest& m) {
  std::vector<double> out;
  out.reserve(m.records.size());
  double lo = m.records.front().score, hi = lo;
  for (const auto& r : m.records) {
    lo = std::min(lo, r.score);
    hi = std::max(hi, r.score);
  }
  for (const auto& r : m.records) {
    double t = hi > lo ? (r.score - lo) / (hi - lo) : 0.5;
    if (m.direction == ScoreDirection::kLowerIsBetter) t = 1.0 - t;
    out.push_back(t);
  }
  return out;
}

}  // namespace vtamiq
