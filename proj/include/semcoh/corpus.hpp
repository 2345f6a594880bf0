#pragma once

// Data model and loaders for externally produced artifacts: clusterings,
// label maps, EMB1 embedding matrices, caption sets and image manifests.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "semcoh/errors.hpp"

namespace semcoh {

namespace fs = std::filesystem;
using json = nlohmann::json;

using ClusterId = std::int64_t;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string location(const fs::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

/// Splits `key,value` at the last comma so keys may themselves contain commas.
inline std::optional<std::pair<std::string_view, std::string_view>> split_pair(std::string_view line) {
  const auto comma = line.rfind(',');
  if (comma == std::string_view::npos) return std::nullopt;
  return std::make_pair(trim(line.substr(0, comma)), trim(line.substr(comma + 1)));
}

inline std::optional<std::int64_t> parse_int(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::int64_t value = 0;
  bool negative = false;
  std::size_t i = 0;
  if (text[0] == '-' || text[0] == '+') {
    negative = text[0] == '-';
    i = 1;
    if (text.size() == 1) return std::nullopt;
  }
  for (; i < text.size(); ++i) {
    if (text[i] < '0' || text[i] > '9') return std::nullopt;
    if (value > (INT64_MAX - (text[i] - '0')) / 10) return std::nullopt;
    value = value * 10 + (text[i] - '0');
  }
  return negative ? -value : value;
}

inline std::ifstream open_input(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  return out;
}

/// Reads every line, stripping a trailing '\r'.
inline std::vector<std::string> read_lines(const fs::path& path) {
  auto in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Clustering

/// Assignment of image ids to clusters. Cluster ids from the input are kept
/// as "original" ids; internally clusters are densely indexed 0..K-1 in
/// first-appearance order.
class Clustering {
 public:
  Clustering() = default;

  /// Builds from (image_id, cluster_id) pairs in input order.
  static Clustering from_assignment(const std::vector<std::pair<std::string, ClusterId>>& rows) {
    Clustering c;
    std::unordered_map<ClusterId, int> dense_of;
    c.ids_.reserve(rows.size());
    c.labels_.reserve(rows.size());
    for (const auto& [image, cluster] : rows) {
      if (cluster < 0) throw Error(ErrorCode::invalid_argument, "negative cluster id for " + image);
      if (!c.handle_of_.emplace(image, c.ids_.size()).second) {
        throw Error(ErrorCode::duplicate_id, "duplicate image id " + image);
      }
      auto [it, inserted] = dense_of.emplace(cluster, static_cast<int>(c.original_.size()));
      if (inserted) {
        c.original_.push_back(cluster);
        c.members_.emplace_back();
      }
      c.members_[it->second].push_back(c.ids_.size());
      c.ids_.push_back(image);
      c.labels_.push_back(it->second);
    }
    for (std::size_t d = 0; d < c.original_.size(); ++d) c.dense_of_.emplace(c.original_[d], static_cast<int>(d));
    return c;
  }

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t num_clusters() const noexcept { return original_.size(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  /// Dense cluster index per image handle.
  const std::vector<int>& labels() const noexcept { return labels_; }
  /// Original cluster id per dense index (the side map).
  const std::vector<ClusterId>& original_ids() const noexcept { return original_; }
  /// Image handles per dense cluster, in input order.
  const std::vector<std::vector<std::size_t>>& members() const noexcept { return members_; }

  std::optional<std::size_t> handle(std::string_view image_id) const {
    auto it = handle_of_.find(std::string(image_id));
    if (it == handle_of_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<int> dense_index(ClusterId original) const {
    auto it = dense_of_.find(original);
    if (it == dense_of_.end()) return std::nullopt;
    return it->second;
  }

  ClusterId cluster_of(std::size_t handle) const { return original_[labels_[handle]]; }

  /// Original cluster ids in ascending order.
  std::vector<ClusterId> sorted_cluster_ids() const {
    std::vector<ClusterId> out = original_;
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const Clustering& a, const Clustering& b) {
    return a.ids_ == b.ids_ && a.labels_ == b.labels_ && a.original_ == b.original_;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<int> labels_;
  std::vector<ClusterId> original_;
  std::vector<std::vector<std::size_t>> members_;
  std::unordered_map<std::string, std::size_t> handle_of_;
  std::unordered_map<ClusterId, int> dense_of_;
};

/// Reads `image_id,cluster_id` lines. Blank lines are skipped.
inline Clustering load_clustering(const fs::path& path, bool has_header = false) {
  const auto lines = detail::read_lines(path);
  std::vector<std::pair<std::string, ClusterId>> rows;
  std::set<std::string> seen;
  for (std::size_t i = has_header ? 1 : 0; i < lines.size(); ++i) {
    const auto line = detail::trim(lines[i]);
    if (line.empty()) continue;
    const auto pair = detail::split_pair(line);
    if (!pair || pair->first.empty()) {
      throw Error(ErrorCode::parse, detail::location(path, i + 1) + ": expected image_id,cluster_id");
    }
    const auto cluster = detail::parse_int(pair->second);
    if (!cluster || *cluster < 0) {
      throw Error(ErrorCode::parse, detail::location(path, i + 1) + ": cluster id is not a non-negative integer");
    }
    if (!seen.emplace(pair->first).second) {
      throw Error(ErrorCode::duplicate_id,
                  detail::location(path, i + 1) + ": duplicate image id " + std::string(pair->first));
    }
    rows.emplace_back(std::string(pair->first), *cluster);
  }
  if (rows.empty()) throw Error(ErrorCode::parse, path.string() + ": empty clustering file");
  return Clustering::from_assignment(rows);
}

inline void write_clustering(const fs::path& path, const Clustering& clustering) {
  auto out = detail::open_output(path);
  for (std::size_t h = 0; h < clustering.size(); ++h) {
    out << clustering.ids()[h] << ',' << clustering.cluster_of(h) << '\n';
  }
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Label map

struct LabelMap {
  std::unordered_map<std::string, std::string> labels;  // image_id -> label_id
  std::unordered_map<std::string, std::string> names;   // label_id -> display name

  std::size_t num_labels() const noexcept { return names.size(); }
};

/// `labels_path` holds `image_id,label_id`; `names_path` holds `label_id,name`.
inline LabelMap load_labelmap(const fs::path& labels_path, const fs::path& names_path) {
  LabelMap map;
  const auto name_lines = detail::read_lines(names_path);
  for (std::size_t i = 0; i < name_lines.size(); ++i) {
    const auto line = detail::trim(name_lines[i]);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || comma == 0) {
      throw Error(ErrorCode::parse, detail::location(names_path, i + 1) + ": expected label_id,name");
    }
    std::string label(detail::trim(line.substr(0, comma)));
    std::string name(detail::trim(line.substr(comma + 1)));
    if (!map.names.emplace(label, std::move(name)).second) {
      throw Error(ErrorCode::duplicate_id, detail::location(names_path, i + 1) + ": duplicate label id " + label);
    }
  }
  const auto label_lines = detail::read_lines(labels_path);
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const auto line = detail::trim(label_lines[i]);
    if (line.empty()) continue;
    const auto pair = detail::split_pair(line);
    if (!pair || pair->first.empty() || pair->second.empty()) {
      throw Error(ErrorCode::parse, detail::location(labels_path, i + 1) + ": expected image_id,label_id");
    }
    std::string label(pair->second);
    if (!map.names.contains(label)) {
      throw Error(ErrorCode::missing, detail::location(labels_path, i + 1) + ": label " + label + " has no name");
    }
    if (!map.labels.emplace(std::string(pair->first), std::move(label)).second) {
      throw Error(ErrorCode::duplicate_id,
                  detail::location(labels_path, i + 1) + ": duplicate image id " + std::string(pair->first));
    }
  }
  return map;
}

inline void write_labelmap(const fs::path& labels_path, const fs::path& names_path,
                           const LabelMap& map, std::span<const std::string> image_order) {
  auto names = detail::open_output(names_path);
  std::vector<std::string> label_ids;
  for (const auto& [label, _] : map.names) label_ids.push_back(label);
  std::sort(label_ids.begin(), label_ids.end());
  for (const auto& label : label_ids) names << label << ',' << map.names.at(label) << '\n';
  auto labels = detail::open_output(labels_path);
  for (const auto& image : image_order) {
    auto it = map.labels.find(image);
    if (it != map.labels.end()) labels << image << ',' << it->second << '\n';
  }
}

// ---------------------------------------------------------------------------
// Embeddings (EMB1)

/// Dense row-major float32 matrix keyed by id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> values)
      : ids_(std::move(ids)), dim_(dim), values_(std::move(values)) {
    if (dim_ == 0) throw Error(ErrorCode::invalid_argument, "embedding dim must be positive");
    if (values_.size() != ids_.size() * dim_) {
      throw Error(ErrorCode::mismatch, "embedding value count does not match ids x dim");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw Error(ErrorCode::non_finite, "non-finite embedding value in row " + std::to_string(i / dim_));
      }
    }
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      if (!row_of_.emplace(ids_[r], r).second) {
        throw Error(ErrorCode::duplicate_id, "duplicate embedding id " + ids_[r]);
      }
    }
  }

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<float>& values() const noexcept { return values_; }

  std::span<const float> row(std::size_t r) const { return {values_.data() + r * dim_, dim_}; }

  /// Row promoted to double precision.
  std::vector<double> row_f64(std::size_t r) const {
    const auto src = row(r);
    return {src.begin(), src.end()};
  }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = row_of_.find(std::string(id));
    if (it == row_of_.end()) return std::nullopt;
    return it->second;
  }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           std::memcmp(a.values_.data(), b.values_.data(), a.values_.size() * sizeof(float)) == 0 &&
           a.values_.size() == b.values_.size();
  }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

namespace detail {

inline std::uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u32_le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

}  // namespace detail

inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};

inline EmbeddingMatrix load_embeddings(const fs::path& matrix_path, const fs::path& ids_path) {
  auto in = detail::open_input(matrix_path, std::ios::binary);
  unsigned char header[12];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (in.gcount() != sizeof header) throw Error(ErrorCode::parse, matrix_path.string() + ": truncated header");
  if (std::memcmp(header, kEmbeddingMagic, 4) != 0) {
    throw Error(ErrorCode::parse, matrix_path.string() + ": bad magic (expected EMB1)");
  }
  const std::uint32_t rows = detail::load_u32_le(header + 4);
  const std::uint32_t dim = detail::load_u32_le(header + 8);
  if (dim == 0) throw Error(ErrorCode::parse, matrix_path.string() + ": zero dimension");

  std::vector<std::string> ids;
  for (auto& line : detail::read_lines(ids_path)) {
    if (!line.empty()) ids.push_back(std::move(line));
  }
  if (ids.size() != rows) {
    throw Error(ErrorCode::mismatch, matrix_path.string() + ": header has " + std::to_string(rows) +
                                         " rows but ids file has " + std::to_string(ids.size()));
  }

  const std::size_t count = static_cast<std::size_t>(rows) * dim;
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorCode::parse, matrix_path.string() + ": truncated matrix body");
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(detail::load_u32_le(raw.data() + 4 * i));
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::non_finite, matrix_path.string() + ": non-finite value at row " +
                                             std::to_string(i / dim) + ", column " + std::to_string(i % dim));
    }
  }
  return EmbeddingMatrix(std::move(ids), dim, std::move(values));
}

inline void write_embeddings(const fs::path& matrix_path, const fs::path& ids_path, const EmbeddingMatrix& m) {
  auto out = detail::open_output(matrix_path, std::ios::binary);
  unsigned char header[12];
  std::memcpy(header, kEmbeddingMagic, 4);
  detail::store_u32_le(header + 4, static_cast<std::uint32_t>(m.rows()));
  detail::store_u32_le(header + 8, static_cast<std::uint32_t>(m.dim()));
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  std::vector<unsigned char> raw(m.values().size() * 4);
  for (std::size_t i = 0; i < m.values().size(); ++i) {
    detail::store_u32_le(raw.data() + 4 * i, std::bit_cast<std::uint32_t>(m.values()[i]));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorCode::io, "write failed: " + matrix_path.string());
  auto ids = detail::open_output(ids_path);
  for (const auto& id : m.ids()) ids << id << '\n';
}

// ---------------------------------------------------------------------------
// Captions

class CaptionSet {
 public:
  void add(std::string image_id, std::string caption) {
    if (caption.empty()) throw Error(ErrorCode::invalid_argument, "empty caption for " + image_id);
    if (!index_.emplace(image_id, entries_.size()).second) {
      throw Error(ErrorCode::duplicate_id, "duplicate caption for " + image_id);
    }
    entries_.emplace_back(std::move(image_id), std::move(caption));
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

  const std::string* find(std::string_view image_id) const {
    auto it = index_.find(std::string(image_id));
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// JSONL, one `{"image_id": ..., "caption": ...}` object per line.
inline CaptionSet load_captions(const fs::path& path) {
  CaptionSet set;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto where = detail::location(path, i + 1);
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse, where + ": malformed JSON");
    }
    if (!obj.is_object() || !obj.contains("image_id") || !obj.contains("caption") ||
        !obj["image_id"].is_string() || !obj["caption"].is_string()) {
      throw Error(ErrorCode::parse, where + ": expected string fields image_id and caption");
    }
    auto image = obj["image_id"].get<std::string>();
    auto caption = obj["caption"].get<std::string>();
    if (caption.empty()) throw Error(ErrorCode::invalid_argument, where + ": empty caption");
    if (set.find(image)) throw Error(ErrorCode::duplicate_id, where + ": duplicate image id " + image);
    set.add(std::move(image), std::move(caption));
  }
  return set;
}

inline void write_captions(const fs::path& path, const CaptionSet& set) {
  auto out = detail::open_output(path);
  for (const auto& [image, caption] : set.entries()) {
    out << json{{"image_id", image}, {"caption", caption}}.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Image manifest

class ImageManifest {
 public:
  ImageManifest() = default;

  ImageManifest(fs::path root, std::vector<std::pair<std::string, fs::path>> entries)
      : root_(std::move(root)), entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& [id, rel] = entries_[i];
      if (!is_contained(rel)) {
        throw Error(ErrorCode::invalid_argument, "manifest path escapes root: " + rel.string());
      }
      if (!index_.emplace(id, i).second) throw Error(ErrorCode::duplicate_id, "duplicate manifest id " + id);
    }
  }

  const fs::path& root() const noexcept { return root_; }
  const std::vector<std::pair<std::string, fs::path>>& entries() const noexcept { return entries_; }
  bool contains(std::string_view id) const { return index_.contains(std::string(id)); }

  /// Absolute path for a manifest id, or nullopt when the id is unknown or
  /// the resolved file would lie outside the root (e.g. through a symlink).
  std::optional<fs::path> resolve(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    std::error_code ec;
    const auto root = fs::weakly_canonical(root_, ec);
    if (ec) return std::nullopt;
    const auto full = fs::weakly_canonical(root_ / entries_[it->second].second, ec);
    if (ec) return std::nullopt;
    const auto rel = full.lexically_relative(root);
    if (rel.empty() || !is_contained(rel)) return std::nullopt;
    return full;
  }

 private:
  static bool is_contained(const fs::path& rel) {
    if (rel.empty() || rel.is_absolute() || rel.has_root_name() || rel.has_root_directory()) return false;
    for (const auto& part : rel.lexically_normal()) {
      if (part == "..") return false;
    }
    return true;
  }

  fs::path root_;
  std::vector<std::pair<std::string, fs::path>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// CSV `image_id,relative_path`; root defaults to the manifest's directory.
inline ImageManifest load_manifest(const fs::path& path, std::optional<fs::path> root = std::nullopt) {
  std::vector<std::pair<std::string, fs::path>> entries;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = detail::trim(lines[i]);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || comma == 0 || comma + 1 == line.size()) {
      throw Error(ErrorCode::parse, detail::location(path, i + 1) + ": expected image_id,relative_path");
    }
    entries.emplace_back(std::string(detail::trim(line.substr(0, comma))),
                         fs::path(std::string(detail::trim(line.substr(comma + 1)))));
  }
  return ImageManifest(root.value_or(path.parent_path().empty() ? fs::path(".") : path.parent_path()),
                       std::move(entries));
}

inline void write_manifest(const fs::path& path, const ImageManifest& manifest) {
  auto out = detail::open_output(path);
  for (const auto& [id, rel] : manifest.entries()) out << id << ',' << rel.generic_string() << '\n';
}

// ---------------------------------------------------------------------------
// Bundle validation

struct CorpusBundle {
  std::optional<ImageManifest> manifest;
  Clustering clustering;
  std::optional<LabelMap> labels;
  std::optional<EmbeddingMatrix> features;
  std::optional<CaptionSet> captions;
  std::optional<EmbeddingMatrix> caption_embeddings;
};

/// Which optional inputs downstream steps depend on. A missing required
/// input turns the corresponding consistency gap into an error.
struct ValidationRequirements {
  bool manifest = false;
  bool features = false;
  bool captions = false;
  bool caption_embeddings = false;
};

enum class Severity { warning, error };

struct ValidationIssue {
  Severity severity;
  std::string check;
  std::size_t count;
  std::vector<std::string> sample_ids;  // sorted, at most kSampleIds
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  json summary;

  std::size_t errors() const {
    return static_cast<std::size_t>(
        std::count_if(issues.begin(), issues.end(), [](const auto& i) { return i.severity == Severity::error; }));
  }
  std::size_t warnings() const { return issues.size() - errors(); }

  json to_json() const {
    json out;
    out["errors"] = errors();
    out["warnings"] = warnings();
    out["summary"] = summary;
    out["issues"] = json::array();
    for (const auto& issue : issues) {
      out["issues"].push_back({{"severity", issue.severity == Severity::error ? "error" : "warning"},
                               {"check", issue.check},
                               {"count", issue.count},
                               {"sample_ids", issue.sample_ids}});
    }
    return out;
  }
};

inline ValidationReport validate_corpus(const CorpusBundle& bundle, const ValidationRequirements& req = {}) {
  constexpr std::size_t kSampleIds = 10;
  ValidationReport report;
  const auto& ids = bundle.clustering.ids();

  auto check = [&](const std::string& name, bool required, auto&& is_bad) {
    std::vector<std::string> bad;
    for (const auto& id : ids) {
      if (is_bad(id)) bad.push_back(id);
    }
    if (bad.empty()) return;
    std::sort(bad.begin(), bad.end());
    const std::size_t count = bad.size();
    bad.resize(std::min(bad.size(), kSampleIds));
    report.issues.push_back({required ? Severity::error : Severity::warning, name, count, std::move(bad)});
  };
  auto absent = [&](const std::string& name, bool required) {
    if (required) report.issues.push_back({Severity::error, name, ids.size(), {}});
  };

  if (bundle.manifest) {
    check("clustered_missing_from_manifest", true, [&](const auto& id) { return !bundle.manifest->contains(id); });
  } else {
    absent("manifest_absent", req.manifest);
  }
  if (bundle.features) {
    check("clustered_missing_features", req.features, [&](const auto& id) { return !bundle.features->find(id); });
  } else {
    absent("features_absent", req.features);
  }
  if (bundle.captions) {
    check("clustered_missing_captions", req.captions, [&](const auto& id) { return !bundle.captions->find(id); });
    if (bundle.caption_embeddings) {
      check("captions_missing_embeddings", true, [&](const auto& id) {
        return bundle.captions->find(id) && !bundle.caption_embeddings->find(id);
      });
    } else {
      absent("caption_embeddings_absent", req.caption_embeddings);
    }
  } else {
    absent("captions_absent", req.captions || req.caption_embeddings);
  }
  std::size_t labeled = 0;
  if (bundle.labels) {
    std::vector<std::string> unknown;
    for (const auto& [image, _] : bundle.labels->labels) {
      if (!bundle.clustering.handle(image)) unknown.push_back(image);
    }
    if (!unknown.empty()) {
      std::sort(unknown.begin(), unknown.end());
      const std::size_t count = unknown.size();
      unknown.resize(std::min(unknown.size(), kSampleIds));
      report.issues.push_back({Severity::warning, "labels_reference_unknown_images", count, std::move(unknown)});
    }
    check("clustered_unlabeled", false, [&](const auto& id) { return !bundle.labels->labels.contains(id); });
    for (const auto& id : ids) labeled += bundle.labels->labels.contains(id) ? 1 : 0;
  }

  auto covered = [&](const auto& opt, auto&& has) -> json {
    if (!opt) return nullptr;
    std::size_t n = 0;
    for (const auto& id : ids) n += has(id) ? 1 : 0;
    return n;
  };
  report.summary = {
      {"images", ids.size()},
      {"clusters", bundle.clustering.num_clusters()},
      {"labeled", bundle.labels ? json(labeled) : json(nullptr)},
      {"num_labels", bundle.labels ? json(bundle.labels->num_labels()) : json(nullptr)},
      {"in_manifest", covered(bundle.manifest, [&](const auto& id) { return bundle.manifest->contains(id); })},
      {"with_features", covered(bundle.features, [&](const auto& id) { return bundle.features->find(id).has_value(); })},
      {"with_captions", covered(bundle.captions, [&](const auto& id) { return bundle.captions->find(id) != nullptr; })},
      {"with_caption_embeddings",
       covered(bundle.caption_embeddings, [&](const auto& id) { return bundle.caption_embeddings->find(id).has_value(); })},
  };
  return report;
}

}  // namespace semcoh
