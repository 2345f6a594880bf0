#pragma once

// Class-level description selection. For every cluster, pick the member
// caption whose mean distance to the other captions of the cluster, minus its
// mean distance to the captions of all other clusters, is smallest.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/numeric.hpp"

namespace semcoh {

struct Description {
  ClusterId cluster_id = 0;
  std::string text;
  std::string source_image_id;
  double score = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  /// Set when the cluster holds every caption, so the inter term is empty.
  bool inter_undefined = false;
};

/// Descriptions keyed by cluster id (ascending).
class DescriptionSet {
 public:
  void add(Description d) {
    const auto id = d.cluster_id;
    if (!by_cluster_.emplace(id, std::move(d)).second) {
      throw Error(ErrorCode::duplicate_id, "duplicate description for cluster " + std::to_string(id));
    }
  }

  const Description* find(ClusterId id) const {
    auto it = by_cluster_.find(id);
    return it == by_cluster_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return by_cluster_.size(); }

  std::vector<const Description*> ordered() const {
    std::vector<const Description*> out;
    for (const auto& [_, d] : by_cluster_) out.push_back(&d);
    return out;
  }

 private:
  std::map<ClusterId, Description> by_cluster_;
};

inline json to_json(const Description& d) {
  json out{{"cluster_id", d.cluster_id}, {"text", d.text},   {"source_image_id", d.source_image_id},
           {"score", d.score},           {"intra", d.intra}, {"inter", d.inter}};
  if (d.inter_undefined) out["inter_undefined"] = true;
  return out;
}

inline void write_descriptions(const fs::path& path, const DescriptionSet& set) {
  auto out = detail::open_output(path);
  for (const auto* d : set.ordered()) out << to_json(*d).dump() << '\n';
}

inline DescriptionSet load_descriptions(const fs::path& path) {
  DescriptionSet set;
  const auto lines = detail::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto where = detail::location(path, i + 1);
    try {
      const auto obj = json::parse(lines[i]);
      Description d;
      d.cluster_id = obj.at("cluster_id").get<ClusterId>();
      d.text = obj.at("text").get<std::string>();
      d.source_image_id = obj.value("source_image_id", std::string());
      d.score = obj.value("score", 0.0);
      d.intra = obj.value("intra", 0.0);
      d.inter = obj.value("inter", 0.0);
      d.inter_undefined = obj.value("inter_undefined", false);
      if (d.text.empty()) throw Error(ErrorCode::invalid_argument, where + ": empty description");
      set.add(std::move(d));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, where + ": malformed description line");
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Options

enum class DistanceKind { embedding_cosine, rouge_l };

/// The printed objective divides the intra-class sum (which skips the
/// candidate itself) by |S_c|; `excluding_self` divides by |S_c| - 1.
enum class IntraDivisor { class_size, excluding_self };

struct SelectionOptions {
  DistanceKind distance = DistanceKind::embedding_cosine;
  bool use_negative_term = true;
  IntraDivisor intra_divisor = IntraDivisor::class_size;
};

// ---------------------------------------------------------------------------
// Unit embedding index

struct IndexedCaption {
  std::string image_id;
  std::string text;
  std::size_t cluster = 0;  // dense cluster index
};

/// Unit-normalized caption embeddings plus per-class and global vector sums.
struct UnitEmbeddingIndex {
  std::size_t dim = 0;
  std::vector<ClusterId> cluster_ids;                 // dense -> original
  std::vector<IndexedCaption> captions;
  std::vector<std::vector<double>> units;             // one per caption
  std::vector<std::vector<std::size_t>> by_cluster;   // caption indices per dense cluster
  std::vector<std::vector<double>> class_sums;
  std::vector<double> global_sum;

  std::size_t total() const noexcept { return captions.size(); }
};

/// Captions of clustered images, in clustering order. Images without a
/// caption are skipped.
inline std::vector<IndexedCaption> clustered_captions(const CaptionSet& captions, const Clustering& clustering) {
  std::vector<IndexedCaption> out;
  for (std::size_t h = 0; h < clustering.size(); ++h) {
    const auto* text = captions.find(clustering.ids()[h]);
    if (!text) continue;
    out.push_back({clustering.ids()[h], *text, static_cast<std::size_t>(clustering.labels()[h])});
  }
  return out;
}

inline UnitEmbeddingIndex build_index(const CaptionSet& captions, const EmbeddingMatrix& caption_embeddings,
                                      const Clustering& clustering) {
  UnitEmbeddingIndex index;
  index.dim = caption_embeddings.dim();
  index.cluster_ids = clustering.original_ids();
  index.captions = clustered_captions(captions, clustering);
  index.by_cluster.assign(clustering.num_clusters(), {});
  index.units.reserve(index.captions.size());
  for (std::size_t i = 0; i < index.captions.size(); ++i) {
    const auto& c = index.captions[i];
    auto row = caption_embeddings.find(c.image_id);
    if (!row) throw Error(ErrorCode::missing, "no caption embedding for image " + c.image_id);
    auto v = caption_embeddings.row_f64(*row);
    const double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0)) throw Error(ErrorCode::invalid_argument, "zero-norm caption embedding for image " + c.image_id);
    for (auto& x : v) x /= norm;
    index.units.push_back(std::move(v));
    index.by_cluster[c.cluster].push_back(i);
  }
  index.class_sums.assign(index.by_cluster.size(), std::vector<double>(index.dim, 0.0));
  std::vector<double> column;
  for (std::size_t d = 0; d < index.by_cluster.size(); ++d) {
    const auto& members = index.by_cluster[d];
    column.resize(members.size());
    for (std::size_t j = 0; j < index.dim; ++j) {
      for (std::size_t m = 0; m < members.size(); ++m) column[m] = index.units[members[m]][j];
      index.class_sums[d][j] = pairwise_sum(column);
    }
  }
  index.global_sum.assign(index.dim, 0.0);
  column.resize(index.class_sums.size());
  for (std::size_t j = 0; j < index.dim; ++j) {
    for (std::size_t d = 0; d < index.class_sums.size(); ++d) column[d] = index.class_sums[d][j];
    index.global_sum[j] = pairwise_sum(column);
  }
  return index;
}

// ---------------------------------------------------------------------------
// ROUGE-L

/// Lowercases ASCII and splits on runs of non-alphanumeric ASCII. Bytes of
/// multi-byte UTF-8 sequences count as word characters.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u >= 0x80 || std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// F1 of LCS recall (against a) and precision (against b).
inline double rouge_l_f1_tokens(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(a, b));
  if (lcs == 0.0) return 0.0;
  const double recall = lcs / static_cast<double>(a.size());
  const double precision = lcs / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

inline double rouge_l_f1(std::string_view a, std::string_view b) {
  const auto ta = tokenize(a);
  const auto tb = tokenize(b);
  return rouge_l_f1_tokens(ta, tb);
}

// ---------------------------------------------------------------------------
// Selection

/// Objective terms for one candidate caption.
struct CandidateScore {
  std::size_t caption = 0;  // index into the caption list
  double intra = 0.0;
  double inter = 0.0;
  double score = 0.0;
  bool inter_undefined = false;
};

namespace detail {

inline double intra_divisor(std::size_t class_size, IntraDivisor mode) {
  return mode == IntraDivisor::class_size ? static_cast<double>(class_size)
                                          : static_cast<double>(class_size - 1);
}

/// Strictly better candidate: lower score, then smaller image id.
inline bool better(const CandidateScore& a, const CandidateScore& b, std::span<const IndexedCaption> captions) {
  if (a.score != b.score) return a.score < b.score;
  return captions[a.caption].image_id < captions[b.caption].image_id;
}

inline DescriptionSet pick_best(std::span<const CandidateScore> scores, std::span<const IndexedCaption> captions,
                                const std::vector<std::vector<std::size_t>>& by_cluster,
                                std::span<const ClusterId> cluster_ids) {
  DescriptionSet out;
  for (std::size_t d = 0; d < by_cluster.size(); ++d) {
    if (by_cluster[d].empty()) {
      throw Error(ErrorCode::missing, "cluster " + std::to_string(cluster_ids[d]) + " has no captions");
    }
    const CandidateScore* best = nullptr;
    for (std::size_t i : by_cluster[d]) {
      if (!best || better(scores[i], *best, captions)) best = &scores[i];
    }
    const auto& cap = captions[best->caption];
    out.add({cluster_ids[d], cap.text, cap.image_id, best->score, best->intra, best->inter, best->inter_undefined});
  }
  return out;
}

}  // namespace detail

/// Objective of every caption via the sum-vector identity
/// mean_{t in T} (1 - u_s . u_t) = 1 - u_s . (sum_T u_t) / |T|, O(N dim).
inline std::vector<CandidateScore> score_candidates(const UnitEmbeddingIndex& index, const SelectionOptions& opt = {}) {
  const std::size_t total = index.total();
  std::vector<std::vector<double>> other_sums(index.class_sums.size(), std::vector<double>(index.dim));
  for (std::size_t d = 0; d < index.class_sums.size(); ++d) {
    for (std::size_t j = 0; j < index.dim; ++j) other_sums[d][j] = index.global_sum[j] - index.class_sums[d][j];
  }
  std::vector<CandidateScore> scores(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t d = index.captions[i].cluster;
    const std::size_t m = index.by_cluster[d].size();
    const auto& u = index.units[i];
    CandidateScore s;
    s.caption = i;
    if (m > 1) {
      const double self = dot(u, u);
      const double intra_sum = static_cast<double>(m - 1) - (dot(u, index.class_sums[d]) - self);
      s.intra = intra_sum / detail::intra_divisor(m, opt.intra_divisor);
    }
    const std::size_t others = total - m;
    if (others == 0) {
      s.inter_undefined = true;
    } else {
      s.inter = 1.0 - dot(u, other_sums[d]) / static_cast<double>(others);
    }
    s.score = opt.use_negative_term ? s.intra - s.inter : s.intra;
    scores[i] = s;
  }
  return scores;
}

/// Objective of every caption with d = 1 - ROUGE-L F1, explicit double loop.
inline std::vector<CandidateScore> score_candidates_rouge(std::span<const IndexedCaption> captions,
                                                          std::size_t num_clusters, const SelectionOptions& opt = {}) {
  const std::size_t total = captions.size();
  std::vector<std::vector<std::string>> tokens(total);
  for (std::size_t i = 0; i < total; ++i) tokens[i] = tokenize(captions[i].text);
  std::vector<std::size_t> class_size(num_clusters, 0);
  for (const auto& c : captions) ++class_size[c.cluster];

  std::vector<CandidateScore> scores(total);
  std::vector<double> intra_terms, inter_terms;
  for (std::size_t i = 0; i < total; ++i) {
    intra_terms.clear();
    inter_terms.clear();
    for (std::size_t j = 0; j < total; ++j) {
      if (j == i) continue;
      const bool same = captions[j].cluster == captions[i].cluster;
      if (!same && !opt.use_negative_term) continue;
      const double d = 1.0 - rouge_l_f1_tokens(tokens[i], tokens[j]);
      (same ? intra_terms : inter_terms).push_back(d);
    }
    const std::size_t m = class_size[captions[i].cluster];
    CandidateScore s;
    s.caption = i;
    if (m > 1) s.intra = pairwise_sum(intra_terms) / detail::intra_divisor(m, opt.intra_divisor);
    const std::size_t others = total - m;
    if (others == 0) {
      s.inter_undefined = true;
    } else if (opt.use_negative_term) {
      s.inter = pairwise_sum(inter_terms) / static_cast<double>(others);
    }
    s.score = opt.use_negative_term ? s.intra - s.inter : s.intra;
    scores[i] = s;
  }
  return scores;
}

inline DescriptionSet select_descriptions(const UnitEmbeddingIndex& index, const SelectionOptions& opt = {}) {
  const auto scores = score_candidates(index, opt);
  return detail::pick_best(scores, index.captions, index.by_cluster, index.cluster_ids);
}

/// Word-level variant; needs no embeddings.
inline DescriptionSet select_descriptions_rouge(const CaptionSet& captions, const Clustering& clustering,
                                                const SelectionOptions& opt = {}) {
  const auto indexed = clustered_captions(captions, clustering);
  std::vector<std::vector<std::size_t>> by_cluster(clustering.num_clusters());
  for (std::size_t i = 0; i < indexed.size(); ++i) by_cluster[indexed[i].cluster].push_back(i);
  const auto scores = score_candidates_rouge(indexed, clustering.num_clusters(), opt);
  return detail::pick_best(scores, indexed, by_cluster, clustering.original_ids());
}

// ---------------------------------------------------------------------------
// Uniqueness statistics

/// English stopwords used when counting unique descriptions "ignoring
/// stopwords". Fixed list; see README.
inline const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",  "above",   "after",    "again",   "against", "all",     "am",     "an",
      "and",     "any",    "are",     "as",       "at",      "be",      "because", "been",   "before",
      "being",   "below",  "between", "both",     "but",     "by",      "can",     "did",    "do",
      "does",    "doing",  "down",    "during",   "each",    "few",     "for",     "from",   "further",
      "had",     "has",    "have",    "having",   "he",      "her",     "here",    "hers",   "herself",
      "him",     "himself", "his",    "how",      "i",       "if",      "in",      "into",   "is",
      "it",      "its",    "itself",  "just",     "me",      "more",    "most",    "my",     "myself",
      "no",      "nor",    "not",     "now",      "of",      "off",     "on",      "once",   "only",
      "or",      "other",  "our",     "ours",     "ourselves", "out",   "over",    "own",    "same",
      "she",     "should", "so",      "some",     "such",    "than",    "that",    "the",    "their",
      "theirs",  "them",   "themselves", "then",  "there",   "these",   "they",    "this",   "those",
      "through", "to",     "too",     "under",    "until",   "up",      "very",    "was",    "we",
      "were",    "what",   "when",    "where",    "which",   "while",   "who",     "whom",   "why",
      "will",    "with",   "you",     "your",     "yours",   "yourself", "yourselves",
  };
  return words;
}

struct UniquenessReport {
  std::size_t classes = 0;
  std::size_t unique = 0;
  std::size_t unique_without_stopwords = 0;
  std::vector<std::pair<std::string, std::size_t>> most_common;  // count desc, text asc

  json to_json() const {
    json top = json::array();
    for (const auto& [text, count] : most_common) top.push_back({{"text", text}, {"count", count}});
    return {{"classes", classes},
            {"unique", unique},
            {"unique_without_stopwords", unique_without_stopwords},
            {"most_common", top}};
  }
};

inline UniquenessReport uniqueness_stats(const DescriptionSet& descriptions,
                                         const std::unordered_set<std::string>& stopwords = default_stopwords(),
                                         std::size_t top_n = 10) {
  UniquenessReport report;
  std::map<std::string, std::size_t> counts;
  std::set<std::string> reduced;
  for (const auto* d : descriptions.ordered()) {
    ++report.classes;
    ++counts[d->text];
    std::string key;
    for (const auto& tok : tokenize(d->text)) {
      if (stopwords.contains(tok)) continue;
      if (!key.empty()) key.push_back(' ');
      key += tok;
    }
    reduced.insert(std::move(key));
  }
  report.unique = counts.size();
  report.unique_without_stopwords = reduced.size();
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  ranked.resize(std::min(ranked.size(), top_n));
  report.most_common = std::move(ranked);
  return report;
}

}  // namespace semcoh
