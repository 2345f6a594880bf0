#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/numeric.hpp"
#include "semcoh/prng.hpp"

namespace semcoh {

// ---------------------------------------------------------------------------
// Purity

struct ClusterPurity {
  ClusterId cluster_id = 0;
  std::size_t size = 0;
  std::size_t labeled = 0;
  std::map<std::string, std::size_t> histogram;  // label_id -> count
  double entropy = 0.0;
  /// Unset when the cluster has no labeled members.
  std::optional<double> purity;
};

struct PurityReport {
  double normalizer = 0.0;  // ln(L)
  std::size_t num_labels = 0;
  std::vector<ClusterPurity> clusters;  // ascending cluster id

  const ClusterPurity* find(ClusterId id) const {
    auto it = std::lower_bound(clusters.begin(), clusters.end(), id,
                               [](const ClusterPurity& c, ClusterId v) { return c.cluster_id < v; });
    return it != clusters.end() && it->cluster_id == id ? &*it : nullptr;
  }

  json to_json() const {
    json out{{"normalizer", normalizer}, {"num_labels", num_labels}, {"clusters", json::array()}};
    for (const auto& c : clusters) {
      out["clusters"].push_back({{"cluster_id", c.cluster_id},
                                 {"size", c.size},
                                 {"labeled", c.labeled},
                                 {"entropy", c.entropy},
                                 {"purity", c.purity ? json(*c.purity) : json(nullptr)},
                                 {"unlabeled", !c.purity.has_value()},
                                 {"histogram", c.histogram}});
    }
    return out;
  }
};

/// Purity = 1 - H / ln(L), H the natural-log entropy of a cluster's label
/// histogram and L the number of labels in the map. Images without a label
/// are left out of the histogram.
inline PurityReport class_purity(const Clustering& clustering, const LabelMap& labels) {
  if (labels.num_labels() == 0) throw Error(ErrorCode::invalid_argument, "empty label map");
  PurityReport report;
  report.num_labels = labels.num_labels();
  report.normalizer = std::log(static_cast<double>(labels.num_labels()));
  for (std::size_t d = 0; d < clustering.num_clusters(); ++d) {
    ClusterPurity cp;
    cp.cluster_id = clustering.original_ids()[d];
    cp.size = clustering.members()[d].size();
    for (std::size_t h : clustering.members()[d]) {
      auto it = labels.labels.find(clustering.ids()[h]);
      if (it == labels.labels.end()) continue;
      ++cp.histogram[it->second];
      ++cp.labeled;
    }
    if (cp.labeled > 0) {
      std::vector<std::size_t> counts;
      for (const auto& [_, n] : cp.histogram) counts.push_back(n);
      cp.entropy = entropy_from_counts(counts, static_cast<double>(cp.labeled));
      // L = 1 admits only zero-entropy clusters.
      cp.purity = report.normalizer > 0.0 ? std::clamp(1.0 - cp.entropy / report.normalizer, 0.0, 1.0) : 1.0;
    }
    report.clusters.push_back(std::move(cp));
  }
  std::sort(report.clusters.begin(), report.clusters.end(),
            [](const auto& a, const auto& b) { return a.cluster_id < b.cluster_id; });
  return report;
}

// ---------------------------------------------------------------------------
// Centroids and hard negatives

struct CentroidMap {
  std::vector<ClusterId> cluster_ids;         // dense order of the clustering
  std::vector<std::vector<double>> centroids;  // one per dense cluster
  std::vector<ClusterId> hard_negative;        // empty when K < 2

  std::optional<ClusterId> hard_negative_of(ClusterId id) const {
    for (std::size_t d = 0; d < cluster_ids.size(); ++d) {
      if (cluster_ids[d] == id) {
        if (hard_negative.empty()) return std::nullopt;
        return hard_negative[d];
      }
    }
    return std::nullopt;
  }

  json to_json() const {
    std::vector<std::size_t> order(cluster_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cluster_ids[a] < cluster_ids[b]; });
    json out = json::array();
    for (auto d : order) {
      out.push_back({{"cluster_id", cluster_ids[d]},
                     {"hard_negative", hard_negative.empty() ? json(nullptr) : json(hard_negative[d])}});
    }
    return {{"clusters", out}};
  }
};

namespace detail {

/// Resolves every clustered image to its embedding row.
inline std::vector<std::size_t> embedding_rows(const Clustering& clustering, const EmbeddingMatrix& embeddings) {
  std::vector<std::size_t> rows(clustering.size());
  for (std::size_t h = 0; h < clustering.size(); ++h) {
    auto r = embeddings.find(clustering.ids()[h]);
    if (!r) throw Error(ErrorCode::missing, "no embedding for image " + clustering.ids()[h]);
    rows[h] = *r;
  }
  return rows;
}

}  // namespace detail

/// Centroid = mean member vector; hard negative = cluster with the nearest
/// centroid in Euclidean distance, ties to the smaller cluster id.
inline CentroidMap centroids_and_hard_negatives(const Clustering& clustering, const EmbeddingMatrix& embeddings,
                                                bool require_hard_negatives = true) {
  const auto rows = detail::embedding_rows(clustering, embeddings);
  const std::size_t k = clustering.num_clusters();
  const std::size_t dim = embeddings.dim();
  if (require_hard_negatives && k < 2) {
    throw Error(ErrorCode::invalid_argument, "hard negatives need at least 2 clusters");
  }
  CentroidMap map;
  map.cluster_ids = clustering.original_ids();
  map.centroids.assign(k, std::vector<double>(dim, 0.0));
  std::vector<double> column;
  for (std::size_t d = 0; d < k; ++d) {
    const auto& members = clustering.members()[d];
    column.resize(members.size());
    for (std::size_t j = 0; j < dim; ++j) {
      for (std::size_t m = 0; m < members.size(); ++m) column[m] = embeddings.row(rows[members[m]])[j];
      map.centroids[d][j] = pairwise_sum(column) / static_cast<double>(members.size());
    }
  }
  if (k >= 2) {
    map.hard_negative.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
      double best = std::numeric_limits<double>::infinity();
      ClusterId best_id = 0;
      for (std::size_t o = 0; o < k; ++o) {
        if (o == c) continue;
        const double dist = std::sqrt(squared_distance(map.centroids[c], map.centroids[o]));
        if (dist < best || (dist == best && map.cluster_ids[o] < best_id)) {
          best = dist;
          best_id = map.cluster_ids[o];
        }
      }
      map.hard_negative[c] = best_id;
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Medoid

/// The member minimizing mean Euclidean distance to the other members;
/// ties go to the lexicographically smallest image id.
inline std::string representative_image(ClusterId cluster, const Clustering& clustering,
                                        const EmbeddingMatrix& embeddings) {
  const auto dense = clustering.dense_index(cluster);
  if (!dense) throw Error(ErrorCode::missing, "unknown cluster " + std::to_string(cluster));
  const auto& members = clustering.members()[*dense];
  if (members.size() == 1) return clustering.ids()[members[0]];

  std::vector<std::vector<double>> points;
  points.reserve(members.size());
  for (std::size_t h : members) {
    auto r = embeddings.find(clustering.ids()[h]);
    if (!r) throw Error(ErrorCode::missing, "no embedding for image " + clustering.ids()[h]);
    points.push_back(embeddings.row_f64(*r));
  }
  const std::size_t m = members.size();
  std::vector<double> dist(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      dist[i * m + j] = dist[j * m + i] = std::sqrt(squared_distance(points[i], points[j]));
    }
  }
  std::size_t best = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double s = pairwise_sum(std::span<const double>(dist.data() + i * m, m));
    const auto& id = clustering.ids()[members[i]];
    if (s < best_sum || (s == best_sum && id < clustering.ids()[members[best]])) {
      best_sum = s;
      best = i;
    }
  }
  return clustering.ids()[members[best]];
}

// ---------------------------------------------------------------------------
// Partition comparison

struct PartitionComparison {
  double nmi = 0.0;
  double ami = 0.0;
  double ari = 0.0;
};

namespace detail {

/// Relabels to 0..R-1 by first appearance.
template <typename Label>
std::vector<std::size_t> densify(std::span<const Label> labels, std::size_t& count) {
  std::unordered_map<Label, std::size_t> index;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = index.emplace(labels[i], index.size()).first->second;
  }
  count = index.size();
  return out;
}

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

/// Expected mutual information between two random partitions with the given
/// cluster sizes under the hypergeometric (permutation) model.
inline double expected_mutual_information(std::span<const std::size_t> sizes_a,
                                          std::span<const std::size_t> sizes_b, std::size_t n) {
  const auto lf = log_factorials(n);
  const double nd = static_cast<double>(n);
  // Cluster sizes repeat a lot; fold them into (size, multiplicity).
  auto fold = [](std::span<const std::size_t> sizes) {
    std::map<std::size_t, std::size_t> m;
    for (auto s : sizes) ++m[s];
    return std::vector<std::pair<std::size_t, std::size_t>>(m.begin(), m.end());
  };
  const auto fa = fold(sizes_a);
  const auto fb = fold(sizes_b);
  std::vector<double> terms;
  for (const auto& [a, mult_a] : fa) {
    for (const auto& [b, mult_b] : fb) {
      const std::size_t lo = std::max<std::size_t>(1, a + b > n ? a + b - n : 0);
      const std::size_t hi = std::min(a, b);
      double s = 0.0;
      const double base = lf[a] + lf[b] + lf[n - a] + lf[n - b] - lf[n];
      for (std::size_t nij = lo; nij <= hi; ++nij) {
        const double x = static_cast<double>(nij);
        const double log_p = base - lf[nij] - lf[a - nij] - lf[b - nij] - lf[n - a - b + nij];
        s += (x / nd) * std::log(nd * x / (static_cast<double>(a) * static_cast<double>(b))) * std::exp(log_p);
      }
      terms.push_back(s * static_cast<double>(mult_a * mult_b));
    }
  }
  return pairwise_sum(terms);
}

/// NMI (geometric-mean normalization), AMI (arithmetic-mean normalization,
/// hypergeometric expectation) and ARI for two label vectors over the same
/// items. When a denominator vanishes the score is 1 for identical
/// partitions and 0 otherwise.
template <typename LabelA, typename LabelB>
PartitionComparison compare_partitions(std::span<const LabelA> a, std::span<const LabelB> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::mismatch, "partitions cover different item counts");
  if (a.empty()) throw Error(ErrorCode::invalid_argument, "cannot compare empty partitions");
  std::size_t ra = 0, rb = 0;
  const auto la = detail::densify(a, ra);
  const auto lb = detail::densify(b, rb);
  const std::size_t n = a.size();
  const double nd = static_cast<double>(n);

  std::vector<std::size_t> size_a(ra, 0), size_b(rb, 0);
  std::unordered_map<std::uint64_t, std::size_t> cells;
  for (std::size_t i = 0; i < n; ++i) {
    ++size_a[la[i]];
    ++size_b[lb[i]];
    ++cells[static_cast<std::uint64_t>(la[i]) * rb + lb[i]];
  }

  // Identical up to relabeling: every cell is a whole row and a whole column.
  if (ra == rb && cells.size() == ra) return {1.0, 1.0, 1.0};

  const double ha = entropy_from_counts(size_a, nd);
  const double hb = entropy_from_counts(size_b, nd);
  std::vector<double> mi_terms;
  mi_terms.reserve(cells.size());
  double sum_cells = 0.0;
  for (const auto& [key, count] : cells) {
    const double c = static_cast<double>(count);
    const double ai = static_cast<double>(size_a[key / rb]);
    const double bj = static_cast<double>(size_b[key % rb]);
    mi_terms.push_back((c / nd) * std::log(nd * c / (ai * bj)));
    sum_cells += detail::choose2(c);
  }
  std::sort(mi_terms.begin(), mi_terms.end());
  const double mi = std::max(0.0, pairwise_sum(mi_terms));

  PartitionComparison out;
  const double nmi_den = std::sqrt(ha * hb);
  out.nmi = nmi_den > 0.0 ? std::clamp(mi / nmi_den, 0.0, 1.0) : 0.0;

  const double emi = expected_mutual_information(size_a, size_b, n);
  const double ami_den = 0.5 * (ha + hb) - emi;
  out.ami = ami_den != 0.0 ? std::min(1.0, (mi - emi) / ami_den) : 0.0;

  double sum_a = 0.0, sum_b = 0.0;
  for (auto s : size_a) sum_a += detail::choose2(static_cast<double>(s));
  for (auto s : size_b) sum_b += detail::choose2(static_cast<double>(s));
  const double pairs = detail::choose2(nd);
  const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
  const double ari_den = 0.5 * (sum_a + sum_b) - expected;
  out.ari = ari_den != 0.0 ? (sum_cells - expected) / ari_den : 0.0;
  return out;
}

/// Compares two clusterings over the same image-id set.
inline PartitionComparison compare_clusterings(const Clustering& a, const Clustering& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::mismatch, "clusterings cover different image sets");
  std::vector<int> lb(a.size());
  for (std::size_t h = 0; h < a.size(); ++h) {
    auto hb = b.handle(a.ids()[h]);
    if (!hb) throw Error(ErrorCode::mismatch, "image " + a.ids()[h] + " missing from second clustering");
    lb[h] = b.labels()[*hb];
  }
  return compare_partitions(std::span<const int>(a.labels()), std::span<const int>(lb));
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansOptions {
  std::size_t k = 8;
  std::uint64_t seed = 0;
  std::size_t max_iter = 300;
  double tol = 1e-6;
  bool normalize = false;  // L2-normalize rows first
};

struct KMeansResult {
  Clustering clustering;
  std::vector<std::vector<double>> centers;
  std::vector<double> inertia_history;  // after each assignment step
  std::size_t iterations = 0;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

/// Lloyd's algorithm on squared Euclidean distance with k-means++ seeding.
/// Cluster ids in the result are center indices 0..k-1.
inline KMeansResult kmeans(const EmbeddingMatrix& embeddings, const KMeansOptions& opt) {
  const std::size_t n = embeddings.rows();
  const std::size_t dim = embeddings.dim();
  if (opt.k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
  if (opt.k > n) {
    throw Error(ErrorCode::invalid_argument,
                "k = " + std::to_string(opt.k) + " exceeds the number of rows " + std::to_string(n));
  }
  std::vector<std::vector<double>> points(n);
  for (std::size_t i = 0; i < n; ++i) {
    points[i] = embeddings.row_f64(i);
    if (opt.normalize) {
      const double norm = std::sqrt(dot(points[i], points[i]));
      if (norm > 0.0) {
        for (auto& v : points[i]) v /= norm;
      }
    }
  }

  Xoshiro256ss rng(opt.seed);
  std::vector<std::vector<double>> centers;
  centers.reserve(opt.k);
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  auto add_center = [&](std::size_t idx) {
    chosen[idx] = 1;
    centers.push_back(points[idx]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
  };
  add_center(rng.uniform_index(n));
  while (centers.size() < opt.k) {
    const double total = pairwise_sum(d2);
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && target < acc) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Remaining points coincide with centers: pick uniformly among unchosen.
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) free.push_back(i);
      }
      pick = free[rng.uniform_index(free.size())];
    }
    add_center(pick);
  }

  KMeansResult result;
  std::vector<int> assign(n, 0);
  std::vector<double> dist(n, 0.0);
  auto assign_step = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = squared_distance(points[i], centers[c]);
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      assign[i] = best_c;
      dist[i] = best;
    }
  };
  auto repair_empty = [&] {
    std::vector<std::size_t> counts(opt.k, 0);
    for (int c : assign) ++counts[c];
    for (std::size_t c = 0; c < opt.k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] > 1 && (far == n || dist[i] > dist[far])) far = i;
      }
      if (far == n) break;
      --counts[assign[far]];
      assign[far] = static_cast<int>(c);
      ++counts[c];
      centers[c] = points[far];
      dist[far] = 0.0;
    }
  };
  auto update_step = [&] {
    std::vector<double> column;
    for (std::size_t c = 0; c < opt.k; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] == static_cast<int>(c)) members.push_back(i);
      }
      if (members.empty()) continue;
      column.resize(members.size());
      for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t m = 0; m < members.size(); ++m) column[m] = points[members[m]][j];
        centers[c][j] = pairwise_sum(column) / static_cast<double>(members.size());
      }
    }
  };

  for (std::size_t iter = 0; iter < std::max<std::size_t>(opt.max_iter, 1); ++iter) {
    assign_step();
    repair_empty();
    const double inertia = pairwise_sum(dist);
    result.inertia_history.push_back(inertia);
    result.iterations = iter + 1;
    update_step();
    if (result.inertia_history.size() >= 2) {
      const double prev = result.inertia_history[result.inertia_history.size() - 2];
      if (prev <= 0.0 || (prev - inertia) / prev < opt.tol) break;
    } else if (inertia == 0.0) {
      break;
    }
  }
  // Final assignment against the last centers keeps labels consistent with them.
  assign_step();
  repair_empty();
  result.inertia_history.push_back(pairwise_sum(dist));

  std::vector<std::pair<std::string, ClusterId>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = {embeddings.ids()[i], assign[i]};
  result.clustering = Clustering::from_assignment(rows);
  result.centers = std::move(centers);
  return result;
}

}  // namespace semcoh
