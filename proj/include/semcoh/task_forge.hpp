#pragma once

// Deterministic generation of forced-choice HITs. Every draw comes from a
// per-class xoshiro256** stream derived from (seed, class id), so a task set
// is a pure function of its inputs.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "semcoh/captioner.hpp"
#include "semcoh/cluster_metrics.hpp"
#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/prng.hpp"

namespace semcoh {

enum class NegativeMode { random, hard };
enum class TaskMode { learnability, describability, rating };

inline const char* to_string(NegativeMode m) { return m == NegativeMode::hard ? "hard" : "random"; }

inline const char* to_string(TaskMode m) {
  switch (m) {
    case TaskMode::learnability: return "learnability";
    case TaskMode::describability: return "describability";
    case TaskMode::rating: return "rating";
  }
  return "?";
}

inline NegativeMode parse_negative_mode(std::string_view s) {
  if (s == "random") return NegativeMode::random;
  if (s == "hard") return NegativeMode::hard;
  throw Error(ErrorCode::invalid_argument, "unknown negative mode '" + std::string(s) + "'");
}

inline TaskMode parse_task_mode(std::string_view s) {
  if (s == "learnability") return TaskMode::learnability;
  if (s == "describability") return TaskMode::describability;
  if (s == "rating") return TaskMode::rating;
  throw Error(ErrorCode::invalid_argument, "unknown task mode '" + std::string(s) + "'");
}

struct StudyConfig {
  std::string study_id = "study";
  std::size_t reference_size = 10;
  std::size_t hits_per_class = 20;
  std::size_t annotators_per_hit = 3;
  NegativeMode negative_mode = NegativeMode::random;
  std::vector<ClusterId> selected_classes;
  std::uint64_t seed = 0;
  /// Answers per worker, class and UTC day; describability defaults to 1.
  std::optional<std::size_t> rate_limit_per_class_per_day;

  void validate() const {
    if (reference_size < 1) throw Error(ErrorCode::invalid_argument, "reference_size must be >= 1");
    if (hits_per_class < 1) throw Error(ErrorCode::invalid_argument, "hits_per_class must be >= 1");
    if (annotators_per_hit < 1) throw Error(ErrorCode::invalid_argument, "annotators_per_hit must be >= 1");
    if (rate_limit_per_class_per_day && *rate_limit_per_class_per_day < 1) {
      throw Error(ErrorCode::invalid_argument, "rate limit must be >= 1");
    }
  }

  friend bool operator==(const StudyConfig&, const StudyConfig&) = default;
};

inline json to_json(const StudyConfig& c) {
  return {{"study_id", c.study_id},
          {"reference_size", c.reference_size},
          {"hits_per_class", c.hits_per_class},
          {"annotators_per_hit", c.annotators_per_hit},
          {"negative_mode", to_string(c.negative_mode)},
          {"selected_classes", c.selected_classes},
          {"seed", c.seed},
          {"rate_limit_per_class_per_day",
           c.rate_limit_per_class_per_day ? json(*c.rate_limit_per_class_per_day) : json(nullptr)}};
}

inline StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  c.study_id = j.at("study_id").get<std::string>();
  c.reference_size = j.at("reference_size").get<std::size_t>();
  c.hits_per_class = j.at("hits_per_class").get<std::size_t>();
  c.annotators_per_hit = j.at("annotators_per_hit").get<std::size_t>();
  c.negative_mode = parse_negative_mode(j.at("negative_mode").get<std::string>());
  c.selected_classes = j.at("selected_classes").get<std::vector<ClusterId>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("rate_limit_per_class_per_day") && !j["rate_limit_per_class_per_day"].is_null()) {
    c.rate_limit_per_class_per_day = j["rate_limit_per_class_per_day"].get<std::size_t>();
  }
  return c;
}

struct Task {
  std::string hit_id;
  ClusterId class_id = 0;
  TaskMode mode = TaskMode::learnability;
  std::vector<std::string> reference_images;  // learnability and rating
  std::string description;                    // describability and rating
  std::string query_a;
  std::string query_b;
  int z = 0;  // 0: query_a is the positive, 1: query_b is
  std::optional<ClusterId> negative_source;  // nullopt: background

  bool forced_choice() const noexcept { return mode != TaskMode::rating; }
  const std::string& positive() const noexcept { return z == 0 ? query_a : query_b; }
  const std::string& negative() const noexcept { return z == 0 ? query_b : query_a; }

  friend bool operator==(const Task&, const Task&) = default;
};

/// JSON for one task. The public form omits z.
inline json to_json(const Task& t, bool include_z) {
  json out{{"hit_id", t.hit_id}, {"class_id", t.class_id}, {"mode", to_string(t.mode)}};
  if (t.mode != TaskMode::describability) out["reference"] = t.reference_images;
  if (t.mode != TaskMode::learnability) out["description"] = t.description;
  if (t.forced_choice()) {
    out["query_a"] = t.query_a;
    out["query_b"] = t.query_b;
    if (include_z) {
      out["z"] = t.z;
      out["negative_source"] = t.negative_source ? json(*t.negative_source) : json("background");
    }
  }
  return out;
}

inline Task task_from_json(const json& j) {
  Task t;
  t.hit_id = j.at("hit_id").get<std::string>();
  t.class_id = j.at("class_id").get<ClusterId>();
  t.mode = parse_task_mode(j.at("mode").get<std::string>());
  if (j.contains("reference")) t.reference_images = j["reference"].get<std::vector<std::string>>();
  if (j.contains("description")) t.description = j["description"].get<std::string>();
  if (t.forced_choice()) {
    t.query_a = j.at("query_a").get<std::string>();
    t.query_b = j.at("query_b").get<std::string>();
    if (!j.contains("z")) throw Error(ErrorCode::parse, "task " + t.hit_id + " has no z (public task file?)");
    t.z = j["z"].get<int>();
    if (t.z != 0 && t.z != 1) throw Error(ErrorCode::parse, "task " + t.hit_id + " has z outside {0,1}");
    const auto& src = j.at("negative_source");
    if (!src.is_string()) t.negative_source = src.get<ClusterId>();
  }
  return t;
}

struct Exclusion {
  ClusterId class_id = 0;
  std::string reason;

  friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

struct TaskSet {
  TaskMode mode = TaskMode::learnability;
  StudyConfig config;
  std::vector<Task> tasks;
  std::vector<Exclusion> exclusions;

  const Task* find(std::string_view hit_id) const {
    for (const auto& t : tasks) {
      if (t.hit_id == hit_id) return &t;
    }
    return nullptr;
  }

  friend bool operator==(const TaskSet&, const TaskSet&) = default;
};

/// JSONL: a header line (mode, config, exclusions) then one task per line.
inline std::string serialize_taskset(const TaskSet& ts, bool include_z) {
  json header{{"kind", "taskset"}, {"mode", to_string(ts.mode)}, {"config", to_json(ts.config)}};
  header["exclusions"] = json::array();
  for (const auto& e : ts.exclusions) header["exclusions"].push_back({{"class_id", e.class_id}, {"reason", e.reason}});
  header["public"] = !include_z;
  std::string out = header.dump() + "\n";
  for (const auto& t : ts.tasks) out += to_json(t, include_z).dump() + "\n";
  return out;
}

inline void write_taskset(const fs::path& path, const TaskSet& ts, bool include_z = true) {
  auto out = detail::open_output(path, std::ios::binary);
  out << serialize_taskset(ts, include_z);
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

inline TaskSet load_taskset(const fs::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw Error(ErrorCode::parse, path.string() + ": empty task file");
  TaskSet ts;
  try {
    const auto header = json::parse(lines[0]);
    if (header.value("kind", "") != "taskset") throw Error(ErrorCode::parse, path.string() + ": missing header");
    if (header.value("public", false)) {
      throw Error(ErrorCode::invalid_argument, path.string() + ": public task file carries no answers");
    }
    ts.mode = parse_task_mode(header.at("mode").get<std::string>());
    ts.config = study_config_from_json(header.at("config"));
    for (const auto& e : header.at("exclusions")) {
      ts.exclusions.push_back({e.at("class_id").get<ClusterId>(), e.at("reason").get<std::string>()});
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (detail::trim(lines[i]).empty()) continue;
      ts.tasks.push_back(task_from_json(json::parse(lines[i])));
      if (!seen.insert(ts.tasks.back().hit_id).second) {
        throw Error(ErrorCode::duplicate_id, detail::location(path, i + 1) + ": duplicate hit id");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
  return ts;
}

namespace detail {

inline std::string hit_id(const char* prefix, ClusterId cls, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%lld-%03zu", prefix, static_cast<long long>(cls), index);
  return buf;
}

/// Moves a uniform sample of `count` items to the front (partial Fisher-Yates).
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t count, Xoshiro256ss& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(items.size() - i);
    std::swap(items[i], items[j]);
  }
}

inline std::uint64_t class_stream_id(ClusterId cls, std::uint64_t salt) {
  return static_cast<std::uint64_t>(cls) ^ (salt << 56);
}

inline void require_classes(const Clustering& clustering, const StudyConfig& cfg) {
  cfg.validate();
  if (cfg.selected_classes.empty()) throw Error(ErrorCode::invalid_argument, "empty selected-class list");
  std::set<ClusterId> seen;
  for (auto c : cfg.selected_classes) {
    if (!clustering.dense_index(c)) throw Error(ErrorCode::missing, "selected class " + std::to_string(c) + " not in clustering");
    if (!seen.insert(c).second) throw Error(ErrorCode::duplicate_id, "class " + std::to_string(c) + " selected twice");
  }
}

}  // namespace detail

/// Per HIT: M reference images without replacement, one positive from the
/// rest of the class, one negative (background or hard-negative class), and
/// a fair coin for the query order. Classes with fewer than M + 1 members
/// are excluded and reported.
inline TaskSet build_learnability_tasks(const Clustering& clustering, const StudyConfig& cfg,
                                        const CentroidMap* centroids = nullptr) {
  detail::require_classes(clustering, cfg);
  if (cfg.negative_mode == NegativeMode::hard) {
    if (clustering.num_clusters() < 2) throw Error(ErrorCode::invalid_argument, "hard negatives need K >= 2");
    if (!centroids) throw Error(ErrorCode::missing, "hard negative mode needs a centroid map");
  }
  TaskSet ts;
  ts.mode = TaskMode::learnability;
  ts.config = cfg;
  const std::size_t m = cfg.reference_size;
  for (ClusterId cls : cfg.selected_classes) {
    const int dense = *clustering.dense_index(cls);
    const auto& members = clustering.members()[dense];
    if (members.size() < m + 1) {
      ts.exclusions.push_back({cls, "class has " + std::to_string(members.size()) + " images, needs at least " +
                                        std::to_string(m + 1)});
      continue;
    }
    std::vector<std::size_t> negatives;
    std::optional<ClusterId> negative_source;
    if (cfg.negative_mode == NegativeMode::hard) {
      negative_source = centroids->hard_negative_of(cls);
      if (!negative_source) throw Error(ErrorCode::missing, "no hard negative for class " + std::to_string(cls));
      const auto nd = clustering.dense_index(*negative_source);
      if (!nd || *nd == dense) throw Error(ErrorCode::mismatch, "centroid map does not match the clustering");
      negatives = clustering.members()[*nd];
    } else {
      negatives.reserve(clustering.size() - members.size());
      for (std::size_t h = 0; h < clustering.size(); ++h) {
        if (clustering.labels()[h] != dense) negatives.push_back(h);
      }
      if (negatives.empty()) throw Error(ErrorCode::invalid_argument, "no background images outside class " + std::to_string(cls));
    }

    auto rng = Xoshiro256ss::stream(cfg.seed, detail::class_stream_id(cls, 0));
    std::vector<std::size_t> pool = members;
    for (std::size_t h = 0; h < cfg.hits_per_class; ++h) {
      // Each HIT samples from the class afresh; earlier shuffles only
      // permute the pool.
      detail::partial_shuffle(pool, m, rng);
      Task t;
      t.hit_id = detail::hit_id("learn", cls, h);
      t.class_id = cls;
      t.mode = TaskMode::learnability;
      t.reference_images.reserve(m);
      for (std::size_t i = 0; i < m; ++i) t.reference_images.push_back(clustering.ids()[pool[i]]);
      const std::size_t pos = pool[m + rng.uniform_index(pool.size() - m)];
      const std::size_t neg = negatives[rng.uniform_index(negatives.size())];
      t.z = rng.bernoulli_half();
      t.query_a = clustering.ids()[t.z == 0 ? pos : neg];
      t.query_b = clustering.ids()[t.z == 0 ? neg : pos];
      t.negative_source = negative_source;
      ts.tasks.push_back(std::move(t));
    }
  }
  return ts;
}

/// Same HITs with the reference images replaced by the class description.
inline TaskSet derive_describability_tasks(const TaskSet& learnability, const DescriptionSet& descriptions) {
  if (learnability.mode != TaskMode::learnability) {
    throw Error(ErrorCode::invalid_argument, "describability tasks derive from a learnability task set");
  }
  TaskSet ts;
  ts.mode = TaskMode::describability;
  ts.config = learnability.config;
  if (!ts.config.rate_limit_per_class_per_day) ts.config.rate_limit_per_class_per_day = 1;
  ts.exclusions = learnability.exclusions;
  for (const auto& src : learnability.tasks) {
    const auto* d = descriptions.find(src.class_id);
    if (!d) throw Error(ErrorCode::missing, "no description for class " + std::to_string(src.class_id));
    Task t = src;
    t.hit_id = src.hit_id + "-desc";
    t.mode = TaskMode::describability;
    t.reference_images.clear();
    t.description = d->text;
    ts.tasks.push_back(std::move(t));
  }
  return ts;
}

/// One caption-quality task per selected class: a seeded sample of up to M
/// member images plus the description. Answers are a 1-5 Likert score and
/// whether the caption suits at least one image.
inline TaskSet build_rating_tasks(const Clustering& clustering, const DescriptionSet& descriptions,
                                  const StudyConfig& cfg) {
  detail::require_classes(clustering, cfg);
  TaskSet ts;
  ts.mode = TaskMode::rating;
  ts.config = cfg;
  for (ClusterId cls : cfg.selected_classes) {
    const auto* d = descriptions.find(cls);
    if (!d) throw Error(ErrorCode::missing, "no description for class " + std::to_string(cls));
    std::vector<std::size_t> pool = clustering.members()[*clustering.dense_index(cls)];
    const std::size_t count = std::min(cfg.reference_size, pool.size());
    auto rng = Xoshiro256ss::stream(cfg.seed, detail::class_stream_id(cls, 1));
    detail::partial_shuffle(pool, count, rng);
    Task t;
    t.hit_id = detail::hit_id("rate", cls, 0);
    t.class_id = cls;
    t.mode = TaskMode::rating;
    for (std::size_t i = 0; i < count; ++i) t.reference_images.push_back(clustering.ids()[pool[i]]);
    t.description = d->text;
    ts.tasks.push_back(std::move(t));
  }
  return ts;
}

}  // namespace semcoh
