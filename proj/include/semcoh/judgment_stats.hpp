#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "semcoh/cluster_metrics.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/numeric.hpp"
#include "semcoh/prng.hpp"
#include "semcoh/task_forge.hpp"

namespace semcoh {

// ---------------------------------------------------------------------------
// Responses

struct Response {
  std::string hit_id;
  std::string worker;
  std::string chosen_query;  // forced-choice modes
  std::string received_at;   // ISO-8601 UTC, e.g. 2024-05-01T12:00:00Z
  std::string client_ts;
  std::optional<int> likert;          // rating mode, 1..5
  std::optional<bool> at_least_one;   // rating mode

  friend bool operator==(const Response&, const Response&) = default;
};

inline json to_json(const Response& r) {
  json out{{"kind", "response"}, {"hit_id", r.hit_id}, {"worker", r.worker}};
  if (!r.chosen_query.empty()) out["chosen_query"] = r.chosen_query;
  if (r.likert) out["likert"] = *r.likert;
  if (r.at_least_one) out["at_least_one"] = *r.at_least_one;
  if (!r.client_ts.empty()) out["client_ts"] = r.client_ts;
  out["received_at"] = r.received_at;
  return out;
}

inline Response response_from_json(const json& j) {
  Response r;
  r.hit_id = j.at("hit_id").get<std::string>();
  r.worker = j.at("worker").get<std::string>();
  r.chosen_query = j.value("chosen_query", std::string());
  r.received_at = j.value("received_at", std::string());
  r.client_ts = j.value("client_ts", std::string());
  if (j.contains("likert") && !j["likert"].is_null()) r.likert = j["likert"].get<int>();
  if (j.contains("at_least_one") && !j["at_least_one"].is_null()) r.at_least_one = j["at_least_one"].get<bool>();
  return r;
}

/// UTC calendar date (YYYY-MM-DD) of an ISO-8601 timestamp.
inline std::string utc_day(const std::string& timestamp) { return timestamp.substr(0, 10); }

inline std::string format_utc(std::int64_t epoch_seconds) {
  const std::time_t t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Checks a response against its task; throws invalid_choice.
inline void validate_response(const Task& task, const Response& r) {
  if (r.worker.empty()) throw Error(ErrorCode::invalid_argument, "empty worker id");
  if (task.forced_choice()) {
    if (r.chosen_query != task.query_a && r.chosen_query != task.query_b) {
      throw Error(ErrorCode::invalid_choice, "choice '" + r.chosen_query + "' is not a query of " + task.hit_id);
    }
  } else {
    if (!r.likert || *r.likert < 1 || *r.likert > 5) {
      throw Error(ErrorCode::invalid_choice, "likert rating must be in 1..5 for " + task.hit_id);
    }
    if (!r.at_least_one) throw Error(ErrorCode::invalid_choice, "missing at_least_one answer for " + task.hit_id);
  }
}

// ---------------------------------------------------------------------------
// Scoring

struct ClassCounts {
  std::size_t k = 0;  // correct
  std::size_t n = 0;  // answered
};

/// One HIT's recorded values: (worker, chosen query) in log order.
struct AnswerUnit {
  std::string hit_id;
  std::vector<std::pair<std::string, std::string>> values;
};

struct RatingCounts {
  std::size_t n = 0;
  std::size_t likert_sum = 0;
  std::size_t at_least_one = 0;
};

struct Scoring {
  std::map<ClusterId, ClassCounts> counts;
  std::map<ClusterId, std::vector<AnswerUnit>> units;  // forced-choice HITs per class
  std::map<ClusterId, RatingCounts> ratings;
  std::size_t duplicates = 0;   // repeated (hit, worker) pairs, ignored
  std::size_t over_target = 0;  // answers beyond annotators_per_hit
};

struct ScoreOptions {
  /// Ignore answers beyond the replication target (in log order).
  bool exclude_over_target = true;
};

/// A response counts as correct iff it picks the HIT's positive query.
/// Unknown HITs and invalid choices are errors.
inline Scoring score_responses(const TaskSet& ts, const std::vector<Response>& responses,
                               const ScoreOptions& opt = {}) {
  Scoring s;
  std::unordered_map<std::string, std::size_t> task_index;
  for (std::size_t i = 0; i < ts.tasks.size(); ++i) {
    const auto& t = ts.tasks[i];
    task_index.emplace(t.hit_id, i);
    if (t.forced_choice()) {
      s.counts[t.class_id];
      s.units[t.class_id];
    } else {
      s.ratings[t.class_id];
    }
  }
  std::vector<std::size_t> per_task(ts.tasks.size(), 0);
  std::vector<std::size_t> unit_of(ts.tasks.size(), SIZE_MAX);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : responses) {
    auto it = task_index.find(r.hit_id);
    if (it == task_index.end()) throw Error(ErrorCode::unknown_hit, "response for unknown hit " + r.hit_id);
    const auto& task = ts.tasks[it->second];
    validate_response(task, r);
    if (!seen.emplace(r.hit_id, r.worker).second) {
      ++s.duplicates;
      continue;
    }
    if (opt.exclude_over_target && per_task[it->second] >= ts.config.annotators_per_hit) {
      ++s.over_target;
      continue;
    }
    ++per_task[it->second];
    if (task.forced_choice()) {
      auto& c = s.counts[task.class_id];
      ++c.n;
      if (r.chosen_query == task.positive()) ++c.k;
      auto& units = s.units[task.class_id];
      if (unit_of[it->second] == SIZE_MAX) {
        unit_of[it->second] = units.size();
        units.push_back({task.hit_id, {}});
      }
      units[unit_of[it->second]].values.emplace_back(r.worker, r.chosen_query);
    } else {
      auto& rc = s.ratings[task.class_id];
      ++rc.n;
      rc.likert_sum += static_cast<std::size_t>(*r.likert);
      rc.at_least_one += *r.at_least_one ? 1 : 0;
    }
  }
  // Unit order independent of response order.
  for (auto& [_, units] : s.units) {
    std::sort(units.begin(), units.end(), [](const auto& a, const auto& b) { return a.hit_id < b.hit_id; });
  }
  return s;
}

// ---------------------------------------------------------------------------
// Clopper-Pearson

/// Regularized incomplete beta I_x(a, b): continued fraction (modified
/// Lentz) with the symmetry transform, at most 300 iterations, eps 1e-14.
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-14;
  constexpr double kTiny = 1e-300;
  auto continued_fraction = [&](double a_, double b_, double x_) {
    const double qab = a_ + b_, qap = a_ + 1.0, qam = a_ - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x_ / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
      const double m2 = 2.0 * m;
      double aa = m * (b_ - m) * x_ / ((qam + m2) * (a_ + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < kTiny) d = kTiny;
      c = 1.0 + aa / c;
      if (std::fabs(c) < kTiny) c = kTiny;
      d = 1.0 / d;
      h *= d * c;
      aa = -(a_ + m) * (qab + m) * x_ / ((a_ + m2) * (qap + m2));
      d = 1.0 + aa * d;
      if (std::fabs(d) < kTiny) d = kTiny;
      c = 1.0 + aa / c;
      if (std::fabs(c) < kTiny) c = kTiny;
      d = 1.0 / d;
      const double del = d * c;
      h *= del;
      if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
  };
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * continued_fraction(a, b, x) / a;
  return 1.0 - front * continued_fraction(b, a, 1.0 - x) / b;
}

/// x with I_x(a, b) = p, by bisection to absolute width 1e-10.
inline double beta_quantile(double a, double b, double p) {
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (regularized_incomplete_beta(a, b, mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact binomial interval for k successes out of n trials.
inline Interval clopper_pearson(std::size_t k, std::size_t n, double level = 0.95) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "clopper_pearson needs n >= 1");
  if (k > n) throw Error(ErrorCode::invalid_argument, "clopper_pearson needs k <= n");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::invalid_argument, "level must be in (0,1)");
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  const double p_hat = kd / nd;
  Interval iv;
  iv.lo = k == 0 ? 0.0 : std::min(p_hat, beta_quantile(kd, nd - kd + 1.0, (1.0 - level) / 2.0));
  iv.hi = k == n ? 1.0 : std::max(p_hat, beta_quantile(kd + 1.0, nd - kd, (1.0 + level) / 2.0));
  return iv;
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha (nominal)

struct AlphaResult {
  double alpha = 1.0;
  bool degenerate = false;  // expected disagreement is zero
  std::size_t pairable = 0;
};

/// Coincidence-matrix alpha for nominal values; each unit lists the values it
/// received (missing entries are simply absent). Units with a single value
/// are not pairable.
inline AlphaResult krippendorff_alpha(const std::vector<std::vector<std::string>>& units) {
  std::map<std::string, double> value_totals;
  double observed = 0.0;  // sum over c != k of o_ck
  double n = 0.0;
  for (const auto& unit : units) {
    if (unit.size() < 2) continue;
    std::map<std::string, double> counts;
    for (const auto& v : unit) counts[v] += 1.0;
    const double m = static_cast<double>(unit.size());
    double same = 0.0;
    for (const auto& [v, c] : counts) {
      same += c * c;
      value_totals[v] += c;
    }
    observed += (m * m - same) / (m - 1.0);
    n += m;
  }
  AlphaResult res;
  res.pairable = static_cast<std::size_t>(n);
  if (n < 2.0) throw Error(ErrorCode::invalid_argument, "krippendorff_alpha needs at least 2 pairable values");
  double same_total = 0.0;
  for (const auto& [_, c] : value_totals) same_total += c * c;
  const double expected = n * n - same_total;  // sum over c != k of n_c n_k
  if (expected == 0.0) {
    res.degenerate = true;
    res.alpha = 1.0;
    return res;
  }
  res.alpha = 1.0 - (n - 1.0) * observed / expected;
  return res;
}

/// Values of a set of answer units in the form krippendorff_alpha expects.
inline std::vector<std::vector<std::string>> unit_values(const std::vector<AnswerUnit>& units) {
  std::vector<std::vector<std::string>> out;
  out.reserve(units.size());
  for (const auto& u : units) {
    std::vector<std::string> values;
    for (const auto& [_, v] : u.values) values.push_back(v);
    out.push_back(std::move(values));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-class statistics and purity binning

struct ClassStats {
  ClusterId class_id = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  std::optional<double> coherence;
  std::optional<Interval> ci;
  std::optional<AlphaResult> alpha;
};

inline std::vector<ClassStats> class_statistics(const Scoring& s) {
  std::vector<ClassStats> out;
  for (const auto& [cls, c] : s.counts) {
    ClassStats st;
    st.class_id = cls;
    st.n = c.n;
    st.k = c.k;
    if (c.n > 0) {
      st.coherence = static_cast<double>(c.k) / static_cast<double>(c.n);
      st.ci = clopper_pearson(c.k, c.n);
    }
    try {
      st.alpha = krippendorff_alpha(unit_values(s.units.at(cls)));
    } catch (const Error&) {
      // fewer than two pairable values
    }
    out.push_back(st);
  }
  return out;
}

struct AggregateRow {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t classes = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::optional<double> mean_coherence;
  std::optional<Interval> pooled_ci;
  std::optional<double> mean_alpha;
};

/// Bins classes by purity: [e0,e1), ..., [e_{m-1}, e_m], the last bin closed.
/// Edges must start at 0, end at 1 and increase strictly.
inline std::vector<AggregateRow> aggregate_by_purity(const std::vector<ClassStats>& stats,
                                                     const PurityReport& purity,
                                                     const std::vector<double>& edges) {
  if (edges.size() < 2 || edges.front() != 0.0 || edges.back() != 1.0) {
    throw Error(ErrorCode::invalid_argument, "bin edges must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw Error(ErrorCode::invalid_argument, "bin edges must increase strictly");
  }
  const std::size_t bins = edges.size() - 1;
  std::vector<AggregateRow> rows(bins);
  std::vector<std::vector<double>> coh(bins), alphas(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    rows[b].lo = edges[b];
    rows[b].hi = edges[b + 1];
  }
  for (const auto& st : stats) {
    const auto* p = purity.find(st.class_id);
    if (!p || !p->purity) {
      throw Error(ErrorCode::missing, "no purity value for class " + std::to_string(st.class_id));
    }
    const double v = *p->purity;
    std::size_t b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
    b = b == 0 ? 0 : std::min(b - 1, bins - 1);
    auto& row = rows[b];
    ++row.classes;
    row.k += st.k;
    row.n += st.n;
    if (st.coherence) coh[b].push_back(*st.coherence);
    if (st.alpha) alphas[b].push_back(st.alpha->alpha);
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (!coh[b].empty()) rows[b].mean_coherence = pairwise_sum(coh[b]) / static_cast<double>(coh[b].size());
    if (rows[b].n > 0) rows[b].pooled_ci = clopper_pearson(rows[b].k, rows[b].n);
    if (!alphas[b].empty()) rows[b].mean_alpha = pairwise_sum(alphas[b]) / static_cast<double>(alphas[b].size());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Synthetic annotators

/// Worker "sim-<j>" answers every forced-choice HIT, choosing the positive
/// with probability p. Rating tasks are skipped. Receipt times advance one
/// UTC day per HIT so per-day limits hold.
inline std::vector<Response> simulate_annotators(const TaskSet& ts, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::invalid_argument, "accuracy p must be in [0,1]");
  constexpr std::int64_t kEpoch = 946684800;  // 2000-01-01T00:00:00Z
  Xoshiro256ss rng(seed);
  std::vector<Response> out;
  for (std::size_t i = 0; i < ts.tasks.size(); ++i) {
    const auto& t = ts.tasks[i];
    if (!t.forced_choice()) continue;
    for (std::size_t w = 0; w < ts.config.annotators_per_hit; ++w) {
      Response r;
      r.hit_id = t.hit_id;
      r.worker = "sim-" + std::to_string(w);
      r.chosen_query = rng.uniform01() < p ? t.positive() : t.negative();
      r.received_at = format_utc(kEpoch + static_cast<std::int64_t>(i) * 86400 + static_cast<std::int64_t>(w));
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {

inline json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

/// The `score` report: per-class coherence, exact intervals and agreement,
/// plus pooled values. Deterministic for a given multiset of responses
/// (given the first-come rule for duplicates and over-target answers).
inline json make_score_report(const TaskSet& ts, const std::vector<Response>& responses) {
  const auto scoring = score_responses(ts, responses);
  const auto stats = class_statistics(scoring);
  json report;
  report["mode"] = to_string(ts.mode);
  report["study_id"] = ts.config.study_id;
  report["responses"] = responses.size();
  report["duplicates_ignored"] = scoring.duplicates;
  report["over_target_ignored"] = scoring.over_target;
  report["classes"] = json::array();
  std::size_t total_k = 0, total_n = 0;
  std::vector<double> alphas;
  std::vector<std::vector<std::string>> all_units;
  for (const auto& st : stats) {
    json row{{"class_id", st.class_id}, {"n", st.n}, {"k", st.k}, {"coherence", detail::opt_number(st.coherence)}};
    row["ci_low"] = st.ci ? json(st.ci->lo) : json(nullptr);
    row["ci_high"] = st.ci ? json(st.ci->hi) : json(nullptr);
    row["alpha"] = st.alpha ? json(st.alpha->alpha) : json(nullptr);
    row["alpha_degenerate"] = st.alpha ? json(st.alpha->degenerate) : json(nullptr);
    report["classes"].push_back(row);
    total_k += st.k;
    total_n += st.n;
    if (st.alpha) alphas.push_back(st.alpha->alpha);
    for (auto& u : unit_values(scoring.units.at(st.class_id))) all_units.push_back(std::move(u));
  }
  json overall{{"n", total_n}, {"k", total_k}};
  if (total_n > 0) {
    const auto ci = clopper_pearson(total_k, total_n);
    overall["coherence"] = static_cast<double>(total_k) / static_cast<double>(total_n);
    overall["ci_low"] = ci.lo;
    overall["ci_high"] = ci.hi;
  } else {
    overall["coherence"] = overall["ci_low"] = overall["ci_high"] = nullptr;
  }
  try {
    const auto pooled = krippendorff_alpha(all_units);
    overall["alpha_pooled"] = pooled.alpha;
  } catch (const Error&) {
    overall["alpha_pooled"] = nullptr;
  }
  overall["alpha_mean"] = alphas.empty() ? json(nullptr) : json(pairwise_sum(alphas) / static_cast<double>(alphas.size()));
  report["overall"] = overall;
  if (!scoring.ratings.empty()) {
    report["ratings"] = json::array();
    for (const auto& [cls, rc] : scoring.ratings) {
      json row{{"class_id", cls}, {"n", rc.n}};
      row["likert_mean"] = rc.n ? json(static_cast<double>(rc.likert_sum) / static_cast<double>(rc.n)) : json(nullptr);
      row["at_least_one_fraction"] =
          rc.n ? json(static_cast<double>(rc.at_least_one) / static_cast<double>(rc.n)) : json(nullptr);
      report["ratings"].push_back(row);
    }
  }
  return report;
}

inline json to_json(const AggregateRow& r) {
  return {{"lo", r.lo},
          {"hi", r.hi},
          {"classes", r.classes},
          {"n", r.n},
          {"k", r.k},
          {"mean_coherence", detail::opt_number(r.mean_coherence)},
          {"ci_low", r.pooled_ci ? json(r.pooled_ci->lo) : json(nullptr)},
          {"ci_high", r.pooled_ci ? json(r.pooled_ci->hi) : json(nullptr)},
          {"mean_alpha", detail::opt_number(r.mean_alpha)}};
}

}  // namespace semcoh
