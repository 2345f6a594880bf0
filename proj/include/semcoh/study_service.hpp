#pragma once

// Local study service: assigns HITs to annotators, enforces the replication
// target and the per-class daily limit, and records answers in an
// append-only, fsynced JSONL log that is replayed on restart.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "httplib.h"
#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"
#include "semcoh/judgment_stats.hpp"
#include "semcoh/provenance.hpp"
#include "semcoh/task_forge.hpp"

namespace semcoh {

// ---------------------------------------------------------------------------
// Response log

struct LogContents {
  json header;
  std::vector<Response> responses;
  std::uint64_t valid_bytes = 0;  // length of the intact prefix
};

/// Reads a log. A final line without a newline or that fails to parse is a
/// torn write from a crash and is dropped; damage anywhere else is an error.
inline LogContents read_log(const fs::path& path) {
  auto in = detail::open_input(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  LogContents out;
  std::size_t pos = 0;
  bool first = true;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail
    const std::string_view line(data.data() + pos, nl - pos);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      if (data.find('\n', nl + 1) == std::string::npos && nl + 1 >= data.size()) break;
      throw Error(ErrorCode::parse, path.string() + ": corrupt log record at byte " + std::to_string(pos));
    }
    if (first) {
      if (j.value("kind", "") != "header") throw Error(ErrorCode::parse, path.string() + ": missing log header");
      out.header = std::move(j);
      first = false;
    } else {
      out.responses.push_back(response_from_json(j));
    }
    pos = nl + 1;
    out.valid_bytes = pos;
  }
  if (first) throw Error(ErrorCode::parse, path.string() + ": missing log header");
  return out;
}

inline json log_header(const TaskSet& ts) {
  return {{"kind", "header"},
          {"study_id", ts.config.study_id},
          {"mode", to_string(ts.mode)},
          {"taskset_sha256", sha256_hex(serialize_taskset(ts, true))},
          {"annotators_per_hit", ts.config.annotators_per_hit}};
}

/// Writes a complete log in one pass (offline producers such as `simulate`).
inline void write_log(const fs::path& path, const json& header, const std::vector<Response>& responses) {
  auto out = detail::open_output(path, std::ios::binary);
  out << header.dump() << '\n';
  for (const auto& r : responses) out << to_json(r).dump() << '\n';
  if (!out) throw Error(ErrorCode::io, "write failed: " + path.string());
}

/// Append-only log file. Every append is written whole and fsynced before
/// returning.
class ResponseLog {
 public:
  /// Opens or creates the log. An existing log must carry `header`; its
  /// records are replayed and a torn tail is cut off.
  static ResponseLog open(const fs::path& path, const json& header) {
    ResponseLog log;
    log.path_ = path;
    if (fs::exists(path) && fs::file_size(path) > 0) {
      auto contents = read_log(path);
      if (contents.header != header) {
        throw Error(ErrorCode::config_mismatch, path.string() + ": log header does not match the task set");
      }
      if (contents.valid_bytes != fs::file_size(path)) fs::resize_file(path, contents.valid_bytes);
      log.replayed_ = std::move(contents.responses);
      log.fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
      if (log.fd_ < 0) throw Error(ErrorCode::io, "cannot open log " + path.string());
    } else {
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      log.fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_APPEND | O_CLOEXEC, 0644);
      if (log.fd_ < 0) throw Error(ErrorCode::io, "cannot create log " + path.string());
      log.write_line(header.dump());
    }
    return log;
  }

  ResponseLog(ResponseLog&& other) noexcept
      : path_(std::move(other.path_)), fd_(std::exchange(other.fd_, -1)), replayed_(std::move(other.replayed_)) {}
  ResponseLog& operator=(ResponseLog&& other) noexcept {
    if (this != &other) {
      close();
      path_ = std::move(other.path_);
      fd_ = std::exchange(other.fd_, -1);
      replayed_ = std::move(other.replayed_);
    }
    return *this;
  }
  ResponseLog(const ResponseLog&) = delete;
  ResponseLog& operator=(const ResponseLog&) = delete;
  ~ResponseLog() { close(); }

  const std::vector<Response>& replayed() const noexcept { return replayed_; }
  const fs::path& path() const noexcept { return path_; }

  void append(const Response& r) { write_line(to_json(r).dump()); }

 private:
  ResponseLog() = default;

  void write_line(const std::string& text) {
    std::string line = text + "\n";
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const auto n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::io, "log append failed: " + path_.string());
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw Error(ErrorCode::io, "log fsync failed: " + path_.string());
  }

  void close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  fs::path path_;
  int fd_ = -1;
  std::vector<Response> replayed_;
};

// ---------------------------------------------------------------------------
// Assignment state

struct AssignmentState {
  std::map<std::string, std::set<std::string>> workers_by_hit;
  /// (worker, class, UTC day) -> answers, counted for rate-limited modes only.
  std::map<std::tuple<std::string, ClusterId, std::string>, std::size_t> day_counts;

  std::size_t completed(const std::string& hit_id) const {
    auto it = workers_by_hit.find(hit_id);
    return it == workers_by_hit.end() ? 0 : it->second.size();
  }

  friend bool operator==(const AssignmentState&, const AssignmentState&) = default;
};

// ---------------------------------------------------------------------------
// Service core

struct SubmitOutcome {
  int status = 200;
  json body;
};

class StudyService {
 public:
  /// Returns seconds since the Unix epoch.
  using Clock = std::function<std::int64_t()>;

  static std::int64_t system_clock_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  }

  StudyService(TaskSet tasks, const fs::path& log_path, std::optional<ImageManifest> manifest = std::nullopt,
               Clock clock = &StudyService::system_clock_seconds)
      : tasks_(std::move(tasks)),
        manifest_(std::move(manifest)),
        clock_(std::move(clock)),
        log_(ResponseLog::open(log_path, log_header(tasks_))) {
    for (std::size_t i = 0; i < tasks_.tasks.size(); ++i) index_.emplace(tasks_.tasks[i].hit_id, i);
    order_.resize(tasks_.tasks.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(),
              [&](auto a, auto b) { return tasks_.tasks[a].hit_id < tasks_.tasks[b].hit_id; });
    for (const auto& r : log_.replayed()) {
      auto it = index_.find(r.hit_id);
      if (it == index_.end()) throw Error(ErrorCode::unknown_hit, "log references unknown hit " + r.hit_id);
      apply(tasks_.tasks[it->second], r);
      responses_.push_back(r);
    }
  }

  const TaskSet& tasks() const noexcept { return tasks_; }
  const std::optional<ImageManifest>& manifest() const noexcept { return manifest_; }

  /// Public JSON of the next eligible HIT for `worker`, or nullopt.
  std::optional<json> next_task(const std::string& worker) const {
    if (worker.empty()) throw Error(ErrorCode::invalid_argument, "missing worker");
    std::lock_guard lock(mutex_);
    const std::string today = utc_day(format_utc(clock_()));
    const std::size_t target = tasks_.config.annotators_per_hit;
    const Task* best = nullptr;
    std::size_t best_done = 0;
    for (auto i : order_) {
      const auto& t = tasks_.tasks[i];
      const auto it = state_.workers_by_hit.find(t.hit_id);
      const std::size_t done = it == state_.workers_by_hit.end() ? 0 : it->second.size();
      if (done >= target) continue;
      if (it != state_.workers_by_hit.end() && it->second.contains(worker)) continue;
      if (limited() && day_count(worker, t.class_id, today) >= *tasks_.config.rate_limit_per_class_per_day) continue;
      if (!best || done < best_done) {
        best = &t;
        best_done = done;
        if (done == 0) break;  // hit_id order: nothing can beat it
      }
    }
    if (!best) return std::nullopt;
    return to_json(*best, false);
  }

  /// Records an answer. Statuses: 200 recorded or duplicate, 400 malformed,
  /// 404 unknown hit, 409 replication target reached, 422 invalid choice,
  /// 429 daily per-class limit reached.
  SubmitOutcome submit(const json& body) {
    Response r;
    try {
      r.hit_id = body.at("hit_id").get<std::string>();
      r.worker = body.at("worker").get<std::string>();
      r.chosen_query = body.value("chosen_query", std::string());
      if (body.contains("client_ts") && body["client_ts"].is_string()) r.client_ts = body["client_ts"].get<std::string>();
      if (body.contains("likert") && !body["likert"].is_null()) r.likert = body["likert"].get<int>();
      if (body.contains("at_least_one") && !body["at_least_one"].is_null()) {
        r.at_least_one = body["at_least_one"].get<bool>();
      }
    } catch (const json::exception&) {
      return {400, {{"error", "malformed response body"}}};
    }
    if (r.worker.empty()) return {400, {{"error", "missing worker"}}};

    std::lock_guard lock(mutex_);
    auto it = index_.find(r.hit_id);
    if (it == index_.end()) return {404, {{"error", "unknown hit " + r.hit_id}}};
    const auto& task = tasks_.tasks[it->second];
    try {
      validate_response(task, r);
    } catch (const Error& e) {
      return {422, {{"error", e.what()}}};
    }
    const auto workers = state_.workers_by_hit.find(r.hit_id);
    if (workers != state_.workers_by_hit.end() && workers->second.contains(r.worker)) {
      return {200, {{"status", "duplicate"}}};
    }
    if (state_.completed(r.hit_id) >= tasks_.config.annotators_per_hit) {
      return {409, {{"status", "full"}, {"error", "hit already has its answers"}}};
    }
    r.received_at = format_utc(clock_());
    if (limited() && day_count(r.worker, task.class_id, utc_day(r.received_at)) >=
                         *tasks_.config.rate_limit_per_class_per_day) {
      return {429, {{"status", "rate_limited"}, {"error", "daily limit for this class reached"}}};
    }
    log_.append(r);
    apply(task, r);
    responses_.push_back(std::move(r));
    return {200, {{"status", "recorded"}}};
  }

  json progress() const {
    std::lock_guard lock(mutex_);
    std::map<ClusterId, std::pair<std::size_t, std::size_t>> per_class;
    for (const auto& t : tasks_.tasks) {
      auto& [answered, total] = per_class[t.class_id];
      answered += state_.completed(t.hit_id);
      total += tasks_.config.annotators_per_hit;
    }
    json out{{"mode", to_string(tasks_.mode)}, {"classes", json::array()}};
    std::size_t answered_all = 0, total_all = 0;
    for (const auto& [cls, counts] : per_class) {
      out["classes"].push_back({{"class_id", cls}, {"answered", counts.first}, {"total", counts.second}});
      answered_all += counts.first;
      total_all += counts.second;
    }
    out["answered"] = answered_all;
    out["total"] = total_all;
    return out;
  }

  /// Same bytes the offline `score` command writes for this log.
  std::string report_text() const {
    std::vector<Response> snapshot;
    {
      std::lock_guard lock(mutex_);
      snapshot = responses_;
    }
    return make_score_report(tasks_, snapshot).dump(2) + "\n";
  }

  AssignmentState state() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

  std::vector<Response> responses() const {
    std::lock_guard lock(mutex_);
    return responses_;
  }

 private:
  bool limited() const noexcept { return tasks_.config.rate_limit_per_class_per_day.has_value(); }

  std::size_t day_count(const std::string& worker, ClusterId cls, const std::string& day) const {
    auto it = state_.day_counts.find({worker, cls, day});
    return it == state_.day_counts.end() ? 0 : it->second;
  }

  void apply(const Task& task, const Response& r) {
    state_.workers_by_hit[r.hit_id].insert(r.worker);
    if (limited()) ++state_.day_counts[{r.worker, task.class_id, utc_day(r.received_at)}];
  }

  TaskSet tasks_;
  std::optional<ImageManifest> manifest_;
  Clock clock_;
  mutable std::mutex mutex_;
  ResponseLog log_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> order_;  // task indices by hit_id
  AssignmentState state_;
  std::vector<Response> responses_;
};

// ---------------------------------------------------------------------------
// HTTP binding

namespace detail {

inline const char* content_type_for(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".jpg" || ext == ".jpeg" || ext == ".JPEG" || ext == ".JPG") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

inline constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>semcoh study</title></head>"
    "<body><p>Study service is running. Mount the annotator UI with <code>--ui DIR</code>.</p>"
    "<p>API: <code>/api/task?worker=W</code>, <code>/api/response</code>, <code>/api/progress</code>, "
    "<code>/api/report</code>.</p></body></html>";

}  // namespace detail

/// HTTP/1.1 JSON API over a StudyService.
class HttpStudyServer {
 public:
  explicit HttpStudyServer(StudyService& service, std::optional<fs::path> ui_dir = std::nullopt)
      : service_(service) {
    auto json_reply = [](httplib::Response& res, int status, const json& body) {
      res.status = status;
      res.set_content(body.dump(), "application/json");
    };
    server_.Get("/api/task", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
      const auto worker = req.get_param_value("worker");
      if (worker.empty()) return json_reply(res, 400, {{"error", "missing worker parameter"}});
      const auto task = service_.next_task(worker);
      if (!task) {
        res.status = 204;
        return;
      }
      json_reply(res, 200, *task);
    });
    server_.Post("/api/response", [this, json_reply](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        return json_reply(res, 400, {{"error", "body is not JSON"}});
      }
      try {
        const auto outcome = service_.submit(body);
        json_reply(res, outcome.status, outcome.body);
      } catch (const Error& e) {
        json_reply(res, 500, {{"error", e.what()}});
      }
    });
    server_.Get("/api/progress", [this, json_reply](const httplib::Request&, httplib::Response& res) {
      json_reply(res, 200, service_.progress());
    });
    server_.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(service_.report_text(), "application/json");
    });
    server_.Get(R"(/img/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto& manifest = service_.manifest();
      const std::string id = req.matches[1];
      const auto path = manifest ? manifest->resolve(id) : std::nullopt;
      std::ifstream in;
      if (path) in.open(*path, std::ios::binary);
      if (!path || !in) {
        res.status = 404;
        res.set_content("not found", "text/plain");
        return;
      }
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      res.set_content(std::move(bytes), detail::content_type_for(*path));
    });
    if (ui_dir && fs::is_directory(*ui_dir)) {
      server_.set_mount_point("/", ui_dir->string());
    } else {
      server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(detail::kPlaceholderPage, "text/html");
      });
    }
  }

  /// Binds an ephemeral port and returns it.
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  /// Serves until stop(); call after bind.
  bool run() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  StudyService& service_;
  httplib::Server server_;
};

}  // namespace semcoh
