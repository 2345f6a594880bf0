#include <gtest/gtest.h>

#include <functional>
#include <thread>

#include "semcoh/semcoh.hpp"
#include "test_util.hpp"

using namespace semcoh;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no semcoh::Error thrown";
  return ErrorCode::io;
}

Task forced(const std::string& hit, ClusterId cls) {
  Task t;
  t.hit_id = hit;
  t.class_id = cls;
  t.query_a = hit + "_pos";
  t.query_b = hit + "_neg";
  return t;
}

/// Hits h1, h2 (class 1) and h3 (class 2), two answers each.
TaskSet small_taskset(std::optional<std::size_t> rate_limit = std::nullopt) {
  TaskSet ts;
  ts.config.study_id = "unit";
  ts.config.annotators_per_hit = 2;
  ts.config.rate_limit_per_class_per_day = rate_limit;
  ts.tasks = {forced("h2", 1), forced("h1", 1), forced("h3", 2)};
  return ts;
}

json body(const std::string& hit, const std::string& worker, const std::string& choice) {
  return {{"hit_id", hit}, {"worker", worker}, {"chosen_query", choice}};
}

/// Settable clock starting at 2024-03-01T10:00:00Z.
struct FakeClock {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1709287200);
  StudyService::Clock fn() const {
    return [n = now] { return *n; };
  }
};

}  // namespace

TEST(StudyService, SubmitStatuses) {
  testutil::TempDir dir("svc");
  StudyService svc(small_taskset(), dir / "log.jsonl");
  EXPECT_EQ(svc.submit(body("h1", "w1", "h1_pos")).status, 200);
  const auto dup = svc.submit(body("h1", "w1", "h1_neg"));
  EXPECT_EQ(dup.status, 200);
  EXPECT_EQ(dup.body["status"], "duplicate");
  EXPECT_EQ(svc.submit(body("h1", "w2", "h1_neg")).body["status"], "recorded");
  EXPECT_EQ(svc.submit(body("h1", "w3", "h1_pos")).status, 409);
  EXPECT_EQ(svc.submit(body("zz", "w1", "x")).status, 404);
  EXPECT_EQ(svc.submit(body("h2", "w1", "h1_pos")).status, 422);
  EXPECT_EQ(svc.submit(json{{"worker", "w1"}}).status, 400);
  EXPECT_EQ(svc.submit(body("h2", "", "h2_pos")).status, 400);
  EXPECT_EQ(svc.submit(json{{"hit_id", 5}, {"worker", "w"}}).status, 400);
  ASSERT_EQ(svc.responses().size(), 2u);
  EXPECT_EQ(svc.responses()[1].chosen_query, "h1_neg");  // the duplicate did not overwrite
  EXPECT_EQ(svc.progress()["answered"], 2);
  EXPECT_EQ(svc.progress()["total"], 6);
}

TEST(StudyService, AssignsLeastCompletedHitThenHitId) {
  testutil::TempDir dir("svc");
  StudyService svc(small_taskset(), dir / "log.jsonl");
  EXPECT_EQ((*svc.next_task("w1"))["hit_id"], "h1");
  svc.submit(body("h1", "w1", "h1_pos"));
  EXPECT_EQ((*svc.next_task("w1"))["hit_id"], "h2");
  EXPECT_EQ((*svc.next_task("w2"))["hit_id"], "h2");  // h2 has fewer answers than h1
  const auto t = *svc.next_task("w2");
  EXPECT_FALSE(t.contains("z"));
  EXPECT_FALSE(t.contains("negative_source"));
  EXPECT_EQ(code_of([&] { svc.next_task(""); }), ErrorCode::invalid_argument);
  for (const auto& h : {"h2", "h3"}) svc.submit(body(h, "w1", std::string(h) + "_pos"));
  EXPECT_FALSE(svc.next_task("w1").has_value());  // w1 answered everything
  EXPECT_EQ((*svc.next_task("w2"))["hit_id"], "h1");
}

TEST(StudyService, DailyLimitPerClassUsesTheInjectedClock) {
  testutil::TempDir dir("svc");
  FakeClock clock;
  StudyService svc(small_taskset(1), dir / "log.jsonl", std::nullopt, clock.fn());
  EXPECT_EQ(svc.submit(body("h1", "w1", "h1_pos")).status, 200);
  // Class 1 is exhausted for today: the next offer is the class 2 HIT.
  EXPECT_EQ((*svc.next_task("w1"))["hit_id"], "h3");
  const auto limited = svc.submit(body("h2", "w1", "h2_pos"));
  EXPECT_EQ(limited.status, 429);
  EXPECT_EQ(svc.submit(body("h3", "w1", "h3_pos")).status, 200);
  EXPECT_FALSE(svc.next_task("w1").has_value());
  *clock.now += 86400;
  EXPECT_EQ((*svc.next_task("w1"))["hit_id"], "h2");
  EXPECT_EQ(svc.submit(body("h2", "w1", "h2_pos")).status, 200);
  EXPECT_EQ(svc.responses()[2].received_at, "2024-03-02T10:00:00Z");
}

TEST(StudyService, RestartReplaysLogAndDropsTornTail) {
  testutil::TempDir dir("svc");
  const auto log = dir / "log.jsonl";
  AssignmentState before;
  {
    StudyService svc(small_taskset(), log);
    svc.submit(body("h1", "w1", "h1_pos"));
    svc.submit(body("h3", "w2", "h3_neg"));
    before = svc.state();
  }
  {
    std::ofstream out(log, std::ios::app | std::ios::binary);
    out << R"({"hit_id":"h2","worker":"w9","cho)";
  }
  StudyService again(small_taskset(), log);
  EXPECT_EQ(again.state(), before);
  EXPECT_EQ(again.responses().size(), 2u);
  EXPECT_EQ(again.submit(body("h2", "w9", "h2_pos")).status, 200);
  const auto contents = read_log(log);
  EXPECT_EQ(contents.responses.size(), 3u);
  EXPECT_EQ(contents.valid_bytes, fs::file_size(log));
}

TEST(StudyService, LogErrors) {
  testutil::TempDir dir("svc");
  const auto log = dir / "log.jsonl";
  { StudyService svc(small_taskset(), log); }
  auto changed = small_taskset();
  changed.config.annotators_per_hit = 3;
  EXPECT_EQ(code_of([&] { StudyService svc(changed, log); }), ErrorCode::config_mismatch);

  const auto header = testutil::read_file(log);
  testutil::write_file(log, header + "not json\n" + to_json(Response{"h1", "w", "h1_pos", "2024-01-01T00:00:00Z", "", {}, {}}).dump() + "\n");
  EXPECT_EQ(code_of([&] { read_log(log); }), ErrorCode::parse);
  testutil::write_file(log, "{\"kind\":\"other\"}\n");
  EXPECT_EQ(code_of([&] { read_log(log); }), ErrorCode::parse);
}

TEST(StudyService, ConcurrentSubmissionsRespectTheTarget) {
  testutil::TempDir dir("svc");
  TaskSet ts;
  ts.config.annotators_per_hit = 3;
  for (int i = 0; i < 40; ++i) ts.tasks.push_back(forced("h" + std::to_string(100 + i), i % 4));
  StudyService svc(ts, dir / "log.jsonl");
  std::vector<std::thread> threads;
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      const std::string worker = "w" + std::to_string(w);
      for (const auto& t : ts.tasks) svc.submit(body(t.hit_id, worker, t.query_a));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(svc.responses().size(), 120u);
  for (const auto& t : ts.tasks) EXPECT_EQ(svc.state().completed(t.hit_id), 3u);
  EXPECT_EQ(read_log(dir / "log.jsonl").responses, svc.responses());
}

TEST(HttpStudyServer, EndpointsOverHttp) {
  testutil::TempDir dir("http");
  testutil::write_file(dir / "corpus/images/h1_pos.svg", "<svg/>");
  const ImageManifest manifest(dir / "corpus", {{"h1_pos", "images/h1_pos.svg"}, {"gone", "images/gone.png"}});
  StudyService svc(small_taskset(), dir / "log.jsonl", manifest);
  HttpStudyServer server(svc);
  const int port = server.bind_any();
  ASSERT_GT(port, 0);
  std::thread runner([&] { server.run(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto task = client.Get("/api/task?worker=w1");
  ASSERT_TRUE(task);
  EXPECT_EQ(task->status, 200);
  EXPECT_EQ(json::parse(task->body)["hit_id"], "h1");
  EXPECT_EQ(client.Get("/api/task")->status, 400);

  auto post = [&](const std::string& text) { return client.Post("/api/response", text, "application/json"); };
  EXPECT_EQ(post(body("h1", "w1", "h1_pos").dump())->status, 200);
  EXPECT_EQ(post("{oops")->status, 400);
  EXPECT_EQ(post(body("h1", "w1", "bogus").dump())->status, 422);
  EXPECT_EQ(post(body("nope", "w1", "x").dump())->status, 404);
  for (const auto& h : {"h2", "h3"}) post(body(h, "w1", std::string(h) + "_pos").dump());
  EXPECT_EQ(client.Get("/api/task?worker=w1")->status, 204);

  EXPECT_EQ(json::parse(client.Get("/api/progress")->body)["answered"], 3);
  EXPECT_EQ(client.Get("/api/report")->body, svc.report_text());
  const auto img = client.Get("/img/h1_pos");
  EXPECT_EQ(img->status, 200);
  EXPECT_EQ(img->body, "<svg/>");
  EXPECT_EQ(img->get_header_value("Content-Type"), "image/svg+xml");
  EXPECT_EQ(client.Get("/img/gone")->status, 404);
  EXPECT_EQ(client.Get("/img/unknown")->status, 404);
  const auto root = client.Get("/");
  EXPECT_EQ(root->status, 200);
  EXPECT_NE(root->body.find("/api/task"), std::string::npos);

  server.stop();
  runner.join();
}

TEST(HttpStudyServer, ServesUiDirectoryAtRoot) {
  testutil::TempDir dir("ui");
  testutil::write_file(dir / "ui/index.html", "<p>ui</p>");
  StudyService svc(small_taskset(), dir / "log.jsonl");
  HttpStudyServer server(svc, dir / "ui");
  const int port = server.bind_any();
  std::thread runner([&] { server.run(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  EXPECT_EQ(client.Get("/")->body, "<p>ui</p>");
  EXPECT_EQ(client.Get("/api/progress")->status, 200);
  server.stop();
  runner.join();
}
