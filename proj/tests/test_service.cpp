#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "promptprog/config.hpp"
#include "promptprog/error.hpp"
#include "promptprog/provider.hpp"
#include "promptprog/server.hpp"
#include "support.hpp"

using namespace promptprog;
using namespace promptprog::service;
using events::EventKind;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(-1);
}

ServiceConfig test_config(const pp_test::TempDir& dir) {
  auto cfg = load_config(pp_test::fixture("replay/config.json"));
  cfg.log_path = dir / "events.jsonl";
  return cfg;
}

const std::string kFirst = "Write a C function that counts how many numbers in an array are negative.";
const std::string kSecond = "Zero is not negative. Only count values strictly below zero.";

// A platform served on an ephemeral port for the lifetime of the object.
struct LiveServer {
  explicit LiveServer(const ServiceConfig& cfg) : platform(build_platform(cfg)), server(*platform) {
    port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { server.serve_bound(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }

  std::unique_ptr<Platform> platform;
  HttpServer server;
  int port = 0;
  std::thread thread;
};

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

}  // namespace

TEST_CASE("config parsing is strict and resolves paths") {
  const auto base = pp_test::fixture("replay");
  const json good{{"corpus_path", "corpus"}, {"provider", {{"kind", "scripted"}, {"fixture_path", "p.json"}}}};
  const auto cfg = config_from_json(good, base);
  CHECK(cfg.corpus_path == base / "corpus");
  CHECK(cfg.provider.fixture_path == base / "p.json");
  CHECK(cfg.host() == "127.0.0.1");
  CHECK(cfg.port() == 8080);
  CHECK(cfg.log_path == base / "events.jsonl");

  auto with = [&](const std::string& key, json value) {
    auto doc = good;
    doc[key] = std::move(value);
    return doc;
  };
  try {
    config_from_json(with("surprise", 1), base);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    CHECK(std::string(e.what()).find("surprise") != std::string::npos);
  }
  try {
    auto doc = good;
    doc["provider"]["x"] = 1;
    config_from_json(doc, base);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("provider.x") != std::string::npos);
  }
  CHECK(code_of([&] { config_from_json(with("listen", "nohost"), base); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_from_json(with("listen", "h:70000"), base); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_from_json(with("grading_mode", "both"), base); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_from_json(with("sandbox", {{"per_test_timeout_s", 0}}), base); }) == ErrorCode::InvalidConfig);
  CHECK(code_of([&] { config_from_json(json{{"provider", good["provider"]}}, base); }) == ErrorCode::InvalidConfig);
  CHECK(config_from_json(with("grading_mode", "modular"), base).grading_mode == runner::GradingMode::Modular);
}

TEST_CASE("platform construction fails cleanly") {
  pp_test::TempDir dir;
  auto cfg = test_config(dir);
  cfg.corpus_path = dir / "nowhere";
  CHECK(code_of([&] { build_platform(cfg); }) == ErrorCode::MalformedDefinition);
  cfg = test_config(dir);
  cfg.toolchain.c_compile = "no-such-compiler-xyz -o {out} {src}";
  CHECK(code_of([&] { build_platform(cfg); }) == ErrorCode::ToolchainMissing);
  cfg = test_config(dir);
  cfg.provider.kind = "http";
  cfg.provider.endpoint = "ftp://example";
  CHECK(code_of([&] { build_platform(cfg); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("error codes map to HTTP statuses") {
  CHECK(http_status(ErrorCode::UnknownSession) == 404);
  CHECK(http_status(ErrorCode::LimitReached) == 409);
  CHECK(http_status(ErrorCode::NoCodeAvailable) == 409);
  CHECK(http_status(ErrorCode::EmptyMessage) == 400);
  CHECK(http_status(ErrorCode::ProviderFailure) == 502);
  CHECK(http_status(ErrorCode::StorageFailure) == 503);
  CHECK(http_status(ErrorCode::CorruptLog) == 500);
  CHECK(error_body(ErrorCode::LimitReached, "m") == json{{"error", {{"code", "LIMIT_REACHED"}, {"message", "m"}}}});
}

TEST_CASE("end to end over HTTP: solve a problem") {
  pp_test::TempDir dir;
  LiveServer live(test_config(dir));
  auto cli = live.client();
  std::vector<std::string> bodies;
  auto keep = [&](const httplib::Result& r) {
    REQUIRE(r);
    bodies.push_back(r->body);
    return json::parse(r->body);
  };

  CHECK(keep(cli.Get("/health")) == json{{"status", "ok"}});
  const auto listing = keep(cli.Get("/problems"));
  REQUIRE(listing.size() == 9);
  CHECK(listing[0].contains("tier"));
  CHECK_FALSE(listing[0].contains("functions"));
  for (const auto& p : listing) keep(cli.Get(("/problems/" + p["id"].get<std::string>()).c_str()));
  const auto view = keep(cli.Get("/problems/count-negatives"));
  CHECK(view["message_limit"] == 5);
  CHECK(view["functions"][0]["signature"] == "int count_negatives(const int arr[], int n)");
  CHECK_FALSE(view["functions"][0].contains("hidden_tests"));

  auto r = cli.Post("/sessions", json{{"student_id", "alice"}, {"problem_id", "count-negatives"}}.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  const auto sid = keep(r)["session_id"].get<std::string>();
  const auto base = "/sessions/" + sid;

  r = cli.Post((base + "/run").c_str(), "", "application/json");
  CHECK(r->status == 409);
  CHECK(keep(r)["error"]["code"] == "NO_CODE_AVAILABLE");

  r = cli.Post((base + "/messages").c_str(), json{{"content", kFirst}}.dump(), "application/json");
  CHECK(r->status == 200);
  auto reply = keep(r);
  CHECK(reply["code_block_count"] == 1);
  CHECK(reply["limit"] == json{{"used", 1}, {"max", 5}});

  r = cli.Post((base + "/messages").c_str(), json{{"content", kSecond}}.dump(), "application/json");
  CHECK(keep(r)["limit"]["used"] == 2);

  httplib::Headers key{{"Idempotency-Key", "run-1"}};
  r = cli.Post((base + "/run").c_str(), key, "", "application/json");
  CHECK(r->status == 200);
  const auto report = keep(r);
  CHECK(report["all_ok"] == true);
  CHECK(report["run_index"] == 1);
  CHECK(report["per_function"]["count_negatives"]["passed"] == 8);
  CHECK(keep(cli.Post((base + "/run").c_str(), key, "", "application/json")) == report);

  const auto summary = keep(cli.Get(base.c_str()));
  CHECK(summary["solved"] == true);
  CHECK(summary["run_counter"] == 1);

  r = cli.Post((base + "/reset").c_str(), httplib::Headers{{"Idempotency-Key", "z"}}, "", "application/json");
  CHECK(keep(r)["conversation_index"] == 1);
  CHECK(keep(cli.Post((base + "/reset").c_str(), httplib::Headers{{"Idempotency-Key", "z"}}, "", "application/json"))["conversation_index"] == 1);

  std::vector<EventKind> kinds;
  for (const auto& e : live.platform->log().read(sid)) kinds.push_back(e.kind);
  CHECK(kinds == std::vector<EventKind>{
                     EventKind::SessionStarted, EventKind::MessagePosted, EventKind::AssistantReplied,
                     EventKind::CodeGenerated, EventKind::ShadowGrade, EventKind::MessagePosted,
                     EventKind::AssistantReplied, EventKind::CodeGenerated, EventKind::ShadowGrade,
                     EventKind::RunRequested, EventKind::RunResult, EventKind::ProblemSolved,
                     EventKind::ConversationReset});
  const auto first_shadow = live.platform->log().read(sid)[4];
  CHECK(first_shadow.payload["all_ok"] == false);

  for (const char* path : {"/analytics/descriptive", "/analytics/selectivity", "/analytics/lengths",
                           "/analytics/message-sizes", "/analytics/progression/count-negatives?format=structured",
                           "/analytics/progression/count-negatives"}) {
    r = cli.Get(path);
    REQUIRE(r);
    CHECK(r->status == 200);
    bodies.push_back(r->body);
  }
  const auto sel = json::parse(cli.Get("/analytics/selectivity")->body);
  CHECK(sel["rows"][0]["code_events"] == 2);
  CHECK(sel["rows"][0]["executed"] == 1);
  const auto csv = cli.Get("/analytics/descriptive?format=csv");
  CHECK(csv->body.rfind("# schema_version=1 table=descriptive_stats\n", 0) == 0);
  CHECK(csv->get_header_value("Content-Type").find("text/csv") == 0);
  const auto graph = json::parse(cli.Get("/analytics/progression/count-negatives?format=structured&k=1")->body);
  CHECK(graph["student_count"] == 1);
  CHECK(graph["edges"].size() == 1);
  CHECK(cli.Get("/analytics/progression/count-negatives?format=dot")->body.find("digraph") != std::string::npos);
  CHECK(cli.Get("/analytics/lengths?buckets=2,4")->status == 200);
  CHECK(cli.Get("/analytics/lengths?buckets=4,2")->status == 400);
  CHECK(cli.Get("/analytics/progression/nope")->status == 404);
  CHECK(cli.Get("/analytics/progression/count-negatives?k=0")->status == 400);

  // Nothing served reveals a hidden test input that is not also a visible example.
  for (const auto& p : live.platform->corpus().problems()) {
    std::set<std::string> visible;
    for (const auto& f : p.functions) {
      for (const auto& t : f.visible_examples) visible.insert(t.inputs.dump());
    }
    for (const auto& f : p.functions) {
      for (const auto& t : f.hidden_tests) {
        const auto text = t.inputs.dump();
        if (text.size() < 8 || visible.count(text)) continue;
        for (const auto& b : bodies) CHECK_MESSAGE(b.find(text) == std::string::npos, p.id);
      }
    }
  }
}

TEST_CASE("HTTP error responses carry structured codes") {
  pp_test::TempDir dir;
  LiveServer live(test_config(dir));
  auto cli = live.client();

  auto r = cli.Get("/problems/unknown");
  CHECK(r->status == 404);
  CHECK(body_of(r)["error"]["code"] == "UNKNOWN_PROBLEM");
  r = cli.Get("/sessions/unknown");
  CHECK(r->status == 404);
  CHECK(body_of(r)["error"]["code"] == "UNKNOWN_SESSION");
  r = cli.Get("/no/such/route");
  CHECK(r->status == 404);
  CHECK(body_of(r).contains("error"));
  r = cli.Post("/sessions", "{not json", "application/json");
  CHECK(r->status == 400);
  CHECK(body_of(r)["error"]["code"] == "INVALID_ARGUMENT");
  r = cli.Post("/sessions", json{{"student_id", "s"}, {"problem_id", "nope"}}.dump(), "application/json");
  CHECK(r->status == 404);

  r = cli.Post("/sessions", httplib::Headers{{"X-Student-Id", "hdr"}}, json{{"problem_id", "count-negatives"}}.dump(),
               "application/json");
  REQUIRE(r->status == 201);
  const auto sid = body_of(r)["session_id"].get<std::string>();
  const auto base = "/sessions/" + sid;
  CHECK(body_of(cli.Get(base.c_str()))["student_id"] == "hdr");

  r = cli.Post((base + "/messages").c_str(), json{{"content", "   "}}.dump(), "application/json");
  CHECK(r->status == 400);
  CHECK(body_of(r)["error"]["code"] == "EMPTY_MESSAGE");

  // Turn-keyed replies cover five messages, then the limit applies.
  for (int i = 1; i <= 5; ++i) {
    r = cli.Post((base + "/messages").c_str(), json{{"content", "turn " + std::to_string(i)}}.dump(), "application/json");
    CHECK(r->status == 200);
  }
  r = cli.Post((base + "/messages").c_str(), json{{"content", "sixth"}}.dump(), "application/json");
  CHECK(r->status == 409);
  CHECK(body_of(r)["error"]["code"] == "LIMIT_REACHED");

  cli.Post((base + "/reset").c_str(), "", "application/json");
  r = cli.Post("/sessions", json{{"student_id", "s"}, {"problem_id", "password-validation"}}.dump(), "application/json");
  const auto other = "/sessions/" + body_of(r)["session_id"].get<std::string>();
  r = cli.Post((other + "/messages").c_str(), json{{"content", "unscripted"}}.dump(), "application/json");
  CHECK(r->status == 502);
  CHECK(body_of(r)["error"]["message"].get<std::string>().rfind("fixture_miss", 0) == 0);

  live.platform->log().set_fault_hook([](events::FaultPoint) { throw std::runtime_error("disk full"); });
  r = cli.Post((base + "/messages").c_str(), json{{"content", kFirst}}.dump(), "application/json");
  CHECK(r->status == 503);
  CHECK(body_of(r)["error"]["code"] == "STORAGE_FAILURE");
  live.platform->log().set_fault_hook(nullptr);
  CHECK(body_of(cli.Get(base.c_str()))["limit"]["used"] == 0);
}

TEST_CASE("static UI files are served when configured") {
  pp_test::TempDir dir;
  pp_test::write_text(dir / "index.html", "<html>ui</html>");
  auto platform = build_platform(test_config(dir));
  ServerOptions opts;
  opts.ui_static_path = dir.path();
  HttpServer server(*platform, opts);
  const int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.serve_bound(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  auto r = cli.Get("/index.html");
  REQUIRE(r);
  CHECK(r->body == "<html>ui</html>");
  CHECK(cli.Get("/health")->status == 200);
  server.stop();
  t.join();
}

TEST_CASE("a restarted platform resumes sessions from the log") {
  pp_test::TempDir dir;
  const auto cfg = test_config(dir);
  std::string sid;
  dialogue::Session before;
  {
    auto p = build_platform(cfg);
    sid = p->start_session("alice", "count-negatives");
    p->post_message(sid, kFirst);
    p->run_code(sid);
    before = p->session(sid);
  }
  auto p = build_platform(cfg);
  CHECK(p->session(sid) == before);
  CHECK(p->post_message(sid, kSecond).used == 2);
}

TEST_CASE("HTTP provider speaks chat completions and classifies failures") {
  httplib::Server fake;
  json seen;
  fake.Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(json{{"model", "m1"}, {"choices", {{{"message", {{"role", "assistant"}, {"content", "hi"}}}}}}}.dump(),
                    "application/json");
  });
  fake.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  fake.Post("/garbage", [](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
  fake.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content("{}", "application/json");
  });
  const int port = fake.bind_to_any_port("127.0.0.1");
  std::thread t([&] { fake.listen_after_bind(); });
  fake.wait_until_ready();

  dialogue::ProviderRequest req;
  req.system_prompt = "sys";
  req.history = {{dialogue::Role::Student, "q1"}, {dialogue::Role::Assistant, "a1"}, {dialogue::Role::Student, "q2"}};
  auto provider = [&](const std::string& path, double timeout = 5.0) {
    return dialogue::HttpProvider({"http://127.0.0.1:" + std::to_string(port) + path, "model-x", timeout});
  };
  auto reason = [&](dialogue::HttpProvider p) -> std::string {
    try {
      p.chat(req);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ProviderFailure);
      return e.what();
    } catch (const std::exception& e) {
      FAIL_CHECK("unexpected exception: " << e.what());
    }
    return "";
  };

  const auto reply = provider("/ok").chat(req);
  CHECK(reply.content == "hi");
  CHECK(json::parse(reply.provider_meta)["model"] == "m1");
  CHECK(seen["model"] == "model-x");
  REQUIRE(seen["messages"].size() == 4);
  CHECK(seen["messages"][0] == json{{"role", "system"}, {"content", "sys"}});
  CHECK(seen["messages"][2] == json{{"role", "assistant"}, {"content", "a1"}});
  CHECK(reason(provider("/fail")).rfind("http_status", 0) == 0);
  CHECK(reason(provider("/garbage")).rfind("malformed_reply", 0) == 0);
  CHECK(reason(provider("/slow", 0.3)).rfind("timeout", 0) == 0);
  fake.stop();
  t.join();
  CHECK(reason(provider("/ok")).rfind("transport", 0) == 0);
  CHECK(code_of([] { dialogue::HttpProvider({"not a url", "m", 1.0}); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("scripted provider prefers exact messages over turn numbers") {
  dialogue::ScriptedProvider p({{"p", 1, std::nullopt, "by turn"}, {"p", 0, std::string("hello"), "by text"}});
  dialogue::ProviderRequest req;
  req.problem_id = "p";
  req.turn_index = 1;
  req.history = {{dialogue::Role::Student, "hello"}};
  CHECK(p.chat(req).content == "by text");
  req.history = {{dialogue::Role::Student, "other"}};
  CHECK(p.chat(req).content == "by turn");
  req.turn_index = 2;
  CHECK(code_of([&] { p.chat(req); }) == ErrorCode::ProviderFailure);
  CHECK(p.requests().size() == 3);
}
