#include "promptprog/server.hpp"

#include <charconv>

#include <httplib.h>

#include "promptprog/analytics.hpp"

namespace promptprog::service {

using nlohmann::json;

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownProblem:
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::LimitReached:
    case ErrorCode::NoCodeAvailable:
      return 409;
    case ErrorCode::EmptyMessage:
    case ErrorCode::InvalidArgument:
      return 400;
    case ErrorCode::ProviderFailure:
      return 502;
    case ErrorCode::StorageFailure:
    case ErrorCode::ToolchainMissing:
      return 503;
    case ErrorCode::UnsupportedType:
      return 422;
    default:
      return 500;
  }
}

json error_body(ErrorCode code, const std::string& message) {
  return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

json problem_listing(const corpus::Problem& p) {
  return {{"id", p.id},
          {"title", p.title},
          {"tier", std::string(corpus::to_string(p.tier))},
          {"kind", std::string(corpus::to_string(p.kind()))}};
}

json problem_view(const corpus::Problem& p) {
  auto out = problem_listing(p);
  out["language"] = std::string(corpus::to_string(p.language));
  out["message_limit"] = p.message_limit;
  out["specification"] = corpus::render_specification(p);
  json fns = json::array();
  for (const auto& f : p.functions) {
    json examples = json::array();
    for (const auto& t : f.visible_examples) examples.push_back({{"inputs", t.inputs}, {"expected", t.expected}});
    fns.push_back({{"name", f.name}, {"signature", f.signature}, {"visible_examples", examples}});
  }
  out["functions"] = fns;
  return out;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code), error_body(code, message));
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    auto doc = json::parse(req.body);
    if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be an object");
    return doc;
  } catch (const json::parse_error&) {
    throw Error(ErrorCode::InvalidArgument, "request body is not valid JSON");
  }
}

std::string string_field(const json& body, const std::string& key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string()) throw Error(ErrorCode::InvalidArgument, "missing string field '" + key + "'");
  return *it;
}

std::optional<std::string> header(const httplib::Request& req, const char* name) {
  if (!req.has_header(name)) return std::nullopt;
  return req.get_header_value(name);
}

int int_param(const std::string& text, const std::string& name) {
  int v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorCode::InvalidArgument, "'" + name + "' must be an integer");
  }
  return v;
}

std::vector<int> parse_buckets(const std::string& text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    out.push_back(int_param(text.substr(start, comma - start), "buckets"));
    start = comma + 1;
  }
  return out;
}

// Wraps a handler so every Error becomes a structured body.
template <typename F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", {{"code", "INTERNAL"}, {"message", e.what()}}}});
    }
  };
}

}  // namespace

HttpServer::HttpServer(Platform& platform, ServerOptions options)
    : platform_(platform), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return http_->listen(host, port); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  return http_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve_bound() { return http_->listen_after_bind(); }

void HttpServer::stop() {
  if (http_->is_running()) http_->stop();
}

void HttpServer::wait_until_ready() const { http_->wait_until_ready(); }

void HttpServer::routes() {
  auto& s = *http_;
  auto& platform = platform_;
  const auto opts = options_;

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      res.set_content(error_body(ErrorCode::InvalidArgument, "no such endpoint").dump(), "application/json");
    }
  });

  s.Get("/health", [](const httplib::Request&, httplib::Response& res) { send_json(res, 200, {{"status", "ok"}}); });

  s.Get("/problems", guarded([&platform](const httplib::Request&, httplib::Response& res) {
          json out = json::array();
          for (const auto& p : platform.corpus().problems()) out.push_back(problem_listing(p));
          send_json(res, 200, out);
        }));

  s.Get(R"(/problems/([^/]+))", guarded([&platform](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, problem_view(platform.corpus().get(req.matches[1].str())));
        }));

  s.Post("/sessions", guarded([&platform](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           std::string student;
           if (body.contains("student_id")) {
             student = string_field(body, "student_id");
           } else if (auto h = header(req, "X-Student-Id")) {
             student = *h;
           }
           if (student.empty()) throw Error(ErrorCode::InvalidArgument, "student_id is required");
           const auto id = platform.start_session(student, string_field(body, "problem_id"));
           send_json(res, 201, {{"session_id", id}});
         }));

  s.Post(R"(/sessions/([^/]+)/messages)", guarded([&platform](const httplib::Request& req, httplib::Response& res) {
           const auto body = parse_body(req);
           const auto r = platform.post_message(req.matches[1].str(), string_field(body, "content"));
           send_json(res, 200,
                     {{"assistant_content", r.assistant.content},
                      {"code_block_count", r.assistant.code_blocks.size()},
                      {"limit", {{"used", r.used}, {"max", r.max}}}});
         }));

  s.Post(R"(/sessions/([^/]+)/run)", guarded([&platform](const httplib::Request& req, httplib::Response& res) {
           send_json(res, 200, platform.run_code(req.matches[1].str(), header(req, "Idempotency-Key")));
         }));

  s.Post(R"(/sessions/([^/]+)/reset)", guarded([&platform](const httplib::Request& req, httplib::Response& res) {
           const int index = platform.reset_conversation(req.matches[1].str(), header(req, "Idempotency-Key"));
           send_json(res, 200, {{"conversation_index", index}});
         }));

  s.Get(R"(/sessions/([^/]+))", guarded([&platform](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, dialogue::session_summary(platform.session(req.matches[1].str())));
        }));

  auto traces = [&platform] { return analytics::reconstruct_traces(platform.log().read()).traces; };

  auto send_table = [](const httplib::Request& req, httplib::Response& res, const analytics::MetricTable& t) {
    const auto format = req.has_param("format") ? req.get_param_value("format") : "structured";
    if (format == "csv") {
      res.status = 200;
      res.set_content(analytics::to_csv(t), "text/csv");
    } else if (format == "structured") {
      send_json(res, 200, analytics::to_json(t));
    } else {
      throw Error(ErrorCode::InvalidArgument, "format must be structured or csv");
    }
  };

  s.Get(R"(/analytics/progression/([^/]+))",
        guarded([&platform, traces](const httplib::Request& req, httplib::Response& res) {
          const auto& problem = platform.corpus().get(req.matches[1].str());
          const int k = req.has_param("k") ? int_param(req.get_param_value("k"), "k") : 15;
          const auto format = req.has_param("format") ? req.get_param_value("format") : "structured";
          auto graph = analytics::filter_top_edges(analytics::build_progression_graph(traces(), problem), k);
          if (format == "dot") {
            res.status = 200;
            res.set_content(analytics::export_graph(graph, analytics::GraphFormat::Dot), "text/vnd.graphviz");
          } else if (format == "structured") {
            send_json(res, 200, analytics::graph_to_json(graph));
          } else {
            throw Error(ErrorCode::InvalidArgument, "format must be dot or structured");
          }
        }));

  s.Get("/analytics/lengths", guarded([traces, send_table, opts](const httplib::Request& req, httplib::Response& res) {
          const auto edges = req.has_param("buckets") ? parse_buckets(req.get_param_value("buckets")) : opts.bucket_edges;
          send_table(req, res, analytics::length_distribution(traces(), edges));
        }));

  s.Get("/analytics/message-sizes", guarded([traces, send_table](const httplib::Request& req, httplib::Response& res) {
          send_table(req, res, analytics::median_size_by_position(traces()));
        }));

  s.Get("/analytics/selectivity", guarded([traces, send_table](const httplib::Request& req, httplib::Response& res) {
          send_table(req, res, analytics::execution_selectivity(traces()));
        }));

  s.Get("/analytics/descriptive", guarded([traces, send_table](const httplib::Request& req, httplib::Response& res) {
          send_table(req, res, analytics::descriptive_stats(traces()));
        }));

  if (opts.ui_static_path) s.set_mount_point("/", opts.ui_static_path->string());
}

}  // namespace promptprog::service
