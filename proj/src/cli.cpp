#include "promptprog/cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <atomic>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "promptprog/analytics.hpp"
#include "promptprog/error.hpp"
#include "promptprog/server.hpp"

namespace promptprog::cli {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string issue_list(const std::vector<corpus::ValidationIssue>& issues) {
  std::string out;
  for (const auto& i : issues) {
    if (!out.empty()) out += "; ";
    out += i.code + ": " + i.detail;
  }
  return out;
}

std::optional<std::filesystem::path> solution_for(const std::filesystem::path& dir, const corpus::Problem& p) {
  const auto ext = p.language == corpus::Language::C ? ".c" : ".py";
  auto path = dir / (p.id + ext);
  if (std::filesystem::is_regular_file(path)) return path;
  return std::nullopt;
}

std::string failing_functions(const runner::ExecutionReport& r) {
  std::string out;
  for (const auto& [name, f] : r.per_function) {
    if (f.ok) continue;
    if (!out.empty()) out += ", ";
    out += fmt::format("{} ({}/{}, {})", name, f.passed, f.total, runner::to_string(f.status));
  }
  return out;
}

}  // namespace

int cmd_validate(const ValidateOptions& opts, std::ostream& out, std::ostream& err) {
  if (!std::filesystem::is_directory(opts.corpus_dir)) {
    err << "error: corpus directory not found: " << opts.corpus_dir.string() << "\n";
    return 2;
  }
  const auto reports = corpus::scan_corpus(opts.corpus_dir);
  if (reports.empty()) {
    err << "error: no problem definitions in " << opts.corpus_dir.string() << "\n";
    return 1;
  }

  std::optional<runner::SandboxGrader> grader;
  const auto solutions = opts.solutions_dir.value_or(opts.corpus_dir / "solutions");
  if (opts.check_solutions) {
    try {
      for (const auto& r : reports) {
        if (r.problem) runner::check_toolchain(opts.toolchain, r.problem->language);
      }
    } catch (const Error& e) {
      err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
      return 2;
    }
    grader.emplace(opts.sandbox, opts.toolchain, runner::GradingMode::SingleDriver);
  }

  bool all_ok = true;
  std::map<std::string, std::string> seen;
  for (const auto& r : reports) {
    const auto file = r.path.filename().string();
    if (!r.load_error.empty()) {
      out << "FAIL " << file << ": " << r.load_error << "\n";
      all_ok = false;
      continue;
    }
    if (!r.issues.empty()) {
      out << "FAIL " << file << ": " << issue_list(r.issues) << "\n";
      all_ok = false;
      continue;
    }
    const auto& p = *r.problem;
    if (auto [it, fresh] = seen.emplace(p.id, file); !fresh) {
      out << "FAIL " << file << ": DuplicateProblemId: '" << p.id << "' also defined in " << it->second << "\n";
      all_ok = false;
      continue;
    }
    std::size_t hidden = 0;
    for (const auto& f : p.functions) hidden += f.hidden_tests.size();
    auto line = fmt::format("{} [{}, {} function{}, {} hidden tests, limit {}]", p.id, corpus::to_string(p.tier),
                            p.functions.size(), p.functions.size() == 1 ? "" : "s", hidden, p.message_limit);
    if (grader) {
      const auto path = solution_for(solutions, p);
      if (!path) {
        out << "FAIL " << line << ": no reference solution in " << solutions.string() << "\n";
        all_ok = false;
        continue;
      }
      runner::CodeBlock block{read_file(*path), std::nullopt, {}};
      const auto report = grader->grade(p, block);
      if (!report.all_ok) {
        out << "FAIL " << line << ": reference solution fails " << failing_functions(report) << "\n";
        all_ok = false;
        continue;
      }
      line += " solution all_ok";
    }
    out << "OK " << line << "\n";
  }
  return all_ok ? 0 : 1;
}

std::optional<Report> parse_report(const std::string& name) {
  if (name == "progression") return Report::Progression;
  if (name == "lengths") return Report::Lengths;
  if (name == "sizes") return Report::Sizes;
  if (name == "selectivity") return Report::Selectivity;
  if (name == "descriptive") return Report::Descriptive;
  return std::nullopt;
}

std::optional<OutputFormat> parse_format(const std::string& name) {
  if (name == "structured") return OutputFormat::Structured;
  if (name == "csv") return OutputFormat::Csv;
  if (name == "dot") return OutputFormat::Dot;
  return std::nullopt;
}

std::vector<int> parse_bucket_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bucket edge '" + part + "' is not an integer");
    }
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "bucket list is empty");
  return out;
}

std::string render_report(const AnalyzeOptions& opts, std::ostream& err) {
  std::vector<events::LogWarning> warnings;
  const auto log = events::read_event_file(opts.log_path, &warnings);
  for (const auto& w : warnings) err << "warning: " << opts.log_path.string() << ":" << w.line << ": " << w.reason << "\n";
  if (log.empty()) err << "warning: " << opts.log_path.string() << " contains no events\n";

  auto set = analytics::reconstruct_traces(log);
  for (const auto& w : set.warnings) err << "warning: " << w.reason << "\n";
  auto traces = std::move(set.traces);
  if (opts.problem && opts.report != Report::Progression) {
    std::erase_if(traces, [&](const auto& t) { return t.problem_id != *opts.problem; });
  }

  if (opts.report == Report::Progression) {
    if (!opts.problem) throw Error(ErrorCode::InvalidArgument, "the progression report needs --problem");
    const auto format = opts.format.value_or(OutputFormat::Dot);
    if (format == OutputFormat::Csv) throw Error(ErrorCode::InvalidArgument, "progression supports dot or structured");
    const auto graph = analytics::filter_top_edges(analytics::build_progression_graph(traces, *opts.problem), opts.top_edges);
    return analytics::export_graph(graph, format == OutputFormat::Dot ? analytics::GraphFormat::Dot
                                                                      : analytics::GraphFormat::Structured);
  }

  analytics::MetricTable table;
  switch (opts.report) {
    case Report::Lengths:
      table = analytics::length_distribution(traces, opts.buckets);
      break;
    case Report::Sizes:
      table = analytics::median_size_by_position(traces);
      break;
    case Report::Selectivity:
      table = analytics::execution_selectivity(traces);
      break;
    default:
      table = analytics::descriptive_stats(traces);
      break;
  }
  switch (opts.format.value_or(OutputFormat::Structured)) {
    case OutputFormat::Csv:
      return analytics::to_csv(table);
    case OutputFormat::Structured:
      return analytics::to_json(table).dump(2) + "\n";
    default:
      throw Error(ErrorCode::InvalidArgument, "tables support structured or csv");
  }
}

int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err) {
  std::string text;
  try {
    text = render_report(opts, err);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  if (opts.out_path) {
    std::ofstream f(*opts.out_path, std::ios::binary | std::ios::trunc);
    if (!(f << text)) {
      err << "error: cannot write " << opts.out_path->string() << "\n";
      return 1;
    }
  } else {
    out << text;
  }
  return 0;
}

namespace {

ReplaySession session_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "replay session must be an object");
  ReplaySession s;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "student_id") {
        s.student_id = value.get<std::string>();
      } else if (key == "problem_id") {
        s.problem_id = value.get<std::string>();
      } else if (key == "messages") {
        s.messages = value.get<std::vector<std::string>>();
      } else if (key == "run_after") {
        s.run_after = value.get<std::set<int>>();
      } else if (key == "reset_after") {
        s.reset_after = value.get<std::set<int>>();
      } else {
        throw Error(ErrorCode::InvalidArgument, "unknown replay key '" + key + "'");
      }
    } catch (const json::exception&) {
      throw Error(ErrorCode::InvalidArgument, "wrong type for replay key '" + key + "'");
    }
  }
  if (s.problem_id.empty()) throw Error(ErrorCode::InvalidArgument, "replay session needs problem_id");
  const int n = static_cast<int>(s.messages.size());
  for (const auto* set : {&s.run_after, &s.reset_after}) {
    for (int i : *set) {
      if (i < 1 || i > n) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("message index {} is outside 1..{}", i, n));
      }
    }
  }
  return s;
}

}  // namespace

ReplayScript replay_script_from_json(const json& doc) {
  ReplayScript script;
  if (doc.is_object() && doc.contains("sessions")) {
    if (doc.size() != 1 || !doc["sessions"].is_array()) {
      throw Error(ErrorCode::InvalidArgument, "a multi-session script holds only a 'sessions' list");
    }
    for (const auto& s : doc["sessions"]) script.sessions.push_back(session_from_json(s));
  } else {
    script.sessions.push_back(session_from_json(doc));
  }
  return script;
}

ReplayScript load_replay_script(const std::filesystem::path& path) {
  try {
    return replay_script_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

int run_replay(const ReplayScript& script, const service::ServiceConfig& config, std::ostream& out,
               std::ostream& err) {
  std::unique_ptr<service::Platform> platform;
  try {
    platform = service::build_platform(config);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  }

  std::vector<std::string> ids;
  int status = 0;
  for (std::size_t si = 0; si < script.sessions.size() && status == 0; ++si) {
    const auto& s = script.sessions[si];
    std::size_t mi = 0;
    try {
      ids.push_back(platform->start_session(s.student_id, s.problem_id));
      for (mi = 1; mi <= s.messages.size(); ++mi) {
        const int i = static_cast<int>(mi);
        platform->post_message(ids.back(), s.messages[mi - 1]);
        platform->drain();
        if (s.run_after.count(i)) platform->run_code(ids.back());
        if (s.reset_after.count(i)) platform->reset_conversation(ids.back());
      }
    } catch (const Error& e) {
      platform->drain();
      err << fmt::format("error: {} at session {} message {}: {}\n", to_string(e.code()), si + 1, mi, e.what());
      status = 1;
    }
  }

  json summaries = json::array();
  for (const auto& id : ids) summaries.push_back(dialogue::session_summary(platform->session(id)));
  out << json{{"sessions", summaries}}.dump(2) << "\n";
  return status;
}

int cmd_serve(const std::filesystem::path& config_path, std::ostream& err) {
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  service::ServiceConfig config;
  std::unique_ptr<service::Platform> platform;
  try {
    config = service::load_config(config_path);
    platform = service::build_platform(config);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  }

  service::HttpServer server(*platform, {config.bucket_edges, config.ui_static_path});
  const int port = server.bind(config.host(), config.port());
  if (port < 0) {
    err << "error: cannot listen on " << config.listen << "\n";
    return 2;
  }
  err << "listening on " << config.host() << ":" << port << std::endl;

  std::atomic<bool> done{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    if (!done) server.stop();
  });
  server.serve_bound();
  done = true;
  // Wake the waiter if serving ended for another reason.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace promptprog::cli
