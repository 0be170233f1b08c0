#include "promptprog/grader.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::runner {

using nlohmann::json;

std::string_view to_string(ReportStatus status) noexcept {
  switch (status) {
    case ReportStatus::CompileError: return "compile_error";
    case ReportStatus::RuntimeError: return "runtime_error";
    case ReportStatus::Graded: return "graded";
  }
  return "graded";
}

std::optional<ReportStatus> parse_report_status(std::string_view text) noexcept {
  for (auto s : {ReportStatus::CompileError, ReportStatus::RuntimeError, ReportStatus::Graded}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::vector<std::string> ExecutionReport::correct_functions() const {
  std::vector<std::string> out;
  for (const auto& [name, r] : per_function) {
    if (r.ok) out.push_back(name);
  }
  return out;
}

json to_json(const ExecutionReport& r) {
  json per = json::object();
  for (const auto& [name, f] : r.per_function) {
    per[name] = {{"passed", f.passed}, {"total", f.total}, {"ok", f.ok}, {"status", to_string(f.status)}};
  }
  json doc{{"status", to_string(r.status)},     {"per_function", per},
           {"diagnostics", r.diagnostics},      {"all_ok", r.all_ok},
           {"visible_to_student", r.visible_to_student}, {"duration_ms", r.duration_ms}};
  doc["run_index"] = r.run_index ? json(*r.run_index) : json(nullptr);
  return doc;
}

ExecutionReport execution_report_from_json(const json& doc) {
  ExecutionReport r;
  auto status = parse_report_status(doc.at("status").get<std::string>());
  if (!status) throw Error(ErrorCode::InvalidArgument, "unknown report status");
  r.status = *status;
  for (const auto& [name, f] : doc.at("per_function").items()) {
    FunctionResult fr;
    fr.passed = f.at("passed").get<int>();
    fr.total = f.at("total").get<int>();
    fr.ok = f.at("ok").get<bool>();
    fr.status = parse_report_status(f.value("status", "graded")).value_or(ReportStatus::Graded);
    r.per_function.emplace(name, fr);
  }
  r.diagnostics = doc.value("diagnostics", "");
  r.all_ok = doc.at("all_ok").get<bool>();
  r.visible_to_student = doc.value("visible_to_student", false);
  r.duration_ms = doc.value("duration_ms", 0.0);
  if (doc.contains("run_index") && !doc["run_index"].is_null()) r.run_index = doc["run_index"].get<int>();
  return r;
}

json to_json(const Toolchain& t) { return {{"c_compile", t.c_compile}, {"python", t.python}}; }

Toolchain toolchain_from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "toolchain must be an object");
  Toolchain t;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_string()) throw Error(ErrorCode::InvalidConfig, "toolchain." + key + " must be a string");
    if (key == "c_compile") {
      t.c_compile = value.get<std::string>();
    } else if (key == "python") {
      t.python = value.get<std::string>();
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown key 'toolchain." + key + "'");
    }
  }
  if (t.c_compile.find("{src}") == std::string::npos || t.c_compile.find("{out}") == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "toolchain.c_compile must contain {src} and {out}");
  }
  return t;
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::SandboxSetupFailure, "cannot write " + path.string());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// The generated driver embeds hidden test values, so compiler output that
// refers to it is reduced to the bare fact of the failure.
std::string scrub_compile_output(const std::string& text) {
  static const std::regex undefined_ref("undefined reference to `([^']*)'");
  std::string out;
  std::set<std::string> seen;
  bool driver_error = false;
  for (const auto& line : lines_of(text)) {
    std::smatch m;
    if (std::regex_search(line, m, undefined_ref)) {
      if (seen.insert(m[1]).second) out += fmt::format("error: undefined reference to `{}'\n", m[1].str());
      continue;
    }
    if (line.find("driver.c") != std::string::npos) {
      if (line.find("error") != std::string::npos) driver_error = true;
      continue;
    }
    if (line.find("/ld:") != std::string::npos || line.find("unit.c") != std::string::npos) continue;
    out += line;
    out += '\n';
  }
  if (driver_error) out += "error: the code does not match the required function signatures\n";
  return out;
}

// Keeps only the driver's own per-test notes from runtime stderr.
std::string scrub_runtime_output(const std::string& text) {
  static const std::regex note(R"(^[A-Za-z_][A-Za-z0-9_]* test [0-9]+: [a-z ()0-9]+$)");
  std::string out;
  for (const auto& line : lines_of(text)) {
    if (std::regex_match(line, note)) {
      out += line;
      out += '\n';
    }
  }
  return out;
}

std::string truncate_to(std::string s, std::size_t cap) {
  if (s.size() > cap) {
    s.resize(cap);
  }
  return s;
}

double run_deadline(const SandboxPolicy& policy, std::size_t test_count) {
  double t = policy.per_test_timeout_s * static_cast<double>(std::max<std::size_t>(1, test_count));
  return test_count > 0 ? t + 0.5 : t;
}

}  // namespace

void check_toolchain(const Toolchain& toolchain, corpus::Language language) {
  const auto words = split_words(language == corpus::Language::C ? toolchain.c_compile : toolchain.python);
  if (words.empty() || find_executable(words[0]).empty()) {
    throw Error(ErrorCode::ToolchainMissing,
                fmt::format("no {} toolchain: '{}' not found", corpus::to_string(language),
                            words.empty() ? "" : words[0]));
  }
}

RawOutcome execute(const SourceBundle& bundle, const SandboxPolicy& policy, const Toolchain& toolchain,
                   const std::filesystem::path& scratch_root) {
  policy.validate();
  const auto started = std::chrono::steady_clock::now();
  RawOutcome raw;
  for (const auto& unit : bundle.units) {
    ScratchDir dir(scratch_root);
    UnitOutcome out;
    out.name = unit.name;
    out.functions = unit.functions;
    out.test_count = unit.test_count;

    ProcessSpec compile;
    compile.workdir = dir.path();
    compile.timeout_s = policy.compile_timeout_s;
    compile.max_output_bytes = policy.max_output_bytes;
    compile.deny_network = policy.deny_network;
    compile.confine_filesystem = policy.temp_dir_only;

    ProcessSpec run = compile;
    run.timeout_s = run_deadline(policy, unit.test_count);
    run.memory_limit_bytes = static_cast<std::size_t>(policy.memory_limit_mb) * 1024 * 1024;

    if (bundle.language == corpus::Language::C) {
      const auto src = dir.path() / "unit.c";
      const auto bin = dir.path() / "unit";
      write_file(src, unit.source);
      for (const auto& w : split_words(toolchain.c_compile)) {
        compile.argv.push_back(replace_all(replace_all(w, "{src}", src.string()), "{out}", bin.string()));
      }
      run.argv = {bin.string()};
    } else {
      const auto src = dir.path() / "student.py";
      write_file(src, unit.source);
      compile.argv = split_words(toolchain.python);
      compile.argv.push_back(src.string());
      compile.extra_env = {"PROMPTPROG_LINK_CHECK=1"};
      run.argv = split_words(toolchain.python);
      run.argv.push_back(src.string());
    }
    if (compile.argv.empty()) throw Error(ErrorCode::ToolchainMissing, "empty toolchain command");

    out.compile = run_sandboxed(compile);
    out.compile.stderr_data = replace_all(out.compile.stderr_data, dir.path().string() + "/", "");
    out.compiled = out.compile.exited_ok();
    if (out.compiled) out.run = run_sandboxed(run);
    raw.units.push_back(std::move(out));
  }
  raw.duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return raw;
}

ExecutionReport grade_outcome(const RawOutcome& raw, const corpus::Problem& problem,
                              std::size_t diagnostics_cap) {
  static const std::regex result_line(R"(^RESULT ([A-Za-z_][A-Za-z0-9_]*) ([0-9]+) (PASS|FAIL)$)");
  ExecutionReport report;
  report.duration_ms = raw.duration_ms;
  for (const auto& fn : problem.functions) {
    report.per_function[fn.name].total = static_cast<int>(fn.hidden_tests.size());
  }

  std::string diagnostics;
  std::size_t compile_failures = 0;
  bool runtime_error = false;

  for (const auto& unit : raw.units) {
    if (!unit.compiled) {
      ++compile_failures;
      for (const auto& f : unit.functions) {
        auto& r = report.per_function[f];
        r = FunctionResult{0, r.total, false, ReportStatus::CompileError};
      }
      std::string text = unit.compile.timed_out ? "error: compilation timed out\n"
                                                : scrub_compile_output(unit.compile.stderr_data);
      if (text.empty()) text = fmt::format("error: compilation failed (exit {})\n", unit.compile.exit_code);
      diagnostics += text;
      continue;
    }

    const auto& run = *unit.run;
    std::set<std::string> unit_fns(unit.functions.begin(), unit.functions.end());
    std::map<std::string, std::set<unsigned long>> seen;
    std::map<std::string, int> passed;
    bool malformed = false;
    for (const auto& line : lines_of(run.stdout_data)) {
      if (line.rfind("RESULT", 0) != 0) continue;
      std::smatch m;
      if (!std::regex_match(line, m, result_line) || !unit_fns.count(m[1])) {
        malformed = true;
        continue;
      }
      const auto idx = std::stoul(m[2]);
      if (!seen[m[1]].insert(idx).second) {
        malformed = true;
        continue;
      }
      if (m[3] == "PASS") ++passed[m[1]];
    }

    std::size_t reported = 0;
    for (const auto& [fn, idxs] : seen) reported += idxs.size();
    const bool incomplete = reported < unit.test_count;
    const bool unit_failed = malformed || !run.exited_ok() || (incomplete && !run.output_truncated);
    if (malformed) diagnostics += "error: malformed or duplicate result lines\n";
    if (run.timed_out) {
      diagnostics += "error: execution timed out\n";
    } else if (run.term_signal != 0) {
      diagnostics += fmt::format("error: program terminated by signal {}\n", run.term_signal);
    } else if (run.exit_code != 0) {
      diagnostics += fmt::format("error: program exited with status {}\n", run.exit_code);
    }
    diagnostics += scrub_runtime_output(run.stderr_data);
    runtime_error = runtime_error || unit_failed;

    for (const auto& f : unit.functions) {
      auto& r = report.per_function[f];
      r.passed = passed[f];
      r.status = unit_failed ? ReportStatus::RuntimeError : ReportStatus::Graded;
    }
  }

  for (auto& [name, r] : report.per_function) {
    r.ok = r.status == ReportStatus::Graded && r.total > 0 && r.passed == r.total;
  }
  if (!raw.units.empty() && compile_failures == raw.units.size()) {
    report.status = ReportStatus::CompileError;
  } else if (runtime_error) {
    report.status = ReportStatus::RuntimeError;
  } else {
    report.status = ReportStatus::Graded;
  }
  report.all_ok = report.status == ReportStatus::Graded &&
                  std::all_of(report.per_function.begin(), report.per_function.end(),
                              [](const auto& kv) { return kv.second.ok; });
  report.diagnostics = truncate_to(std::move(diagnostics), diagnostics_cap);
  return report;
}

SandboxGrader::SandboxGrader(SandboxPolicy policy, Toolchain toolchain, GradingMode mode,
                             std::filesystem::path scratch_root)
    : policy_(policy), toolchain_(std::move(toolchain)), mode_(mode), scratch_root_(std::move(scratch_root)) {
  policy_.validate();
}

ExecutionReport SandboxGrader::grade(const corpus::Problem& problem, const CodeBlock& block) {
  const auto bundle = synthesize_driver(problem, block, mode_, policy_.per_test_timeout_s);
  const auto raw = execute(bundle, policy_, toolchain_, scratch_root_);
  return grade_outcome(raw, problem, policy_.max_output_bytes);
}

}  // namespace promptprog::runner
