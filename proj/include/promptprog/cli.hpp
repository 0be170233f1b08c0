#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptprog/config.hpp"

namespace promptprog::cli {

struct ValidateOptions {
  std::filesystem::path corpus_dir;
  bool check_solutions = false;
  /// Defaults to <corpus_dir>/solutions; files are <id>.c or <id>.py.
  std::optional<std::filesystem::path> solutions_dir;
  runner::Toolchain toolchain;
  runner::SandboxPolicy sandbox;
};

int cmd_validate(const ValidateOptions& opts, std::ostream& out, std::ostream& err);

enum class Report { Progression, Lengths, Sizes, Selectivity, Descriptive };
std::optional<Report> parse_report(const std::string& name);

enum class OutputFormat { Structured, Csv, Dot };
std::optional<OutputFormat> parse_format(const std::string& name);

struct AnalyzeOptions {
  std::filesystem::path log_path;
  Report report = Report::Descriptive;
  std::optional<std::string> problem;
  int top_edges = 15;
  std::vector<int> buckets{1, 2, 3, 4, 5};
  std::optional<OutputFormat> format;  // default: dot for progression, structured otherwise
  std::optional<std::filesystem::path> out_path;
};

/// Rendered report text, byte-stable for a given log and options.
std::string render_report(const AnalyzeOptions& opts, std::ostream& err);
int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err);

std::vector<int> parse_bucket_list(const std::string& csv);

struct ReplaySession {
  std::string student_id = "student-1";
  std::string problem_id;
  std::vector<std::string> messages;
  std::set<int> run_after;    // 1-based message indices
  std::set<int> reset_after;  // 1-based message indices
};

struct ReplayScript {
  std::vector<ReplaySession> sessions;
};

/// Accepts one session object or {"sessions": [...]}. Throws
/// Error(InvalidArgument) for out-of-range indices or unknown keys.
ReplayScript replay_script_from_json(const nlohmann::json& doc);
ReplayScript load_replay_script(const std::filesystem::path& path);

/// Runs the script against an in-process platform built from `config`.
/// Prints the session summaries as structured data; on a protocol error
/// prints "error: CODE at session S message M: ..." and returns nonzero.
int run_replay(const ReplayScript& script, const service::ServiceConfig& config, std::ostream& out,
               std::ostream& err);

/// Blocks until SIGINT or SIGTERM, then shuts the server down.
int cmd_serve(const std::filesystem::path& config_path, std::ostream& err);

}  // namespace promptprog::cli
