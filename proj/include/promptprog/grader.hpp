#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptprog/code_blocks.hpp"
#include "promptprog/corpus.hpp"
#include "promptprog/driver.hpp"
#include "promptprog/sandbox.hpp"

namespace promptprog::runner {

enum class ReportStatus { CompileError, RuntimeError, Graded };

std::string_view to_string(ReportStatus status) noexcept;
std::optional<ReportStatus> parse_report_status(std::string_view text) noexcept;

struct FunctionResult {
  int passed = 0;
  int total = 0;
  bool ok = false;
  ReportStatus status = ReportStatus::Graded;  // outcome of the unit that graded it

  bool operator==(const FunctionResult&) const = default;
};

struct ExecutionReport {
  ReportStatus status = ReportStatus::Graded;
  std::map<std::string, FunctionResult> per_function;
  std::string diagnostics;
  bool all_ok = false;
  bool visible_to_student = false;
  double duration_ms = 0.0;
  std::optional<int> run_index;

  /// Sorted names of functions with ok = true.
  [[nodiscard]] std::vector<std::string> correct_functions() const;
};

nlohmann::json to_json(const ExecutionReport& report);
ExecutionReport execution_report_from_json(const nlohmann::json& doc);

/// Toolchain commands. `c_compile` is split on whitespace after `{src}` and
/// `{out}` are substituted.
struct Toolchain {
  std::string c_compile = "cc -std=gnu11 -O1 -w -fno-diagnostics-show-caret -o {out} {src} -lm";
  std::string python = "python3";
};

nlohmann::json to_json(const Toolchain& toolchain);
Toolchain toolchain_from_json(const nlohmann::json& doc);

/// Throws Error(ToolchainMissing) when the command for `language` is absent.
void check_toolchain(const Toolchain& toolchain, corpus::Language language);

struct UnitOutcome {
  std::string name;
  std::vector<std::string> functions;
  std::size_t test_count = 0;
  bool compiled = false;
  ProcessResult compile;
  std::optional<ProcessResult> run;  // set iff compiled
};

struct RawOutcome {
  std::vector<UnitOutcome> units;
  double duration_ms = 0.0;
};

/// Compiles and runs every unit of `bundle` in its own scratch directory.
RawOutcome execute(const SourceBundle& bundle, const SandboxPolicy& policy, const Toolchain& toolchain,
                   const std::filesystem::path& scratch_root = {});

/// Turns raw outcomes into a report over every function of `problem`.
/// Diagnostics are limited to `diagnostics_cap` bytes.
ExecutionReport grade_outcome(const RawOutcome& raw, const corpus::Problem& problem,
                              std::size_t diagnostics_cap);

/// Grades a code block against a problem's hidden tests.
class Grader {
 public:
  virtual ~Grader() = default;
  virtual ExecutionReport grade(const corpus::Problem& problem, const CodeBlock& block) = 0;
};

class SandboxGrader final : public Grader {
 public:
  SandboxGrader(SandboxPolicy policy, Toolchain toolchain, GradingMode mode,
                std::filesystem::path scratch_root = {});

  ExecutionReport grade(const corpus::Problem& problem, const CodeBlock& block) override;

  [[nodiscard]] const SandboxPolicy& policy() const noexcept { return policy_; }
  [[nodiscard]] GradingMode mode() const noexcept { return mode_; }

 private:
  SandboxPolicy policy_;
  Toolchain toolchain_;
  GradingMode mode_;
  std::filesystem::path scratch_root_;
};

}  // namespace promptprog::runner
