#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptprog/signature.hpp"

namespace promptprog::corpus {

enum class Tier { L7, L9, L10 };

std::string_view to_string(Tier tier) noexcept;
std::optional<Tier> parse_tier(std::string_view text) noexcept;
/// Conversation limit a tier uses when a definition omits `message_limit`.
int default_message_limit(Tier tier) noexcept;

enum class ProblemKind { SingleFunction, MultiFunction };
std::string_view to_string(ProblemKind kind) noexcept;

struct Comparison {
  enum class Mode { Exact, ArrayEqual, Epsilon };
  Mode mode = Mode::Exact;
  double tolerance = 0.0;

  [[nodiscard]] std::string to_string() const;
  static std::optional<Comparison> parse(std::string_view text);
  bool operator==(const Comparison&) const = default;
};

struct TestCase {
  nlohmann::json inputs = nlohmann::json::array();
  nlohmann::json expected;
  Comparison comparison;

  bool operator==(const TestCase&) const = default;
};

struct FunctionSpec {
  std::string name;
  std::string signature;
  std::vector<std::string> depends_on;
  std::vector<TestCase> visible_examples;
  std::vector<TestCase> hidden_tests;

  bool operator==(const FunctionSpec&) const = default;
};

struct StructDecl {
  std::string name;
  std::string fields;

  bool operator==(const StructDecl&) const = default;
};

struct Problem {
  std::string id;
  std::string title;
  Tier tier = Tier::L7;
  Language language = Language::C;
  std::string description;
  std::vector<FunctionSpec> functions;
  int message_limit = 5;
  std::vector<StructDecl> struct_decls;

  [[nodiscard]] ProblemKind kind() const noexcept {
    return functions.size() > 1 || !struct_decls.empty() ? ProblemKind::MultiFunction
                                                         : ProblemKind::SingleFunction;
  }
  [[nodiscard]] const FunctionSpec* find_function(std::string_view name) const noexcept;
  [[nodiscard]] std::vector<std::string> function_names() const;

  bool operator==(const Problem&) const = default;
};

/// Machine-readable validation finding. `code` is one of the stable names
/// listed in corpus.cpp (e.g. "LimitOutOfRange", "SelfDependency").
struct ValidationIssue {
  std::string code;
  std::string detail;

  bool operator==(const ValidationIssue&) const = default;
};

std::vector<ValidationIssue> validate_problem(const Problem& p);

/// Parsed struct layouts and signatures of a valid problem.
std::vector<StructLayout> struct_layouts(const Problem& p);

/// Strict parse of one definition; unknown fields are rejected with
/// Error(MalformedDefinition).
Problem problem_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Problem& p);

/// Outcome of reading a single definition file, valid or not.
struct FileReport {
  std::filesystem::path path;
  std::optional<Problem> problem;
  std::string load_error;  // non-empty when the file could not be parsed
  std::vector<ValidationIssue> issues;

  [[nodiscard]] bool ok() const noexcept { return problem && load_error.empty() && issues.empty(); }
};

/// Reads every `*.json` file directly under `dir` (sorted by filename).
std::vector<FileReport> scan_corpus(const std::filesystem::path& dir);

/// All problems, validated, ordered by (tier, id). Throws
/// Error(MalformedDefinition | DuplicateProblemId | InvariantViolation).
std::vector<Problem> load_corpus(const std::filesystem::path& dir);

/// Student-facing panel text. Hidden tests never appear.
std::string render_specification(const Problem& p);

/// Renders a literal the way the specification panel shows it.
std::string render_value(const nlohmann::json& value);

/// Immutable problem set shared by the platform after startup.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Problem> problems);

  [[nodiscard]] const std::vector<Problem>& problems() const noexcept { return problems_; }
  /// Throws Error(UnknownProblem).
  [[nodiscard]] const Problem& get(std::string_view id) const;
  [[nodiscard]] const Problem* find(std::string_view id) const noexcept;

 private:
  std::vector<Problem> problems_;
};

}  // namespace promptprog::corpus
