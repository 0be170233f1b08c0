#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptprog/code_blocks.hpp"
#include "promptprog/corpus.hpp"

namespace promptprog::runner {

enum class GradingMode { SingleDriver, Modular };

std::string_view to_string(GradingMode mode) noexcept;
std::optional<GradingMode> parse_grading_mode(std::string_view text) noexcept;

/// One compilation unit: student code followed by a generated driver that
/// prints `RESULT <function> <test-index> <PASS|FAIL>` per hidden test.
struct SourceUnit {
  std::string name;                    // "all" or the graded function
  std::vector<std::string> functions;  // functions this unit grades
  std::string source;
  std::size_t test_count = 0;
};

struct SourceBundle {
  corpus::Language language = corpus::Language::C;
  GradingMode mode = GradingMode::SingleDriver;
  std::vector<SourceUnit> units;
};

/// Builds the grading sources for `block`. In single-driver mode all
/// functions share one unit; in modular mode each function gets its own so a
/// missing helper only fails its dependents. Each test runs in a forked child
/// bounded by `per_test_timeout_s`.
///
/// Throws Error(UnsupportedType) for signatures the generator cannot marshal.
SourceBundle synthesize_driver(const corpus::Problem& problem, const CodeBlock& block,
                               GradingMode mode, double per_test_timeout_s = 2.0);

/// C string literal for arbitrary bytes (octal escapes for non-printables).
std::string c_string_literal(std::string_view bytes);

}  // namespace promptprog::runner
