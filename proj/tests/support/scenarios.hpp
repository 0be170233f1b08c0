#pragma once

#include <string>
#include <vector>

namespace pp_test {

/// Outcome of one end-to-end check. Failures are collected, not thrown.
struct Verdict {
  std::vector<std::string> failures;
  std::string note;

  [[nodiscard]] bool ok() const { return failures.empty(); }
  void expect(bool condition, const std::string& what);
  /// note plus up to `max` failures, one per line.
  [[nodiscard]] std::string summary(std::size_t max = 5) const;
};

/// validate --check-solutions on the shipped corpus, tier counts and
/// limits, and limit enforcement through replay and the platform.
Verdict corpus_fidelity();

/// Hidden expectations against the independent evaluator, reference
/// solutions all_ok, every seeded mutant rejected.
Verdict grading_soundness();

/// Helpers-only block for password-validation in both grading modes.
Verdict partial_multi_function();

/// Random logs through the platform versus the plan-derived graph and
/// top-edge selection.
Verdict progression_equivalence(int rounds = 100, unsigned seed = 7);

/// Descriptive means, long L10 solvers and execution selectivity on
/// constructed cohorts.
Verdict metric_cohorts();

/// Random post/run/reset sequences, each on a fresh platform.
Verdict dialogue_invariants(int sequences = 1000, unsigned seed = 20240611);

/// Forked children killed at each append fault point; recovered state must
/// equal the acknowledged state or include only the in-flight operation.
Verdict crash_consistency(int kill_points = 100);

/// Three-student replay followed by every analyze report, twice; outputs
/// must match each other and the hand-computed tables.
Verdict closed_loop();

}  // namespace pp_test
