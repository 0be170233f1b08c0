#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptprog/code_blocks.hpp"
#include "promptprog/corpus.hpp"
#include "promptprog/events.hpp"

namespace promptprog::analytics {

inline constexpr int kSchemaVersion = 1;

struct StudentMessage {
  int position = 0;
  std::size_t char_length = 0;
  bool operator==(const StudentMessage&) const = default;
};

struct CodeEvent {
  runner::MessageRef ref;
  bool correct = false;  // shadow grade all_ok
  bool executed = false;
  std::vector<std::string> correct_functions;  // sorted
  bool operator==(const CodeEvent&) const = default;
};

struct ConversationTrace {
  int index = 0;
  std::vector<StudentMessage> student_messages;
  std::vector<CodeEvent> code_events;  // ordered by message_ref
  std::optional<int> solved_at_message;
  bool operator==(const ConversationTrace&) const = default;
};

struct StudentProblemTrace {
  std::string session_id;
  std::string student_id;
  std::string problem_id;
  corpus::Tier tier = corpus::Tier::L7;
  std::vector<std::string> functions;  // sorted
  std::vector<ConversationTrace> conversations;
  bool solved = false;  // a visible run passed every function
  bool operator==(const StudentProblemTrace&) const = default;
};

struct TraceSet {
  std::vector<StudentProblemTrace> traces;  // ordered by (problem, student, session)
  std::vector<events::LogWarning> warnings;
};

/// Groups events by session and rebuilds each trace through the same event
/// application the service uses. Orphan events become warnings.
TraceSet reconstruct_traces(const std::vector<events::EventRecord>& log);

/// Lowest-index conversation whose cumulative correct set reaches every
/// function, or nullptr.
const ConversationTrace* first_successful_conversation(const StudentProblemTrace& trace);

using State = std::vector<std::string>;  // sorted function names

std::string state_label(const State& s);  // "{f1,f2}"

struct ProgressionGraph {
  std::string problem_id;
  std::set<State> nodes;
  std::map<std::pair<State, State>, int> edges;
  int student_count = 0;
  bool operator==(const ProgressionGraph&) const = default;
};

/// Progression over the first successful conversations of traces for
/// `problem_id`. The full function set comes from the traces; throws
/// Error(UnknownProblem) when no trace is for that problem.
ProgressionGraph build_progression_graph(const std::vector<StudentProblemTrace>& traces,
                                         const std::string& problem_id);
ProgressionGraph build_progression_graph(const std::vector<StudentProblemTrace>& traces,
                                         const corpus::Problem& problem);

/// Keeps the k heaviest edges, ties broken by from-state then to-state in
/// lexicographic order of their sorted name lists; nodes become the
/// endpoints of kept edges. Throws Error(InvalidArgument) for k < 1.
ProgressionGraph filter_top_edges(const ProgressionGraph& g, int k = 15);

enum class GraphFormat { Dot, Structured };
std::string export_graph(const ProgressionGraph& g, GraphFormat format);
nlohmann::json graph_to_json(const ProgressionGraph& g);
ProgressionGraph graph_from_json(const nlohmann::json& doc);

struct MetricTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;
  bool operator==(const MetricTable&) const = default;
};

nlohmann::json to_json(const MetricTable& t);
std::string to_csv(const MetricTable& t);

inline const std::vector<int> kDefaultBucketEdges{1, 2, 3, 4, 5};

/// Per tier, fraction of solving students whose first successful
/// conversation ended in each bucket (e_{i-1}, e_i], plus "> last".
/// Throws Error(InvalidArgument) unless edges are positive and increasing.
MetricTable length_distribution(const std::vector<StudentProblemTrace>& traces,
                                const std::vector<int>& bucket_edges = kDefaultBucketEdges);

/// Per tier and position k, median char length of the k-th student message
/// of first successful conversations (up to the solving message).
MetricTable median_size_by_position(const std::vector<StudentProblemTrace>& traces);

/// Per tier, execution fractions overall and conditioned on correctness,
/// over every code event of every conversation.
MetricTable execution_selectivity(const std::vector<StudentProblemTrace>& traces);

/// Per tier, means of conversations and student messages per
/// (student, problem) pair, pair solve rate, and student success rate.
MetricTable descriptive_stats(const std::vector<StudentProblemTrace>& traces);

/// Problems a student must solve for a lab to count as a success.
int required_solves(corpus::Tier tier) noexcept;

}  // namespace promptprog::analytics
