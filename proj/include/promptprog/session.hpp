#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptprog/code_blocks.hpp"
#include "promptprog/corpus.hpp"
#include "promptprog/events.hpp"

namespace promptprog::dialogue {

enum class Role { Student, Assistant };
std::string_view to_string(Role role) noexcept;

enum class ClosedBy { None, Reset, Limit, Solved };
std::string_view to_string(ClosedBy c) noexcept;
std::optional<ClosedBy> parse_closed_by(std::string_view text) noexcept;

/// Number of Unicode code points in UTF-8 text.
std::size_t char_length(std::string_view utf8) noexcept;

struct Message {
  Role role = Role::Student;
  std::string content;
  int position = 0;  // 1-based among messages of the same role
  std::size_t char_length = 0;
  std::vector<runner::CodeBlock> code_blocks;
  std::string timestamp;

  bool operator==(const Message&) const = default;
};

struct ShadowRecord {
  runner::MessageRef ref;
  bool all_ok = false;
  std::vector<std::string> correct_functions;  // sorted

  bool operator==(const ShadowRecord&) const = default;
};

struct Conversation {
  int index = 0;
  std::vector<Message> messages;
  ClosedBy closed_by = ClosedBy::None;
  bool solved_here = false;  // a visible run in this conversation solved the problem
  std::vector<ShadowRecord> shadow;
  std::set<runner::MessageRef> executed;

  [[nodiscard]] int student_count() const noexcept;
  [[nodiscard]] int assistant_count() const noexcept;
  bool operator==(const Conversation&) const = default;
};

struct Session {
  std::string session_id;
  std::string student_id;
  std::string problem_id;
  corpus::Tier tier = corpus::Tier::L7;
  std::vector<std::string> functions;
  int message_limit = 5;
  std::vector<Conversation> conversations;
  int run_counter = 0;
  bool solved = false;
  std::string created_at;
  std::optional<nlohmann::json> last_report;
  /// Idempotency key -> original response body, for run and reset.
  std::map<std::string, nlohmann::json> run_keys;
  std::map<std::string, nlohmann::json> reset_keys;
  /// True while the last student message awaits a reply (only mid-request
  /// or at the torn tail of a log).
  bool pending_reply = false;

  [[nodiscard]] Conversation& active() { return conversations.back(); }
  [[nodiscard]] const Conversation& active() const { return conversations.back(); }
  bool operator==(const Session&) const = default;
};

/// Payload of session_started for `problem`.
nlohmann::json session_started_payload(const std::string& student_id, const corpus::Problem& problem);

/// Applies one event. The live service and log replay share this function.
/// Throws Error(CorruptLog) for events inconsistent with the session.
void apply_event(Session& session, const events::EventRecord& event);

/// Creates a session from its session_started event.
Session session_from_start(const events::EventRecord& event);

/// Drops a student message left without a reply at the end of a replay.
void finish_replay(Session& session);

struct ReplayResult {
  std::map<std::string, Session> sessions;
  std::vector<events::LogWarning> warnings;  // orphan or inconsistent events
};

/// Rebuilds all sessions from an ordered event stream. Orphan and
/// inconsistent events become warnings, or Error(CorruptLog) when `strict`.
ReplayResult replay_sessions(const std::vector<events::EventRecord>& log, bool strict = false);

/// Closing reason for the active conversation when it is reset.
ClosedBy closing_reason(const Session& session);

/// Default system prompt naming the problem language.
std::string build_system_prompt(const corpus::Problem& problem);

struct Turn {
  Role role;
  std::string content;
  bool operator==(const Turn&) const = default;
};

struct ProviderRequest {
  std::string system_prompt;
  std::vector<Turn> history;
  std::string problem_id;
  int turn_index = 0;  // 1-based student position in the active conversation
};

struct ProviderReply {
  std::string content;
  std::string provider_meta;
};

/// Active-conversation history (including a pending student turn).
std::vector<Turn> active_history(const Session& session);

/// Last block of the last assistant message with blocks in the active
/// conversation. Throws Error(NoCodeAvailable).
const runner::CodeBlock& latest_runnable_block(const Session& session);

/// Client-facing summary.
nlohmann::json session_summary(const Session& session);

}  // namespace promptprog::dialogue
