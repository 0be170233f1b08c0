#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace promptprog::events {

enum class EventKind {
  SessionStarted,
  MessagePosted,
  AssistantReplied,
  CodeGenerated,
  ShadowGrade,
  RunRequested,
  RunResult,
  ConversationReset,
  ProblemSolved,
  ProviderFailure,
};

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view text) noexcept;

struct EventRecord {
  std::uint64_t seq = 0;
  std::string ts;  // RFC 3339 UTC, millisecond precision
  std::string session_id;
  EventKind kind = EventKind::SessionStarted;
  nlohmann::json payload = nlohmann::json::object();
  // Position within a multi-event append; a batch missing its tail is dropped on read.
  std::uint32_t batch_index = 0;
  std::uint32_t batch_size = 1;

  bool operator==(const EventRecord&) const = default;
};

/// An event before the log assigns seq and ts.
struct NewEvent {
  std::string session_id;
  EventKind kind;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const EventRecord& e);
/// Throws Error(CorruptLog) on missing or mistyped fields.
EventRecord event_from_json(const nlohmann::json& doc);
/// One JSONL line without the trailing newline.
std::string to_line(const EventRecord& e);

std::string utc_timestamp();

struct LogWarning {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

/// Parses JSONL text. An unterminated or unparsable final line, or a final
/// batch missing records, is reported as a warning and skipped; any other bad
/// line throws Error(CorruptLog).
std::vector<EventRecord> parse_events(std::string_view text, std::vector<LogWarning>* warnings = nullptr);

/// Reads a log file (a missing file reads as empty).
std::vector<EventRecord> read_event_file(const std::filesystem::path& path,
                                         std::vector<LogWarning>* warnings = nullptr);

/// Points at which a test hook may interrupt an append.
enum class FaultPoint { BeforeWrite, AfterWrite, AfterSync };

/// Append-only JSONL event log with a single writer. Each append is one
/// write(2) followed by fdatasync; on failure the file is truncated back and
/// Error(StorageFailure) is thrown.
class EventLog {
 public:
  /// Opens or creates `path`. A partial trailing line left by a crash is cut
  /// off (recorded in warnings()); other corruption throws Error(CorruptLog).
  explicit EventLog(std::filesystem::path path);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  std::vector<EventRecord> append(std::vector<NewEvent> batch);
  EventRecord append(NewEvent event);

  /// Events in seq order, optionally for one session.
  [[nodiscard]] std::vector<EventRecord> read(const std::optional<std::string>& session_id = {}) const;

  [[nodiscard]] std::uint64_t last_seq() const;
  [[nodiscard]] const std::vector<LogWarning>& warnings() const noexcept { return warnings_; }
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

  /// Test hook invoked at each FaultPoint. Throwing from it makes the append
  /// fail (and roll back) as a storage error would.
  void set_fault_hook(std::function<void(FaultPoint)> hook);

  /// Replaces the timestamp source (tests use a fixed clock).
  void set_clock(std::function<std::string()> clock);

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t next_seq_ = 1;
  off_t size_ = 0;
  std::vector<LogWarning> warnings_;
  std::function<void(FaultPoint)> fault_hook_;
  std::function<std::string()> clock_;
  mutable std::mutex mu_;
};

}  // namespace promptprog::events
