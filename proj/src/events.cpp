#include "promptprog/events.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::events {

using nlohmann::json;

namespace {

constexpr std::string_view kKindNames[] = {
    "session_started", "message_posted",     "assistant_replied", "code_generated", "shadow_grade",
    "run_requested",   "run_result",         "conversation_reset", "problem_solved", "provider_failure",
};

[[noreturn]] void storage_failure(const std::string& what) {
  throw Error(ErrorCode::StorageFailure, what);
}

}  // namespace

std::string_view to_string(EventKind kind) noexcept { return kKindNames[static_cast<int>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view text) noexcept {
  for (std::size_t i = 0; i < std::size(kKindNames); ++i) {
    if (kKindNames[i] == text) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

json to_json(const EventRecord& e) {
  json doc{{"seq", e.seq}, {"ts", e.ts}, {"session_id", e.session_id}, {"kind", to_string(e.kind)},
           {"payload", e.payload}};
  if (e.batch_size > 1) doc["batch"] = {e.batch_index, e.batch_size};
  return doc;
}

EventRecord event_from_json(const json& doc) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::CorruptLog, why); };
  if (!doc.is_object()) throw bad("event is not an object");
  for (const char* key : {"seq", "ts", "session_id", "kind", "payload"}) {
    if (!doc.contains(key)) throw bad(fmt::format("missing field '{}'", key));
  }
  if (!doc["seq"].is_number_unsigned()) throw bad("seq must be a non-negative integer");
  if (!doc["ts"].is_string() || !doc["session_id"].is_string() || !doc["kind"].is_string()) {
    throw bad("ts, session_id and kind must be strings");
  }
  auto kind = parse_event_kind(doc["kind"].get<std::string>());
  if (!kind) throw bad("unknown kind '" + doc["kind"].get<std::string>() + "'");
  if (!doc["payload"].is_object()) throw bad("payload must be an object");
  EventRecord e{doc["seq"].get<std::uint64_t>(), doc["ts"].get<std::string>(),
                doc["session_id"].get<std::string>(), *kind, doc["payload"]};
  if (doc.contains("batch")) {
    const auto& b = doc["batch"];
    if (!b.is_array() || b.size() != 2 || !b[0].is_number_unsigned() || !b[1].is_number_unsigned() ||
        b[1].get<std::uint64_t>() < 2 || b[0].get<std::uint64_t>() >= b[1].get<std::uint64_t>()) {
      throw bad("batch must be [index, size] with index < size");
    }
    e.batch_index = b[0].get<std::uint32_t>();
    e.batch_size = b[1].get<std::uint32_t>();
  }
  return e;
}

std::string to_line(const EventRecord& e) { return to_json(e).dump(); }

std::string utc_timestamp() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto secs = time_point_cast<seconds>(now);
  const auto ms = duration_cast<milliseconds>(now - secs).count();
  std::time_t t = system_clock::to_time_t(secs);
  std::tm tm{};
  ::gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
}

std::vector<EventRecord> parse_events(std::string_view text, std::vector<LogWarning>* warnings) {
  std::vector<EventRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::uint64_t last_seq = 0;
  while (pos < text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    const bool terminated = nl != std::string_view::npos;
    const auto line = text.substr(pos, terminated ? nl - pos : std::string_view::npos);
    pos = terminated ? nl + 1 : text.size();
    const bool last = pos >= text.size();
    if (line.empty()) {
      if (last) break;
      throw Error(ErrorCode::CorruptLog, fmt::format("line {}: empty line", line_no));
    }
    try {
      auto e = event_from_json(json::parse(line));
      if (e.seq <= last_seq) {
        throw Error(ErrorCode::CorruptLog, fmt::format("seq {} not after {}", e.seq, last_seq));
      }
      if (!terminated) {
        // A complete record without its newline is still the torn tail of a write.
        throw Error(ErrorCode::CorruptLog, "unterminated line");
      }
      const bool continues = !out.empty() && out.back().batch_index + 1 < out.back().batch_size;
      if (continues ? e.batch_index != out.back().batch_index + 1 || e.batch_size != out.back().batch_size
                    : e.batch_index != 0) {
        throw Error(ErrorCode::CorruptLog, fmt::format("seq {} breaks batch order", e.seq));
      }
      last_seq = e.seq;
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      if (!last) throw Error(ErrorCode::CorruptLog, fmt::format("line {}: {}", line_no, ex.what()));
      if (warnings) warnings->push_back({line_no, std::string("ignored partial trailing line: ") + ex.what()});
    }
  }
  if (!out.empty() && out.back().batch_index + 1 < out.back().batch_size) {
    const auto kept = out.size() - out.back().batch_index - 1;
    if (warnings) {
      warnings->push_back({kept + 1, fmt::format("ignored incomplete trailing batch of {} events (seq {} onward)",
                                                 out.back().batch_size, out[kept].seq)});
    }
    out.resize(kept);
  }
  return out;
}

std::vector<EventRecord> read_event_file(const std::filesystem::path& path, std::vector<LogWarning>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) return {};
    throw Error(ErrorCode::StorageFailure, "cannot read " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_events(ss.str(), warnings);
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)), clock_(utc_timestamp) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) storage_failure(fmt::format("cannot open {}: {}", path_.string(), std::strerror(errno)));

  std::string text;
  std::ifstream in(path_, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  text = ss.str();
  auto records = parse_events(text, &warnings_);

  // Keep exactly the bytes of the valid records.
  std::size_t keep = 0;
  for (std::size_t i = 0; i < records.size(); ++i) keep = text.find('\n', keep) + 1;
  if (keep != text.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(keep)) != 0) storage_failure("cannot truncate partial tail");
    ::fdatasync(fd_);
  }
  size_ = static_cast<off_t>(keep);
  if (!records.empty()) next_seq_ = records.back().seq + 1;
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::set_fault_hook(std::function<void(FaultPoint)> hook) {
  std::lock_guard lock(mu_);
  fault_hook_ = std::move(hook);
}

void EventLog::set_clock(std::function<std::string()> clock) {
  std::lock_guard lock(mu_);
  clock_ = std::move(clock);
}

std::vector<EventRecord> EventLog::append(std::vector<NewEvent> batch) {
  std::lock_guard lock(mu_);
  std::vector<EventRecord> records;
  std::string bytes;
  auto seq = next_seq_;
  const auto size = static_cast<std::uint32_t>(batch.size());
  for (auto& e : batch) {
    const auto index = static_cast<std::uint32_t>(records.size());
    records.push_back(
        EventRecord{seq++, clock_(), std::move(e.session_id), e.kind, std::move(e.payload), index, size});
    bytes += to_line(records.back());
    bytes += '\n';
  }
  if (records.empty()) return records;

  const off_t before = size_;
  try {
    if (fault_hook_) fault_hook_(FaultPoint::BeforeWrite);
    std::size_t done = 0;
    while (done < bytes.size()) {
      ssize_t n = ::pwrite(fd_, bytes.data() + done, bytes.size() - done, before + static_cast<off_t>(done));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) storage_failure(fmt::format("write failed: {}", std::strerror(errno)));
      done += static_cast<std::size_t>(n);
    }
    if (fault_hook_) fault_hook_(FaultPoint::AfterWrite);
    if (::fdatasync(fd_) != 0) storage_failure(fmt::format("fdatasync failed: {}", std::strerror(errno)));
    if (fault_hook_) fault_hook_(FaultPoint::AfterSync);
  } catch (const std::exception& ex) {
    if (::ftruncate(fd_, before) == 0) ::fdatasync(fd_);
    if (const auto* err = dynamic_cast<const Error*>(&ex); err && err->code() == ErrorCode::StorageFailure) throw;
    throw Error(ErrorCode::StorageFailure, std::string("append failed: ") + ex.what());
  }
  size_ = before + static_cast<off_t>(bytes.size());
  next_seq_ = seq;
  return records;
}

EventRecord EventLog::append(NewEvent event) {
  std::vector<NewEvent> batch;
  batch.push_back(std::move(event));
  return append(std::move(batch)).front();
}

std::vector<EventRecord> EventLog::read(const std::optional<std::string>& session_id) const {
  std::lock_guard lock(mu_);
  auto all = read_event_file(path_);
  if (!session_id) return all;
  std::vector<EventRecord> out;
  for (auto& e : all) {
    if (e.session_id == *session_id) out.push_back(std::move(e));
  }
  return out;
}

std::uint64_t EventLog::last_seq() const {
  std::lock_guard lock(mu_);
  return next_seq_ - 1;
}

}  // namespace promptprog::events
