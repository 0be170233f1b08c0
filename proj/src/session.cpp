#include "promptprog/session.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::dialogue {

using events::EventKind;
using events::EventRecord;
using nlohmann::json;

std::string_view to_string(Role role) noexcept { return role == Role::Student ? "student" : "assistant"; }

std::string_view to_string(ClosedBy c) noexcept {
  switch (c) {
    case ClosedBy::None: return "none";
    case ClosedBy::Reset: return "reset";
    case ClosedBy::Limit: return "limit";
    case ClosedBy::Solved: return "solved";
  }
  return "none";
}

std::optional<ClosedBy> parse_closed_by(std::string_view text) noexcept {
  for (auto c : {ClosedBy::None, ClosedBy::Reset, ClosedBy::Limit, ClosedBy::Solved}) {
    if (to_string(c) == text) return c;
  }
  return std::nullopt;
}

std::size_t char_length(std::string_view utf8) noexcept {
  return static_cast<std::size_t>(
      std::count_if(utf8.begin(), utf8.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

int Conversation::student_count() const noexcept {
  return static_cast<int>(
      std::count_if(messages.begin(), messages.end(), [](const Message& m) { return m.role == Role::Student; }));
}

int Conversation::assistant_count() const noexcept {
  return static_cast<int>(messages.size()) - student_count();
}

json session_started_payload(const std::string& student_id, const corpus::Problem& problem) {
  return {{"student_id", student_id},
          {"problem_id", problem.id},
          {"tier", corpus::to_string(problem.tier)},
          {"functions", problem.function_names()},
          {"message_limit", problem.message_limit}};
}

namespace {

[[noreturn]] void inconsistent(const EventRecord& e, const std::string& why) {
  throw Error(ErrorCode::CorruptLog,
              fmt::format("event {} ({}) for session {}: {}", e.seq, events::to_string(e.kind), e.session_id, why));
}

Conversation& conversation_at(Session& s, const EventRecord& e, int index) {
  if (index < 0 || index >= static_cast<int>(s.conversations.size())) {
    inconsistent(e, fmt::format("no conversation {}", index));
  }
  return s.conversations[static_cast<std::size_t>(index)];
}

const Message* assistant_message(const Conversation& c, int position) {
  for (const auto& m : c.messages) {
    if (m.role == Role::Assistant && m.position == position) return &m;
  }
  return nullptr;
}

void require_block(Session& s, const EventRecord& e, const runner::MessageRef& ref) {
  const auto* m = assistant_message(conversation_at(s, e, ref.conversation), ref.position);
  if (!m || ref.block < 0 || ref.block >= static_cast<int>(m->code_blocks.size())) {
    inconsistent(e, "message_ref does not name a code block");
  }
}

}  // namespace

Session session_from_start(const EventRecord& e) {
  if (e.kind != EventKind::SessionStarted) inconsistent(e, "expected session_started");
  try {
    Session s;
    s.session_id = e.session_id;
    s.student_id = e.payload.at("student_id").get<std::string>();
    s.problem_id = e.payload.at("problem_id").get<std::string>();
    auto tier = corpus::parse_tier(e.payload.at("tier").get<std::string>());
    if (!tier) inconsistent(e, "unknown tier");
    s.tier = *tier;
    s.functions = e.payload.at("functions").get<std::vector<std::string>>();
    s.message_limit = e.payload.at("message_limit").get<int>();
    s.created_at = e.ts;
    s.conversations.push_back(Conversation{});
    return s;
  } catch (const json::exception& ex) {
    inconsistent(e, ex.what());
  }
}

void apply_event(Session& s, const EventRecord& e) {
  if (e.session_id != s.session_id) inconsistent(e, "wrong session");
  const auto& p = e.payload;
  try {
    switch (e.kind) {
      case EventKind::SessionStarted:
        inconsistent(e, "session already started");

      case EventKind::MessagePosted: {
        auto& c = s.active();
        if (p.at("conversation").get<int>() != c.index) inconsistent(e, "not the active conversation");
        if (s.pending_reply) inconsistent(e, "previous message has no reply");
        if (c.student_count() >= s.message_limit) inconsistent(e, "message limit exceeded");
        Message m;
        m.role = Role::Student;
        m.content = p.at("content").get<std::string>();
        m.position = c.student_count() + 1;
        m.char_length = char_length(m.content);
        m.timestamp = e.ts;
        if (p.at("position").get<int>() != m.position) inconsistent(e, "position out of order");
        c.messages.push_back(std::move(m));
        s.pending_reply = true;
        return;
      }

      case EventKind::AssistantReplied: {
        auto& c = s.active();
        if (!s.pending_reply || p.at("conversation").get<int>() != c.index) inconsistent(e, "no pending message");
        Message m;
        m.role = Role::Assistant;
        m.content = p.at("content").get<std::string>();
        m.position = c.assistant_count() + 1;
        m.char_length = char_length(m.content);
        m.timestamp = e.ts;
        m.code_blocks = runner::extract_code_blocks(m.content);
        for (auto& b : m.code_blocks) {
          b.ref.conversation = c.index;
          b.ref.position = m.position;
        }
        c.messages.push_back(std::move(m));
        s.pending_reply = false;
        return;
      }

      case EventKind::CodeGenerated:
        require_block(s, e, runner::message_ref_from_json(p.at("message_ref")));
        return;

      case EventKind::ProviderFailure: {
        auto& c = s.active();
        if (!s.pending_reply || c.messages.empty()) inconsistent(e, "no pending message");
        c.messages.pop_back();
        s.pending_reply = false;
        return;
      }

      case EventKind::ShadowGrade: {
        const auto ref = runner::message_ref_from_json(p.at("message_ref"));
        require_block(s, e, ref);
        ShadowRecord r;
        r.ref = ref;
        r.all_ok = p.at("all_ok").get<bool>();
        r.correct_functions = p.at("correct_functions").get<std::vector<std::string>>();
        std::sort(r.correct_functions.begin(), r.correct_functions.end());
        s.conversations[static_cast<std::size_t>(ref.conversation)].shadow.push_back(std::move(r));
        return;
      }

      case EventKind::RunRequested: {
        const auto ref = runner::message_ref_from_json(p.at("message_ref"));
        require_block(s, e, ref);
        if (p.at("run_index").get<int>() != s.run_counter + 1) inconsistent(e, "run_index out of order");
        s.run_counter += 1;
        s.conversations[static_cast<std::size_t>(ref.conversation)].executed.insert(ref);
        return;
      }

      case EventKind::RunResult: {
        s.last_report = p.at("report");
        if (p.contains("idempotency_key") && p["idempotency_key"].is_string()) {
          s.run_keys[p["idempotency_key"].get<std::string>()] = p.at("report");
        }
        return;
      }

      case EventKind::ProblemSolved: {
        s.solved = true;
        conversation_at(s, e, p.at("conversation").get<int>()).solved_here = true;
        return;
      }

      case EventKind::ConversationReset: {
        auto& c = s.active();
        if (p.at("closed_index").get<int>() != c.index) inconsistent(e, "not the active conversation");
        auto closed_by = parse_closed_by(p.at("closed_by").get<std::string>());
        if (!closed_by || *closed_by == ClosedBy::None) inconsistent(e, "bad closed_by");
        if (s.pending_reply) inconsistent(e, "reset while a reply is pending");
        c.closed_by = *closed_by;
        Conversation next;
        next.index = c.index + 1;
        if (p.at("new_index").get<int>() != next.index) inconsistent(e, "new_index out of order");
        const int new_index = next.index;
        s.conversations.push_back(std::move(next));
        if (p.contains("idempotency_key") && p["idempotency_key"].is_string()) {
          s.reset_keys[p["idempotency_key"].get<std::string>()] = json{{"conversation_index", new_index}};
        }
        return;
      }
    }
  } catch (const json::exception& ex) {
    inconsistent(e, ex.what());
  }
}

void finish_replay(Session& s) {
  if (s.pending_reply) {
    s.active().messages.pop_back();
    s.pending_reply = false;
  }
}

ReplayResult replay_sessions(const std::vector<EventRecord>& log, bool strict) {
  ReplayResult out;
  std::size_t line = 0;
  for (const auto& e : log) {
    ++line;
    try {
      if (e.kind == EventKind::SessionStarted) {
        if (out.sessions.count(e.session_id)) inconsistent(e, "duplicate session id");
        out.sessions.emplace(e.session_id, session_from_start(e));
        continue;
      }
      auto it = out.sessions.find(e.session_id);
      if (it == out.sessions.end()) inconsistent(e, "orphan event for unknown session");
      apply_event(it->second, e);
    } catch (const Error& err) {
      if (strict) throw;
      out.warnings.push_back({line, err.what()});
    }
  }
  for (auto& [id, s] : out.sessions) finish_replay(s);
  return out;
}

ClosedBy closing_reason(const Session& s) {
  const auto& c = s.active();
  if (c.solved_here) return ClosedBy::Solved;
  if (c.student_count() >= s.message_limit) return ClosedBy::Limit;
  return ClosedBy::Reset;
}

std::string build_system_prompt(const corpus::Problem& problem) {
  const auto lang = corpus::to_string(problem.language);
  return fmt::format(
      "You are assisting a student who must produce {0} code by prompting you. Reply with {0} code in fenced "
      "code blocks. Do not include any test code or a main function. Do not include code that prints or reads "
      "unless the task requires it.",
      lang);
}

std::vector<Turn> active_history(const Session& s) {
  std::vector<Turn> out;
  for (const auto& m : s.active().messages) out.push_back({m.role, m.content});
  return out;
}

const runner::CodeBlock& latest_runnable_block(const Session& s) {
  const auto& msgs = s.active().messages;
  for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
    if (it->role == Role::Assistant && !it->code_blocks.empty()) return it->code_blocks.back();
  }
  throw Error(ErrorCode::NoCodeAvailable, "no generated code in the active conversation");
}

json session_summary(const Session& s) {
  json convs = json::array();
  for (const auto& c : s.conversations) {
    json msgs = json::array();
    for (const auto& m : c.messages) {
      json blocks = json::array();
      for (const auto& b : m.code_blocks) {
        blocks.push_back({{"text", b.text}, {"language", b.language_hint ? json(*b.language_hint) : json(nullptr)}});
      }
      msgs.push_back({{"role", to_string(m.role)},
                      {"content", m.content},
                      {"position", m.position},
                      {"char_length", m.char_length},
                      {"code_blocks", blocks},
                      {"timestamp", m.timestamp}});
    }
    convs.push_back({{"index", c.index}, {"closed_by", to_string(c.closed_by)}, {"messages", msgs}});
  }
  return {{"session_id", s.session_id},
          {"student_id", s.student_id},
          {"problem_id", s.problem_id},
          {"tier", corpus::to_string(s.tier)},
          {"run_counter", s.run_counter},
          {"solved", s.solved},
          {"created_at", s.created_at},
          {"conversation_index", s.active().index},
          {"limit", {{"used", s.active().student_count()}, {"max", s.message_limit}}},
          {"conversations", convs},
          {"last_report", s.last_report ? *s.last_report : json(nullptr)}};
}

}  // namespace promptprog::dialogue
