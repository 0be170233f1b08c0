#include "promptprog/platform.hpp"

#include <random>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::service {

using dialogue::Role;
using events::EventKind;
using events::NewEvent;
using nlohmann::json;

namespace {

std::string random_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  return fmt::format("{:016x}{:016x}", rng(), rng());
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos; }

json key_or_null(const std::optional<std::string>& key) { return key ? json(*key) : json(nullptr); }

}  // namespace

Platform::Platform(corpus::Corpus corpus, std::shared_ptr<events::EventLog> log,
                   std::shared_ptr<dialogue::Provider> provider, std::shared_ptr<runner::Grader> grader,
                   PlatformOptions options)
    : corpus_(std::move(corpus)),
      log_(std::move(log)),
      provider_(std::move(provider)),
      grader_(std::move(grader)),
      options_(std::move(options)) {
  if (!options_.id_generator) options_.id_generator = random_id;
  auto replayed = dialogue::replay_sessions(log_->read(), /*strict=*/true);
  std::vector<ShadowJob> missing;
  for (auto& [id, s] : replayed.sessions) {
    for (const auto& c : s.conversations) {
      for (const auto& m : c.messages) {
        if (m.role != Role::Assistant || m.code_blocks.empty()) continue;
        const auto& block = m.code_blocks.back();
        bool graded = std::any_of(c.shadow.begin(), c.shadow.end(),
                                  [&](const auto& r) { return r.ref == block.ref; });
        if (!graded) missing.push_back({id, block});
      }
    }
    auto e = std::make_unique<Entry>();
    e->session = std::move(s);
    sessions_.emplace(id, std::move(e));
  }
  if (options_.shadow_async) {
    for (int i = 0; i < std::max(1, options_.workers); ++i) workers_.emplace_back([this] { worker_loop(); });
  }
  for (auto& job : missing) schedule_shadow(std::move(job));
}

Platform::~Platform() {
  drain();
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

Platform::Entry& Platform::entry(const std::string& session_id) const {
  std::shared_lock lock(registry_mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "unknown session '" + session_id + "'");
  return *it->second;
}

void Platform::commit(Entry& e, std::vector<NewEvent> batch) {
  for (const auto& record : log_->append(std::move(batch))) dialogue::apply_event(e.session, record);
}

std::string Platform::start_session(const std::string& student_id, const std::string& problem_id) {
  const auto& problem = corpus_.get(problem_id);
  auto id = options_.id_generator();
  auto e = std::make_unique<Entry>();
  std::unique_lock lock(registry_mu_);
  if (sessions_.count(id)) throw Error(ErrorCode::InvalidArgument, "session id collision");
  auto record = log_->append(
      NewEvent{id, EventKind::SessionStarted, dialogue::session_started_payload(student_id, problem)});
  e->session = dialogue::session_from_start(record);
  sessions_.emplace(id, std::move(e));
  return id;
}

PostResult Platform::post_message(const std::string& session_id, const std::string& content) {
  auto& e = entry(session_id);
  std::optional<ShadowJob> shadow;
  PostResult result;
  {
    std::lock_guard lock(e.mu);
    auto& s = e.session;
    if (blank(content)) throw Error(ErrorCode::EmptyMessage, "message is empty");
    const auto& conv = s.active();
    const int used = conv.student_count();
    if (used >= s.message_limit) {
      throw Error(ErrorCode::LimitReached,
                  fmt::format("conversation limit of {} messages reached; reset to continue", s.message_limit));
    }
    const auto& problem = corpus_.get(s.problem_id);

    dialogue::ProviderRequest req;
    req.system_prompt = dialogue::build_system_prompt(problem);
    req.history = dialogue::active_history(s);
    req.history.push_back({Role::Student, content});
    req.problem_id = s.problem_id;
    req.turn_index = used + 1;

    const json posted{{"conversation", conv.index},
                      {"position", used + 1},
                      {"content", content},
                      {"char_length", dialogue::char_length(content)}};

    dialogue::ProviderReply reply;
    try {
      reply = provider_->chat(req);
    } catch (const std::exception& ex) {
      const std::string reason = ex.what();
      std::vector<NewEvent> batch;
      batch.push_back({session_id, EventKind::MessagePosted, posted});
      batch.push_back({session_id, EventKind::ProviderFailure,
                       {{"conversation", conv.index}, {"position", used + 1}, {"reason", reason}}});
      commit(e, std::move(batch));
      throw Error(ErrorCode::ProviderFailure, reason);
    }

    const auto blocks = runner::extract_code_blocks(reply.content);
    const int position = conv.assistant_count() + 1;
    std::vector<NewEvent> batch;
    batch.push_back({session_id, EventKind::MessagePosted, posted});
    batch.push_back({session_id, EventKind::AssistantReplied,
                     {{"conversation", conv.index},
                      {"position", position},
                      {"content", reply.content},
                      {"char_length", dialogue::char_length(reply.content)},
                      {"code_block_count", blocks.size()},
                      {"provider_meta", reply.provider_meta}}});
    for (const auto& b : blocks) {
      runner::MessageRef ref{conv.index, position, b.ref.block};
      batch.push_back({session_id, EventKind::CodeGenerated,
                       {{"message_ref", runner::to_json(ref)},
                        {"language_hint", b.language_hint ? json(*b.language_hint) : json(nullptr)},
                        {"char_length", dialogue::char_length(b.text)}}});
    }
    commit(e, std::move(batch));

    result.assistant = s.active().messages.back();
    result.used = s.active().student_count();
    result.max = s.message_limit;
    if (!result.assistant.code_blocks.empty()) shadow = ShadowJob{session_id, result.assistant.code_blocks.back()};
  }
  if (shadow) schedule_shadow(std::move(*shadow));
  return result;
}

int Platform::reset_conversation(const std::string& session_id, const std::optional<std::string>& key) {
  auto& e = entry(session_id);
  std::lock_guard lock(e.mu);
  auto& s = e.session;
  if (key) {
    if (auto it = s.reset_keys.find(*key); it != s.reset_keys.end()) return it->second.at("conversation_index");
  }
  const int closed = s.active().index;
  commit(e, {{session_id, EventKind::ConversationReset,
              {{"closed_index", closed},
               {"closed_by", dialogue::to_string(dialogue::closing_reason(s))},
               {"new_index", closed + 1},
               {"idempotency_key", key_or_null(key)}}}});
  return s.active().index;
}

json Platform::run_code(const std::string& session_id, const std::optional<std::string>& key) {
  auto& e = entry(session_id);
  std::lock_guard lock(e.mu);
  auto& s = e.session;
  if (key) {
    if (auto it = s.run_keys.find(*key); it != s.run_keys.end()) return it->second;
  }
  const auto block = dialogue::latest_runnable_block(s);
  auto report = grader_->grade(corpus_.get(s.problem_id), block);
  report.visible_to_student = true;
  report.run_index = s.run_counter + 1;
  const json report_json = runner::to_json(report);

  std::vector<NewEvent> batch;
  batch.push_back({session_id, EventKind::RunRequested,
                   {{"message_ref", runner::to_json(block.ref)},
                    {"run_index", *report.run_index},
                    {"idempotency_key", key_or_null(key)}}});
  batch.push_back({session_id, EventKind::RunResult,
                   {{"run_index", *report.run_index}, {"report", report_json}, {"idempotency_key", key_or_null(key)}}});
  if (report.all_ok) {
    batch.push_back({session_id, EventKind::ProblemSolved,
                     {{"conversation", block.ref.conversation}, {"run_index", *report.run_index}}});
  }
  commit(e, std::move(batch));
  return report_json;
}

dialogue::Session Platform::session(const std::string& session_id) const {
  auto& e = entry(session_id);
  std::lock_guard lock(e.mu);
  return e.session;
}

std::vector<dialogue::Session> Platform::sessions() const {
  std::vector<Entry*> entries;
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& [id, e] : sessions_) entries.push_back(e.get());
  }
  std::vector<dialogue::Session> out;
  for (auto* e : entries) {
    std::lock_guard lock(e->mu);
    out.push_back(e->session);
  }
  return out;
}

void Platform::schedule_shadow(ShadowJob job) {
  if (!options_.shadow_async) {
    run_shadow(job);
    return;
  }
  {
    std::lock_guard lock(queue_mu_);
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
}

void Platform::drain() {
  std::unique_lock lock(queue_mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && in_flight_ == 0; });
}

void Platform::worker_loop() {
  for (;;) {
    ShadowJob job;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++in_flight_;
    }
    try {
      run_shadow(job);
    } catch (...) {
      // Storage failures leave the block ungraded; it is rescheduled on restart.
    }
    {
      std::lock_guard lock(queue_mu_);
      --in_flight_;
    }
    idle_cv_.notify_all();
  }
}

void Platform::run_shadow(const ShadowJob& job) {
  auto& e = entry(job.session_id);
  std::string problem_id;
  {
    std::lock_guard lock(e.mu);
    problem_id = e.session.problem_id;
  }
  json payload{{"message_ref", runner::to_json(job.block.ref)}};
  try {
    const auto report = grader_->grade(corpus_.get(problem_id), job.block);
    json per = json::object();
    for (const auto& [name, r] : report.per_function) per[name] = {{"passed", r.passed}, {"total", r.total}, {"ok", r.ok}};
    payload["status"] = runner::to_string(report.status);
    payload["all_ok"] = report.all_ok;
    payload["correct_functions"] = report.correct_functions();
    payload["per_function"] = per;
  } catch (const Error& err) {
    payload["status"] = "error";
    payload["all_ok"] = false;
    payload["correct_functions"] = json::array();
    payload["per_function"] = json::object();
    payload["error"] = {{"code", to_string(err.code())}, {"message", err.what()}};
  }
  std::lock_guard lock(e.mu);
  commit(e, {{job.session_id, EventKind::ShadowGrade, std::move(payload)}});
}

}  // namespace promptprog::service
