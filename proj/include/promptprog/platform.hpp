#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "promptprog/corpus.hpp"
#include "promptprog/events.hpp"
#include "promptprog/grader.hpp"
#include "promptprog/provider.hpp"
#include "promptprog/session.hpp"

namespace promptprog::service {

struct PlatformOptions {
  bool shadow_async = true;
  int workers = 2;
  /// Session id source; defaults to random 128-bit hex.
  std::function<std::string()> id_generator;
};

struct PostResult {
  dialogue::Message assistant;
  int used = 0;
  int max = 0;
};

/// Binds corpus, dialogue, runner and the event log. Every mutation is
/// appended to the log before memory changes, through dialogue::apply_event.
/// Calls on one session are serialized; distinct sessions run concurrently.
class Platform {
 public:
  /// Rebuilds sessions from the log, then schedules shadow grades for any
  /// code blocks the log has no grade for.
  Platform(corpus::Corpus corpus, std::shared_ptr<events::EventLog> log,
           std::shared_ptr<dialogue::Provider> provider, std::shared_ptr<runner::Grader> grader,
           PlatformOptions options = {});
  ~Platform();
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  /// Throws Error(UnknownProblem).
  std::string start_session(const std::string& student_id, const std::string& problem_id);

  /// Throws Error(UnknownSession | EmptyMessage | LimitReached | ProviderFailure).
  PostResult post_message(const std::string& session_id, const std::string& content);

  /// Returns the new conversation index.
  int reset_conversation(const std::string& session_id, const std::optional<std::string>& idempotency_key = {});

  /// Student-view ExecutionReport. Throws Error(NoCodeAvailable | ToolchainMissing).
  nlohmann::json run_code(const std::string& session_id, const std::optional<std::string>& idempotency_key = {});

  [[nodiscard]] dialogue::Session session(const std::string& session_id) const;
  [[nodiscard]] std::vector<dialogue::Session> sessions() const;

  /// Blocks until no shadow grade is queued or running.
  void drain();

  [[nodiscard]] const corpus::Corpus& corpus() const noexcept { return corpus_; }
  [[nodiscard]] events::EventLog& log() noexcept { return *log_; }

 private:
  struct Entry {
    mutable std::mutex mu;
    dialogue::Session session;
  };
  struct ShadowJob {
    std::string session_id;
    runner::CodeBlock block;
  };

  Entry& entry(const std::string& session_id) const;
  void commit(Entry& e, std::vector<events::NewEvent> batch);
  void schedule_shadow(ShadowJob job);
  void run_shadow(const ShadowJob& job);
  void worker_loop();

  corpus::Corpus corpus_;
  std::shared_ptr<events::EventLog> log_;
  std::shared_ptr<dialogue::Provider> provider_;
  std::shared_ptr<runner::Grader> grader_;
  PlatformOptions options_;

  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::unique_ptr<Entry>> sessions_;

  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<ShadowJob> queue_;
  int in_flight_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace promptprog::service
