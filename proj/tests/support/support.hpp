#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "promptprog/corpus.hpp"
#include "promptprog/events.hpp"
#include "promptprog/grader.hpp"
#include "promptprog/platform.hpp"
#include "promptprog/provider.hpp"

namespace pp_test {

namespace fs = std::filesystem;
using namespace promptprog;

fs::path source_dir();
fs::path corpus_dir();
fs::path fixture(const std::string& rel);
fs::path cli_binary();

std::string read_text(const fs::path& p);
void write_text(const fs::path& p, const std::string& text);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Problem with functions f1..fn, each `int fk(int x)` with one hidden test.
corpus::Problem synthetic_problem(const std::string& id, corpus::Tier tier, int functions,
                                  std::optional<int> message_limit = std::nullopt);

/// Assistant text carrying a code block that MarkerGrader grades as correct
/// for exactly `correct`.
std::string marker_reply(const std::vector<std::string>& correct);

/// Student text of exactly `length` code points asking MirrorProvider for a
/// block correct on `correct`, or for a plain reply when `correct` is empty.
std::string student_text(std::size_t length, const std::optional<std::vector<std::string>>& correct);

/// Grades blocks by their "// correct: a,b" line.
class MarkerGrader final : public runner::Grader {
 public:
  runner::ExecutionReport grade(const corpus::Problem& problem, const runner::CodeBlock& block) override;
  std::atomic<int> calls{0};
};

/// Replies to "[code:a,b]" with marker_reply({a,b}), to "[fail]" with a
/// ProviderFailure, and to anything else with plain text.
class MirrorProvider final : public dialogue::Provider {
 public:
  dialogue::ProviderReply chat(const dialogue::ProviderRequest& request) override;
  std::vector<dialogue::ProviderRequest> requests;
};

/// Platform over a fresh log with the stub provider and grader.
struct StubPlatform {
  explicit StubPlatform(std::vector<corpus::Problem> problems, bool shadow_async = false);
  explicit StubPlatform(std::vector<corpus::Problem> problems, const fs::path& log_path,
                        bool shadow_async = false);

  std::vector<events::EventRecord> events() const { return log->read(); }

  std::unique_ptr<TempDir> dir;
  std::shared_ptr<events::EventLog> log;
  std::shared_ptr<MirrorProvider> provider;
  std::shared_ptr<MarkerGrader> grader;
  std::unique_ptr<service::Platform> platform;
};

/// Deterministic clock and ids for logs compared across runs.
std::string fixed_clock();
std::function<std::string()> counting_ids(const std::string& prefix);

/// Runs the CLI binary; returns exit status and captures stdout/stderr.
struct CommandResult {
  int status = -1;
  std::string out;
  std::string err;
};
CommandResult run_cli(const std::vector<std::string>& args);

}  // namespace pp_test
