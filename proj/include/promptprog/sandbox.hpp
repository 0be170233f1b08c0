#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace promptprog::runner {

struct SandboxPolicy {
  double compile_timeout_s = 10.0;
  double per_test_timeout_s = 2.0;
  int memory_limit_mb = 256;
  std::size_t max_output_bytes = 64 * 1024;
  bool deny_network = true;
  bool temp_dir_only = true;

  /// Throws Error(InvalidConfig) unless every limit is strictly positive.
  void validate() const;
};

nlohmann::json to_json(const SandboxPolicy& policy);
/// Strict: unknown keys are rejected. Missing keys keep their defaults.
SandboxPolicy sandbox_policy_from_json(const nlohmann::json& doc);

/// One confined child process.
struct ProcessSpec {
  std::vector<std::string> argv;
  std::filesystem::path workdir;
  double timeout_s = 2.0;
  std::optional<std::size_t> memory_limit_bytes;
  std::size_t max_output_bytes = 64 * 1024;
  bool deny_network = true;
  bool confine_filesystem = true;
  std::vector<std::string> extra_env;  // "KEY=VALUE"
};

struct ProcessResult {
  int exit_code = -1;     // valid when the process exited normally
  int term_signal = 0;    // non-zero when killed by a signal
  bool timed_out = false;
  std::string stdout_data;
  std::string stderr_data;
  bool output_truncated = false;
  double duration_ms = 0.0;

  [[nodiscard]] bool exited_ok() const noexcept {
    return !timed_out && term_signal == 0 && exit_code == 0;
  }
};

/// Runs `spec` in its own process group with rlimits, an optional Landlock
/// filesystem ruleset (system directories read-only, the workdir writable)
/// and a seccomp filter refusing socket creation. Output beyond the cap is
/// read and discarded. On timeout the whole group is killed.
///
/// Throws Error(ToolchainMissing) when argv[0] cannot be executed and
/// Error(SandboxSetupFailure) when confinement cannot be established.
ProcessResult run_sandboxed(const ProcessSpec& spec);

/// True when the running kernel accepts Landlock rulesets.
bool landlock_available() noexcept;

/// Absolute path of `name` looked up in PATH, or empty when not executable.
std::string find_executable(const std::string& name);

/// Private scratch directory (mode 0700) removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::filesystem::path& root = {});
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  ScratchDir(ScratchDir&& other) noexcept;
  ScratchDir& operator=(ScratchDir&&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace promptprog::runner
