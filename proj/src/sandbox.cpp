#include "promptprog/sandbox.hpp"

#include <fcntl.h>
#include <linux/audit.h>
#include <linux/filter.h>
#include <linux/seccomp.h>
#include <poll.h>
#include <signal.h>
#include <stddef.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>

#include <fmt/format.h>

#include "promptprog/error.hpp"

extern char** environ;

namespace promptprog::runner {

using nlohmann::json;

void SandboxPolicy::validate() const {
  if (!(compile_timeout_s > 0) || !(per_test_timeout_s > 0) || memory_limit_mb <= 0 ||
      max_output_bytes == 0) {
    throw Error(ErrorCode::InvalidConfig, "sandbox limits must be strictly positive");
  }
}

json to_json(const SandboxPolicy& p) {
  return {{"compile_timeout_s", p.compile_timeout_s},
          {"per_test_timeout_s", p.per_test_timeout_s},
          {"memory_limit_mb", p.memory_limit_mb},
          {"max_output_bytes", p.max_output_bytes},
          {"network", p.deny_network ? "denied" : "allowed"},
          {"filesystem", p.temp_dir_only ? "temp_dir_only" : "unrestricted"}};
}

SandboxPolicy sandbox_policy_from_json(const json& doc) {
  SandboxPolicy p;
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "sandbox must be an object");
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "compile_timeout_s") p.compile_timeout_s = value.get<double>();
      else if (key == "per_test_timeout_s") p.per_test_timeout_s = value.get<double>();
      else if (key == "memory_limit_mb") p.memory_limit_mb = value.get<int>();
      else if (key == "max_output_bytes") p.max_output_bytes = value.get<std::size_t>();
      else if (key == "network") {
        auto v = value.get<std::string>();
        if (v != "denied" && v != "allowed") throw Error(ErrorCode::InvalidConfig, "sandbox.network must be denied|allowed");
        p.deny_network = v == "denied";
      } else if (key == "filesystem") {
        auto v = value.get<std::string>();
        if (v != "temp_dir_only" && v != "unrestricted") {
          throw Error(ErrorCode::InvalidConfig, "sandbox.filesystem must be temp_dir_only|unrestricted");
        }
        p.temp_dir_only = v == "temp_dir_only";
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown key 'sandbox." + key + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidConfig, "sandbox." + key + ": " + e.what());
    }
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Landlock (defined locally; distribution headers lag the kernel ABI)

namespace {

constexpr std::uint64_t kFsExecute = 1ULL << 0;
constexpr std::uint64_t kFsWriteFile = 1ULL << 1;
constexpr std::uint64_t kFsReadFile = 1ULL << 2;
constexpr std::uint64_t kFsReadDir = 1ULL << 3;
constexpr std::uint64_t kFsRefer = 1ULL << 13;
constexpr std::uint64_t kFsTruncate = 1ULL << 14;
constexpr std::uint64_t kFsIoctlDev = 1ULL << 15;
constexpr std::uint64_t kNetBindTcp = 1ULL << 0;
constexpr std::uint64_t kNetConnectTcp = 1ULL << 1;
constexpr unsigned kCreateRulesetVersion = 1U << 0;
constexpr int kRulePathBeneath = 1;
constexpr unsigned kCloseRangeCloexec = 1U << 2;

#ifndef SYS_close_range
#define SYS_close_range 436
#endif

struct RulesetAttr {
  std::uint64_t handled_access_fs;
  std::uint64_t handled_access_net;
};

struct __attribute__((packed)) PathBeneathAttr {
  std::uint64_t allowed_access;
  std::int32_t parent_fd;
};

#ifndef SYS_landlock_create_ruleset
#define SYS_landlock_create_ruleset 444
#define SYS_landlock_add_rule 445
#define SYS_landlock_restrict_self 446
#endif

int landlock_abi() noexcept {
  long v = syscall(SYS_landlock_create_ruleset, nullptr, 0, kCreateRulesetVersion);
  return v < 0 ? 0 : static_cast<int>(v);
}

std::uint64_t handled_fs_for(int abi) noexcept {
  std::uint64_t mask = (1ULL << 13) - 1;
  if (abi >= 2) mask |= kFsRefer;
  if (abi >= 3) mask |= kFsTruncate;
  if (abi >= 5) mask |= kFsIoctlDev;
  return mask;
}

constexpr std::array<const char*, 8> kReadOnlyRoots = {"/usr", "/lib", "/lib64", "/lib32",
                                                       "/bin", "/sbin", "/etc", "/opt"};

// Everything below runs between fork and exec: no allocation, only syscalls.
struct ChildPlan {
  const char* workdir;
  char* const* argv;
  char* const* envp;
  rlim_t memory_bytes;  // 0 = unlimited
  rlim_t cpu_seconds;
  bool confine_fs;
  bool deny_network;
  int landlock_abi;
  int err_fd;
  int out_fd;
  int err_out_fd;
};

struct ChildFailure {
  int stage;  // 1 = setup, 2 = exec
  int err;
};

[[noreturn]] void child_fail(int fd, int stage, int err) {
  ChildFailure f{stage, err};
  [[maybe_unused]] auto n = ::write(fd, &f, sizeof f);
  _exit(127);
}

bool add_path_rule(int ruleset, const char* path, std::uint64_t access) {
  int fd = ::open(path, O_PATH | O_CLOEXEC);
  if (fd < 0) return errno == ENOENT;  // missing roots are fine
  struct stat st {};
  if (::fstat(fd, &st) == 0 && !S_ISDIR(st.st_mode)) {
    access &= kFsExecute | kFsWriteFile | kFsReadFile | kFsTruncate | kFsIoctlDev;
  }
  PathBeneathAttr attr{access, fd};
  long rc = syscall(SYS_landlock_add_rule, ruleset, kRulePathBeneath, &attr, 0);
  ::close(fd);
  return rc == 0;
}

void install_landlock(const ChildPlan& plan) {
  const std::uint64_t handled = handled_fs_for(plan.landlock_abi);
  RulesetAttr attr{handled, 0};
  std::size_t attr_size = sizeof(std::uint64_t);
  if (plan.landlock_abi >= 4 && plan.deny_network) {
    attr.handled_access_net = kNetBindTcp | kNetConnectTcp;
    attr_size = sizeof(RulesetAttr);
  }
  int ruleset = static_cast<int>(syscall(SYS_landlock_create_ruleset, &attr, attr_size, 0));
  if (ruleset < 0) child_fail(plan.err_fd, 1, errno);
  const std::uint64_t read_only = kFsExecute | kFsReadFile | kFsReadDir;
  for (const char* root : kReadOnlyRoots) {
    if (!add_path_rule(ruleset, root, read_only)) child_fail(plan.err_fd, 1, errno);
  }
  if (!add_path_rule(ruleset, "/dev/null", kFsReadFile | kFsWriteFile | kFsTruncate)) {
    child_fail(plan.err_fd, 1, errno);
  }
  if (!add_path_rule(ruleset, "/dev/urandom", kFsReadFile)) child_fail(plan.err_fd, 1, errno);
  if (!add_path_rule(ruleset, plan.workdir, handled)) child_fail(plan.err_fd, 1, errno);
  if (syscall(SYS_landlock_restrict_self, ruleset, 0) != 0) child_fail(plan.err_fd, 1, errno);
  ::close(ruleset);
}

#if defined(__x86_64__)
constexpr std::uint32_t kAuditArch = AUDIT_ARCH_X86_64;
constexpr std::uint32_t kX32Bit = 0x40000000;
#elif defined(__aarch64__)
constexpr std::uint32_t kAuditArch = AUDIT_ARCH_AARCH64;
constexpr std::uint32_t kX32Bit = 0xffffffff;
#else
#error "unsupported architecture for the seccomp filter"
#endif

#ifndef __NR_io_uring_setup
#define __NR_io_uring_setup 425
#endif

void install_socket_filter(const ChildPlan& plan) {
  sock_filter filter[] = {
      BPF_STMT(BPF_LD | BPF_W | BPF_ABS, offsetof(seccomp_data, arch)),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, kAuditArch, 1, 0),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_KILL_PROCESS),
      BPF_STMT(BPF_LD | BPF_W | BPF_ABS, offsetof(seccomp_data, nr)),
      BPF_JUMP(BPF_JMP | BPF_JGE | BPF_K, kX32Bit, 0, 1),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_KILL_PROCESS),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, __NR_socket, 0, 1),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_ERRNO | (EACCES & SECCOMP_RET_DATA)),
      BPF_JUMP(BPF_JMP | BPF_JEQ | BPF_K, __NR_io_uring_setup, 0, 1),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_ERRNO | (EPERM & SECCOMP_RET_DATA)),
      BPF_STMT(BPF_RET | BPF_K, SECCOMP_RET_ALLOW),
  };
  sock_fprog prog{static_cast<unsigned short>(sizeof filter / sizeof filter[0]), filter};
  if (prctl(PR_SET_SECCOMP, SECCOMP_MODE_FILTER, &prog) != 0) child_fail(plan.err_fd, 1, errno);
}

[[noreturn]] void child_main(const ChildPlan& plan) {
  ::setpgid(0, 0);
  int devnull = ::open("/dev/null", O_RDONLY);
  if (devnull < 0 || ::dup2(devnull, STDIN_FILENO) < 0) child_fail(plan.err_fd, 1, errno);
  if (::dup2(plan.out_fd, STDOUT_FILENO) < 0 || ::dup2(plan.err_out_fd, STDERR_FILENO) < 0) {
    child_fail(plan.err_fd, 1, errno);
  }
  if (::chdir(plan.workdir) != 0) child_fail(plan.err_fd, 1, errno);
  // Inherited descriptors (listening sockets, logs) must not survive exec.
  ::syscall(SYS_close_range, 3U, ~0U, kCloseRangeCloexec);

  if (plan.memory_bytes > 0) {
    rlimit as{plan.memory_bytes, plan.memory_bytes};
    if (::setrlimit(RLIMIT_AS, &as) != 0) child_fail(plan.err_fd, 1, errno);
  }
  rlimit cpu{plan.cpu_seconds, plan.cpu_seconds + 1};
  ::setrlimit(RLIMIT_CPU, &cpu);
  rlimit fsize{16u << 20, 16u << 20};
  ::setrlimit(RLIMIT_FSIZE, &fsize);
  rlimit core{0, 0};
  ::setrlimit(RLIMIT_CORE, &core);

  if ((plan.confine_fs || plan.deny_network) && prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) {
    child_fail(plan.err_fd, 1, errno);
  }
  if (plan.confine_fs) install_landlock(plan);
  if (plan.deny_network) install_socket_filter(plan);

  ::execve(plan.argv[0], plan.argv, plan.envp);
  child_fail(plan.err_fd, 2, errno);
}

std::string resolve_executable(const std::string& name) {
  if (name.find('/') != std::string::npos) return name;
  const char* path = std::getenv("PATH");
  std::string dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= dirs.size()) {
    auto end = dirs.find(':', start);
    std::string dir = dirs.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!dir.empty()) {
      std::string candidate = dir + "/" + name;
      if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return {};
}

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

void make_pipe(Fd& r, Fd& w) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::SandboxSetupFailure, std::string("pipe: ") + std::strerror(errno));
  }
  r.fd = fds[0];
  w.fd = fds[1];
}

}  // namespace

bool landlock_available() noexcept { return landlock_abi() > 0; }

std::string find_executable(const std::string& name) { return resolve_executable(name); }

ProcessResult run_sandboxed(const ProcessSpec& spec) {
  if (spec.argv.empty()) throw Error(ErrorCode::InvalidArgument, "empty argv");
  const std::string exe = resolve_executable(spec.argv[0]);
  if (exe.empty()) {
    throw Error(ErrorCode::ToolchainMissing, "executable not found: " + spec.argv[0]);
  }
  const int abi = spec.confine_filesystem ? landlock_abi() : 0;
  if (spec.confine_filesystem && abi == 0) {
    throw Error(ErrorCode::SandboxSetupFailure,
                "filesystem confinement requested but Landlock is unavailable");
  }

  std::vector<std::string> argv_store = spec.argv;
  argv_store[0] = exe;
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_store = {
      "PATH=/usr/local/bin:/usr/bin:/bin", "LANG=C.UTF-8", "HOME=" + spec.workdir.string(),
      "TMPDIR=" + spec.workdir.string()};
  env_store.insert(env_store.end(), spec.extra_env.begin(), spec.extra_env.end());
  std::vector<char*> envp;
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);
  const std::string workdir = spec.workdir.string();

  Fd out_r, out_w, err_r, err_w, fail_r, fail_w;
  make_pipe(out_r, out_w);
  make_pipe(err_r, err_w);
  make_pipe(fail_r, fail_w);

  ChildPlan plan{};
  plan.workdir = workdir.c_str();
  plan.argv = argv.data();
  plan.envp = envp.data();
  plan.memory_bytes = spec.memory_limit_bytes ? static_cast<rlim_t>(*spec.memory_limit_bytes) : 0;
  plan.cpu_seconds = static_cast<rlim_t>(std::ceil(spec.timeout_s)) + 1;
  plan.confine_fs = spec.confine_filesystem;
  plan.deny_network = spec.deny_network;
  plan.landlock_abi = abi;
  plan.err_fd = fail_w.fd;
  plan.out_fd = out_w.fd;
  plan.err_out_fd = err_w.fd;

  const auto started = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorCode::SandboxSetupFailure, std::string("fork: ") + std::strerror(errno));
  if (pid == 0) child_main(plan);
  ::setpgid(pid, pid);
  out_w.reset();
  err_w.reset();
  fail_w.reset();

  ProcessResult result;
  const auto deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(spec.timeout_s));
  ::fcntl(out_r.fd, F_SETFL, O_NONBLOCK);
  ::fcntl(err_r.fd, F_SETFL, O_NONBLOCK);

  auto drain = [&](int fd, std::string& sink) -> bool {
    char buf[8192];
    for (;;) {
      ssize_t n = ::read(fd, buf, sizeof buf);
      if (n > 0) {
        std::size_t room = spec.max_output_bytes > sink.size() ? spec.max_output_bytes - sink.size() : 0;
        std::size_t take = std::min<std::size_t>(room, static_cast<std::size_t>(n));
        sink.append(buf, take);
        if (take < static_cast<std::size_t>(n)) result.output_truncated = true;
        continue;
      }
      if (n == 0) return false;  // EOF
      return errno == EAGAIN || errno == EINTR;
    }
  };

  bool out_open = true, err_open = true, exited = false;
  int status = 0;
  while (true) {
    auto now = std::chrono::steady_clock::now();
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    int wait_ms = static_cast<int>(std::clamp<long long>(remaining + 1, 0, 20));
    pollfd fds[2];
    nfds_t n = 0;
    if (out_open) fds[n++] = {out_r.fd, POLLIN, 0};
    if (err_open) fds[n++] = {err_r.fd, POLLIN, 0};
    if (n > 0) {
      ::poll(fds, n, wait_ms);
    } else {
      ::usleep(static_cast<useconds_t>(wait_ms) * 1000);
    }
    if (out_open) out_open = drain(out_r.fd, result.stdout_data);
    if (err_open) err_open = drain(err_r.fd, result.stderr_data);
    if (::waitpid(pid, &status, WNOHANG) == pid) {
      // The direct child is gone; stray descendants must not hold us up.
      exited = true;
      break;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      result.timed_out = true;
      break;
    }
  }
  ::kill(-pid, SIGKILL);
  if (!exited) {
    ::waitpid(pid, &status, 0);
  }
  drain(out_r.fd, result.stdout_data);
  drain(err_r.fd, result.stderr_data);
  result.duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  ChildFailure failure{};
  if (::read(fail_r.fd, &failure, sizeof failure) == static_cast<ssize_t>(sizeof failure)) {
    if (failure.stage == 2 && (failure.err == ENOENT || failure.err == EACCES)) {
      throw Error(ErrorCode::ToolchainMissing,
                  fmt::format("cannot execute {}: {}", spec.argv[0], std::strerror(failure.err)));
    }
    throw Error(ErrorCode::SandboxSetupFailure,
                fmt::format("sandbox setup failed ({}): {}", failure.stage == 1 ? "confinement" : "exec",
                            std::strerror(failure.err)));
  }

  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.term_signal = WTERMSIG(status);
    if (result.timed_out) result.term_signal = SIGKILL;
  }
  return result;
}

// ---------------------------------------------------------------------------

ScratchDir::ScratchDir(const std::filesystem::path& root) {
  auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
  std::filesystem::create_directories(base);
  std::string tmpl = (base / "promptprog-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) {
    throw Error(ErrorCode::SandboxSetupFailure, std::string("mkdtemp: ") + std::strerror(errno));
  }
  path_ = tmpl;
}

ScratchDir::ScratchDir(ScratchDir&& other) noexcept : path_(std::move(other.path_)) {
  other.path_.clear();
}

ScratchDir::~ScratchDir() {
  if (path_.empty()) return;
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace promptprog::runner
