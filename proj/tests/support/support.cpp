#include "support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace pp_test {

fs::path source_dir() { return PROMPTPROG_SOURCE_DIR; }
fs::path corpus_dir() { return source_dir() / "corpus"; }
fs::path fixture(const std::string& rel) { return source_dir() / "tests" / "fixtures" / rel; }
fs::path cli_binary() { return PROMPTPROG_CLI_BINARY; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "pptest-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

corpus::Problem synthetic_problem(const std::string& id, corpus::Tier tier, int functions,
                                  std::optional<int> message_limit) {
  corpus::Problem p;
  p.id = id;
  p.title = "Synthetic " + id;
  p.tier = tier;
  p.description = "Synthetic problem.";
  p.message_limit = message_limit.value_or(corpus::default_message_limit(tier));
  for (int i = 1; i <= functions; ++i) {
    corpus::FunctionSpec f;
    f.name = fmt::format("f{}", i);
    f.signature = fmt::format("int f{}(int x)", i);
    f.visible_examples.push_back({nlohmann::json::array({1}), 1, {}});
    f.hidden_tests.push_back({nlohmann::json::array({2}), 2, {}});
    p.functions.push_back(std::move(f));
  }
  return p;
}

std::string marker_reply(const std::vector<std::string>& correct) {
  std::string list;
  for (const auto& c : correct) list += (list.empty() ? "" : ",") + c;
  return "Here you go:\n```c\n// correct: " + list + "\nint stub;\n```\n";
}

std::string student_text(std::size_t length, const std::optional<std::vector<std::string>>& correct) {
  std::string text;
  if (correct) {
    text = "[code:";
    for (std::size_t i = 0; i < correct->size(); ++i) text += (i ? "," : "") + (*correct)[i];
    text += "]";
  }
  if (text.size() < length) text += std::string(length - text.size(), 'x');
  if (text.empty()) text = "x";
  return text;
}

runner::ExecutionReport MarkerGrader::grade(const corpus::Problem& problem, const runner::CodeBlock& block) {
  ++calls;
  std::set<std::string> ok;
  const auto pos = block.text.find("// correct:");
  if (pos != std::string::npos) {
    auto end = block.text.find('\n', pos);
    std::stringstream ss(block.text.substr(pos + 11, end - pos - 11));
    std::string name;
    while (std::getline(ss, name, ',')) {
      name.erase(0, name.find_first_not_of(' '));
      if (!name.empty()) ok.insert(name);
    }
  }
  runner::ExecutionReport r;
  r.status = runner::ReportStatus::Graded;
  r.all_ok = true;
  for (const auto& f : problem.functions) {
    const bool pass = ok.count(f.name) > 0;
    const int total = static_cast<int>(f.hidden_tests.size());
    r.per_function[f.name] = {pass ? total : 0, total, pass, runner::ReportStatus::Graded};
    r.all_ok = r.all_ok && pass;
  }
  return r;
}

dialogue::ProviderReply MirrorProvider::chat(const dialogue::ProviderRequest& request) {
  requests.push_back(request);
  const auto& text = request.history.back().content;
  if (text.find("[fail]") != std::string::npos) {
    throw Error(ErrorCode::ProviderFailure, "transport: scripted failure");
  }
  const auto open = text.find("[code:");
  if (open == std::string::npos) return {"Tell me more about the task.", "mirror"};
  const auto close = text.find(']', open);
  std::vector<std::string> names;
  std::stringstream ss(text.substr(open + 6, close - open - 6));
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) names.push_back(name);
  }
  return {marker_reply(names), "mirror"};
}

StubPlatform::StubPlatform(std::vector<corpus::Problem> problems, bool shadow_async)
    : dir(std::make_unique<TempDir>()) {
  log = std::make_shared<events::EventLog>(dir->path() / "events.jsonl");
  provider = std::make_shared<MirrorProvider>();
  grader = std::make_shared<MarkerGrader>();
  service::PlatformOptions opts;
  opts.shadow_async = shadow_async;
  platform = std::make_unique<service::Platform>(corpus::Corpus(std::move(problems)), log, provider, grader, opts);
}

StubPlatform::StubPlatform(std::vector<corpus::Problem> problems, const fs::path& log_path, bool shadow_async) {
  log = std::make_shared<events::EventLog>(log_path);
  provider = std::make_shared<MirrorProvider>();
  grader = std::make_shared<MarkerGrader>();
  service::PlatformOptions opts;
  opts.shadow_async = shadow_async;
  platform = std::make_unique<service::Platform>(corpus::Corpus(std::move(problems)), log, provider, grader, opts);
}

std::string fixed_clock() { return "2024-01-01T00:00:00.000Z"; }

std::function<std::string()> counting_ids(const std::string& prefix) {
  auto n = std::make_shared<int>(0);
  return [prefix, n] { return fmt::format("{}{:04d}", prefix, ++*n); };
}

CommandResult run_cli(const std::vector<std::string>& args) {
  TempDir tmp;
  const auto out_path = tmp / "out";
  const auto err_path = tmp / "err";
  pid_t pid = fork();
  if (pid == 0) {
    FILE* o = freopen(out_path.c_str(), "w", stdout);
    FILE* e = freopen(err_path.c_str(), "w", stderr);
    (void)o;
    (void)e;
    std::vector<std::string> full{cli_binary().string()};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : full) argv.push_back(a.data());
    argv.push_back(nullptr);
    execv(argv[0], argv.data());
    _exit(127);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  CommandResult r;
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  r.out = read_text(out_path);
  r.err = read_text(err_path);
  return r;
}

}  // namespace pp_test
