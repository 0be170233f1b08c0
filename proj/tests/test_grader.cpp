#include <doctest.h>

#include <algorithm>

#include "promptprog/error.hpp"
#include "promptprog/grader.hpp"
#include "support.hpp"

using namespace promptprog;
using namespace promptprog::runner;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<corpus::Problem>& shipped() {
  static const auto problems = corpus::load_corpus(pp_test::corpus_dir());
  return problems;
}

const corpus::Problem& problem(const std::string& id) {
  return *std::find_if(shipped().begin(), shipped().end(), [&](const auto& p) { return p.id == id; });
}

CodeBlock block(std::string text) { return CodeBlock{std::move(text), std::string("c"), {}}; }

CodeBlock solution(const std::string& id) { return block(pp_test::read_text(pp_test::corpus_dir() / "solutions" / (id + ".c"))); }

SandboxGrader grader(GradingMode mode = GradingMode::SingleDriver) {
  SandboxPolicy policy;
  policy.per_test_timeout_s = 1.0;
  return SandboxGrader(policy, Toolchain{}, mode);
}

// Every value of every hidden test, rendered as the report would show it.
std::vector<std::string> hidden_literals(const corpus::Problem& p) {
  std::vector<std::string> out;
  for (const auto& f : p.functions) {
    for (const auto& t : f.hidden_tests) {
      out.push_back(t.expected.dump());
      for (const auto& v : t.inputs) out.push_back(v.dump());
    }
  }
  return out;
}

UnitOutcome unit_with(const std::vector<std::string>& fns, std::size_t tests, std::string out, int exit = 0) {
  UnitOutcome u;
  u.name = "all";
  u.functions = fns;
  u.test_count = tests;
  u.compiled = true;
  u.compile.exit_code = 0;
  ProcessResult run;
  run.exit_code = exit;
  run.stdout_data = std::move(out);
  u.run = run;
  return u;
}

}  // namespace

TEST_CASE("reference solutions solve every shipped problem") {
  auto g = grader();
  for (const auto& p : shipped()) {
    const auto r = g.grade(p, solution(p.id));
    INFO(p.id << ": " << r.diagnostics);
    CHECK(r.status == ReportStatus::Graded);
    CHECK(r.all_ok);
    for (const auto& f : p.functions) {
      CHECK(r.per_function.at(f.name).passed == static_cast<int>(f.hidden_tests.size()));
      CHECK(r.per_function.at(f.name).total == static_cast<int>(f.hidden_tests.size()));
    }
    CHECK_FALSE(r.visible_to_student);
    CHECK_FALSE(r.run_index.has_value());
  }
}

TEST_CASE("reference solutions also pass in modular mode") {
  auto g = grader(GradingMode::Modular);
  for (const auto& p : shipped()) {
    INFO(p.id);
    CHECK(g.grade(p, solution(p.id)).all_ok);
  }
}

TEST_CASE("every seeded mutant is caught") {
  auto g = grader();
  int mutants = 0;
  for (const auto& p : shipped()) {
    for (const auto& entry : fs::directory_iterator(pp_test::fixture("mutants") / p.id)) {
      const auto r = g.grade(p, block(pp_test::read_text(entry.path())));
      INFO(entry.path().string());
      CHECK_FALSE(r.all_ok);
      CHECK(r.status == ReportStatus::Graded);
      ++mutants;
    }
  }
  CHECK(mutants >= 27);
}

TEST_CASE("seeded bug: partial pass counts match a direct evaluation") {
  // Counting zeros as negative changes exactly the tests whose inputs hold a zero.
  const auto& p = problem("count-negatives");
  int expected_pass = 0;
  for (const auto& t : p.functions[0].hidden_tests) {
    const auto arr = t.inputs[0].get<std::vector<int>>();
    const int n = t.inputs[1];
    const auto buggy = std::count_if(arr.begin(), arr.begin() + n, [](int x) { return x <= 0; });
    expected_pass += buggy == t.expected.get<long>();
  }
  const auto r = grader().grade(p, block("int count_negatives(const int a[], int n){int c=0;"
                                          "for(int i=0;i<n;i++) if(a[i]<=0) c++; return c;}"));
  const auto& f = r.per_function.at("count_negatives");
  CHECK(f.total == 8);
  CHECK(f.passed == expected_pass);
  CHECK(expected_pass < 8);
  CHECK_FALSE(f.ok);
  CHECK_FALSE(r.all_ok);
}

TEST_CASE("partial multi-function block: single driver fails everything, modular grades independently") {
  const auto& p = problem("password-validation");
  const std::string helpers =
      "#include <ctype.h>\n#include <stdbool.h>\n"
      "bool has_digit(const char *s){for(;*s;s++) if(isdigit((unsigned char)*s)) return true; return false;}\n"
      "bool has_upper(const char *s){for(;*s;s++) if(isupper((unsigned char)*s)) return true; return false;}\n";

  const auto single = grader().grade(p, block(helpers));
  CHECK(single.status == ReportStatus::CompileError);
  CHECK_FALSE(single.all_ok);
  for (const auto& [name, r] : single.per_function) {
    CHECK_FALSE(r.ok);
    CHECK(r.passed == 0);
    CHECK(r.status == ReportStatus::CompileError);
  }
  CHECK(single.diagnostics.find("undefined reference") != std::string::npos);

  const auto modular = grader(GradingMode::Modular).grade(p, block(helpers));
  CHECK(modular.per_function.at("has_digit").ok);
  CHECK(modular.per_function.at("has_upper").ok);
  CHECK(modular.per_function.at("has_lower").status == ReportStatus::CompileError);
  CHECK(modular.per_function.at("is_valid_password").status == ReportStatus::CompileError);
  CHECK_FALSE(modular.all_ok);
  CHECK(modular.correct_functions() == std::vector<std::string>{"has_digit", "has_upper"});
}

TEST_CASE("compile errors report every function failed without leaking hidden tests") {
  for (const auto& p : shipped()) {
    const auto r = grader().grade(p, block("this is not C at all;"));
    CHECK(r.status == ReportStatus::CompileError);
    for (const auto& [name, f] : r.per_function) {
      CHECK_FALSE(f.ok);
      CHECK(f.passed == 0);
    }
    CHECK_FALSE(r.diagnostics.empty());
    CHECK(r.diagnostics.find("/tmp") == std::string::npos);
    CHECK(r.diagnostics.find("driver") == std::string::npos);
  }
}

TEST_CASE("mismatched signatures give a generic diagnostic, not driver source") {
  const auto& p = problem("count-negatives");
  const auto r = grader().grade(p, block("int count_negatives(const char *s){return 0;}"));
  CHECK(r.status == ReportStatus::CompileError);
  for (const auto& lit : hidden_literals(p)) {
    if (lit.size() < 4) continue;
    CHECK(r.diagnostics.find(lit) == std::string::npos);
  }
  CHECK(r.diagnostics.find("pp_case") == std::string::npos);
}

TEST_CASE("runtime faults fail single tests without leaking values") {
  const auto& p = problem("count-negatives");
  SUBCASE("crash") {
    const auto r = grader().grade(p, block("int count_negatives(const int a[], int n){"
                                           "if(n>3){volatile int*q=0;*q=1;} int c=0;"
                                           "for(int i=0;i<n;i++) c+=a[i]<0; return c;}"));
    const auto& f = r.per_function.at("count_negatives");
    CHECK(f.passed > 0);
    CHECK(f.passed < f.total);
    CHECK(r.diagnostics.find("crashed") != std::string::npos);
  }
  SUBCASE("timeout") {
    const auto r = grader().grade(p, block("int count_negatives(const int a[], int n){"
                                           "if(n>5) for(;;){} int c=0; for(int i=0;i<n;i++) c+=a[i]<0; return c;}"));
    const auto& f = r.per_function.at("count_negatives");
    CHECK(f.passed < f.total);
    CHECK(r.diagnostics.find("timed out") != std::string::npos);
  }
  SUBCASE("student output is never echoed") {
    const auto r = grader().grade(p, block("#include <stdio.h>\nint count_negatives(const int a[], int n){"
                                           "for(int i=0;i<n;i++){printf(\"LEAK %d\\n\",a[i]);fprintf(stderr,\"ERR %d\\n\",a[i]);}"
                                           "int c=0; for(int i=0;i<n;i++) c+=a[i]<0; return c;}"));
    CHECK(r.all_ok);
    CHECK(r.diagnostics.find("LEAK") == std::string::npos);
    CHECK(r.diagnostics.find("ERR") == std::string::npos);
  }
  SUBCASE("a student main does not take over") {
    const auto r = grader().grade(p, block("int main(void){return 1;}\nint count_negatives(const int a[], int n){"
                                           "int c=0; for(int i=0;i<n;i++) c+=a[i]<0; return c;}"));
    CHECK(r.all_ok);
  }
}

TEST_CASE("grading is deterministic") {
  const auto& p = problem("robot-navigation");
  auto g = grader();
  const auto mutant = block(pp_test::read_text(pp_test::fixture("mutants/robot-navigation/mutant1.c")));
  const auto a = g.grade(p, mutant);
  const auto b = g.grade(p, mutant);
  CHECK(a.per_function == b.per_function);
  CHECK(a.status == b.status);
}

TEST_CASE("result-line protocol rules") {
  const auto p = pp_test::synthetic_problem("s", corpus::Tier::L9, 2);
  const std::vector<std::string> fns{"f1", "f2"};
  auto graded = [&](std::vector<UnitOutcome> units) { return grade_outcome({std::move(units), 1.0}, p, 4096); };

  SUBCASE("all pass") {
    const auto r = graded({unit_with(fns, 2, "noise\nRESULT f1 0 PASS\nRESULT f2 0 PASS\n")});
    CHECK(r.status == ReportStatus::Graded);
    CHECK(r.all_ok);
  }
  SUBCASE("one failure") {
    const auto r = graded({unit_with(fns, 2, "RESULT f1 0 PASS\nRESULT f2 0 FAIL\n")});
    CHECK(r.status == ReportStatus::Graded);
    CHECK(r.per_function.at("f1").ok);
    CHECK_FALSE(r.per_function.at("f2").ok);
    CHECK_FALSE(r.all_ok);
  }
  SUBCASE("malformed line") {
    const auto r = graded({unit_with(fns, 2, "RESULT f1 0 PASS\nRESULT f2 zero PASS\n")});
    CHECK(r.status == ReportStatus::RuntimeError);
    CHECK_FALSE(r.all_ok);
  }
  SUBCASE("duplicate line") {
    const auto r = graded({unit_with(fns, 2, "RESULT f1 0 PASS\nRESULT f1 0 PASS\nRESULT f2 0 PASS\n")});
    CHECK(r.status == ReportStatus::RuntimeError);
  }
  SUBCASE("unknown function") {
    const auto r = graded({unit_with(fns, 2, "RESULT f1 0 PASS\nRESULT f9 0 PASS\nRESULT f2 0 PASS\n")});
    CHECK(r.status == ReportStatus::RuntimeError);
  }
  SUBCASE("missing lines") {
    const auto r = graded({unit_with(fns, 2, "RESULT f1 0 PASS\n")});
    CHECK(r.status == ReportStatus::RuntimeError);
    CHECK_FALSE(r.per_function.at("f2").ok);
  }
  SUBCASE("driver exits non-zero") {
    const auto r = graded({unit_with(fns, 2, "RESULT f1 0 PASS\nRESULT f2 0 PASS\n", 1)});
    CHECK(r.status == ReportStatus::RuntimeError);
    CHECK_FALSE(r.all_ok);
  }
  SUBCASE("all_ok requires graded status") {
    auto u = unit_with(fns, 2, "RESULT f1 0 PASS\nRESULT f2 0 PASS\n");
    u.run->timed_out = true;
    CHECK_FALSE(graded({u}).all_ok);
  }
  SUBCASE("compile error in every unit") {
    UnitOutcome u;
    u.functions = fns;
    u.compiled = false;
    u.compile.exit_code = 1;
    u.compile.stderr_data = "unit.c:1:1: error: expected ';'\n";
    const auto r = graded({u});
    CHECK(r.status == ReportStatus::CompileError);
    for (const auto& [n, f] : r.per_function) CHECK(f.status == ReportStatus::CompileError);
  }
  SUBCASE("diagnostics are capped") {
    UnitOutcome u;
    u.functions = fns;
    u.compiled = false;
    u.compile.stderr_data = std::string(100000, 'e') + "\n";
    CHECK(grade_outcome({{u}, 0}, p, 512).diagnostics.size() <= 512);
  }
}

TEST_CASE("report JSON round trip") {
  ExecutionReport r;
  r.status = ReportStatus::RuntimeError;
  r.per_function["f1"] = {2, 3, false, ReportStatus::RuntimeError};
  r.diagnostics = "x";
  r.visible_to_student = true;
  r.run_index = 4;
  const auto back = execution_report_from_json(to_json(r));
  CHECK(back.per_function == r.per_function);
  CHECK(back.status == r.status);
  CHECK(back.run_index == 4);
  CHECK(to_json(r)["run_index"] == 4);
  r.run_index.reset();
  CHECK(to_json(r)["run_index"].is_null());
}

TEST_CASE("toolchain configuration") {
  CHECK_THROWS_AS(toolchain_from_json({{"c_compile", "cc -o out src.c"}}), Error);
  CHECK_THROWS_AS(toolchain_from_json({{"cxx", "g++"}}), Error);
  Toolchain missing;
  missing.c_compile = "no-such-cc-xyz -o {out} {src}";
  try {
    check_toolchain(missing, corpus::Language::C);
    FAIL("expected ToolchainMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ToolchainMissing);
  }
  CHECK_NOTHROW(check_toolchain(Toolchain{}, corpus::Language::C));
}

TEST_CASE("python problems grade through the same pipeline") {
  if (find_executable("python3").empty()) {
    MESSAGE("python3 not installed");
    return;
  }
  const auto problems = corpus::load_corpus(pp_test::fixture("python_corpus"));
  const auto& p = problems.at(0);
  auto g = grader();
  const auto good = g.grade(p, block("def total(xs):\n    return sum(xs)\n\ndef mean(xs):\n    return total(xs) / len(xs)\n"));
  INFO(good.diagnostics);
  CHECK(good.all_ok);
  const auto partial = g.grade(p, block("def total(xs):\n    return sum(xs)\n"));
  CHECK(partial.status == ReportStatus::CompileError);
  CHECK(partial.diagnostics.find("undefined reference") != std::string::npos);
  const auto modular = grader(GradingMode::Modular).grade(p, block("def total(xs):\n    return sum(xs)\n"));
  CHECK(modular.per_function.at("total").ok);
  CHECK_FALSE(modular.per_function.at("mean").ok);
  const auto wrong = g.grade(p, block("def total(xs):\n    return 0\n\ndef mean(xs):\n    return 0.0\n"));
  CHECK(wrong.status == ReportStatus::Graded);
  CHECK_FALSE(wrong.all_ok);
  const auto syntax = g.grade(p, block("def total(xs)\n    return 0\n"));
  CHECK(syntax.status == ReportStatus::CompileError);
  CHECK(syntax.diagnostics.find("/tmp") == std::string::npos);
}
