#include "promptprog/driver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::runner {

using corpus::Comparison;
using corpus::FunctionSpec;
using corpus::Language;
using corpus::Problem;
using corpus::Signature;
using corpus::StructLayout;
using corpus::TestCase;
using corpus::TypeDesc;
using corpus::ValueKind;
using nlohmann::json;

std::string_view to_string(GradingMode mode) noexcept {
  return mode == GradingMode::SingleDriver ? "single_driver" : "modular";
}

std::optional<GradingMode> parse_grading_mode(std::string_view text) noexcept {
  if (text == "single_driver") return GradingMode::SingleDriver;
  if (text == "modular") return GradingMode::Modular;
  return std::nullopt;
}

std::string c_string_literal(std::string_view bytes) {
  std::string out = "\"";
  for (unsigned char c : bytes) {
    if (c == '\\' || c == '"' || c == '?') {
      out.push_back('\\');
      out.push_back(static_cast<char>(c));
    } else if (c >= 0x20 && c < 0x7f) {
      out.push_back(static_cast<char>(c));
    } else {
      out += fmt::format("\\{:03o}", c);
    }
  }
  out.push_back('"');
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// C literals

std::string int_literal(const json& v) {
  auto x = v.get<std::int64_t>();
  if (x == std::numeric_limits<int>::min()) return "(-2147483647 - 1)";
  return x < 0 ? fmt::format("({})", x) : fmt::format("{}", x);
}

std::string long_literal(const json& v) {
  auto x = v.get<std::int64_t>();
  if (x == std::numeric_limits<std::int64_t>::min()) return "(-9223372036854775807LL - 1)";
  return x < 0 ? fmt::format("({}LL)", x) : fmt::format("{}LL", x);
}

std::string double_literal(const json& v) {
  std::string s = fmt::format("{:.17g}", v.get<double>());
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s[0] == '-' ? "(" + s + ")" : s;
}

std::string char_literal(const json& v) {
  const auto& s = v.get_ref<const std::string&>();
  return fmt::format("((char){})", s.empty() ? 0 : static_cast<unsigned char>(s[0]));
}

std::string scalar_literal(ValueKind kind, const json& v) {
  switch (kind) {
    case ValueKind::Int: return int_literal(v);
    case ValueKind::Long: return long_literal(v);
    case ValueKind::Char: return char_literal(v);
    case ValueKind::Bool: return v.get<bool>() ? "true" : "false";
    case ValueKind::Double: return double_literal(v);
    default: break;
  }
  throw Error(ErrorCode::UnsupportedType, "not a scalar kind");
}

ValueKind element_kind(ValueKind array_kind) {
  switch (array_kind) {
    case ValueKind::IntArray: return ValueKind::Int;
    case ValueKind::LongArray: return ValueKind::Long;
    case ValueKind::DoubleArray: return ValueKind::Double;
    case ValueKind::CharArray: return ValueKind::Char;
    default: return array_kind;
  }
}

std::string c_element_type(ValueKind kind) {
  switch (kind) {
    case ValueKind::Int: return "int";
    case ValueKind::Long: return "long";
    case ValueKind::Char: return "char";
    case ValueKind::Bool: return "bool";
    case ValueKind::Double: return "double";
    default: return "int";
  }
}

std::string c_result_type(const TypeDesc& t) {
  switch (t.kind) {
    case ValueKind::String: return "const char *";
    case ValueKind::Struct: return "struct " + t.struct_name;
    default: return c_element_type(t.kind);
  }
}

const StructLayout& layout_of(const std::vector<StructLayout>& structs, const std::string& name) {
  for (const auto& s : structs) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::UnsupportedType, "unknown struct '" + name + "'");
}

// Boolean C expression comparing `actual` (an lvalue) with literal `expected`.
std::string scalar_check(ValueKind kind, const std::string& actual, const json& expected,
                         const Comparison& cmp) {
  if (kind == ValueKind::Double && cmp.mode == Comparison::Mode::Epsilon) {
    return fmt::format("(fabs((double)({}) - {}) <= {})", actual, double_literal(expected),
                       double_literal(json(cmp.tolerance)));
  }
  if (kind == ValueKind::Bool) {
    return fmt::format("(((bool)({})) == {})", actual, scalar_literal(kind, expected));
  }
  return fmt::format("(({}) == {})", actual, scalar_literal(kind, expected));
}

class CaseWriter {
 public:
  CaseWriter(const std::vector<StructLayout>& structs, std::string& out) : structs_(structs), out_(out) {}

  void line(const std::string& s) {
    out_ += "  ";
    out_ += s;
    out_ += '\n';
  }

  // Declares storage for argument `i` and returns the expression to pass.
  std::string argument(std::size_t i, const TypeDesc& t, const json& v) {
    const std::string var = fmt::format("pp_a{}", i);
    switch (t.kind) {
      case ValueKind::Int:
      case ValueKind::Long:
      case ValueKind::Char:
      case ValueKind::Bool:
      case ValueKind::Double:
        return scalar_literal(t.kind, v);
      case ValueKind::String:
        if (v.is_null()) return "NULL";
        line(fmt::format("char {}[] = {};", var, c_string_literal(v.get<std::string>())));
        return var;
      case ValueKind::IntArray:
      case ValueKind::LongArray:
      case ValueKind::DoubleArray: {
        const auto elem = element_kind(t.kind);
        std::string init;
        for (std::size_t k = 0; k < v.size(); ++k) {
          if (k) init += ", ";
          init += scalar_literal(elem, v[k]);
        }
        if (v.empty()) init = "0";
        line(fmt::format("{}{} {}[{}] = {{{}}};", t.is_const ? "const " : "", c_element_type(elem), var,
                         std::max<std::size_t>(v.size(), 1), init));
        return var;
      }
      case ValueKind::Struct: {
        line(fmt::format("struct {} {};", t.struct_name, var));
        line(fmt::format("memset(&{0}, 0, sizeof {0});", var));
        assign_fields(var, layout_of(structs_, t.struct_name), v);
        return t.by_pointer ? "&" + var : var;
      }
      default:
        throw Error(ErrorCode::UnsupportedType, "cannot marshal argument");
    }
  }

  // Appends checks of `actual` against `expected` into pp_ok.
  void check(const TypeDesc& t, const std::string& actual, const json& expected, const Comparison& cmp) {
    switch (t.kind) {
      case ValueKind::Int:
      case ValueKind::Long:
      case ValueKind::Char:
      case ValueKind::Bool:
      case ValueKind::Double:
        line(fmt::format("pp_ok = pp_ok && {};", scalar_check(t.kind, actual, expected, cmp)));
        return;
      case ValueKind::String:
        if (expected.is_null()) {
          line(fmt::format("pp_ok = pp_ok && ({} == NULL);", actual));
        } else {
          line(fmt::format("pp_ok = pp_ok && ({0} != NULL && strcmp({0}, {1}) == 0);", actual,
                           c_string_literal(expected.get<std::string>())));
        }
        return;
      case ValueKind::CharArray: {
        const auto& s = expected.get_ref<const std::string&>();
        if (s.empty()) return;
        line(fmt::format("pp_ok = pp_ok && sizeof({0}) >= {1} && memcmp({0}, {2}, {1}) == 0;", actual,
                         s.size(), c_string_literal(s)));
        return;
      }
      case ValueKind::IntArray:
      case ValueKind::LongArray:
      case ValueKind::DoubleArray: {
        const auto elem = element_kind(t.kind);
        for (std::size_t k = 0; k < expected.size(); ++k) {
          line(fmt::format("pp_ok = pp_ok && {};",
                           scalar_check(elem, fmt::format("{}[{}]", actual, k), expected[k], cmp)));
        }
        return;
      }
      case ValueKind::Struct: {
        const auto& layout = layout_of(structs_, t.struct_name);
        for (const auto& [key, value] : expected.items()) {
          const auto* field = layout.find(key);
          check(field->type, fmt::format("{}.{}", actual, key), value, cmp);
        }
        return;
      }
      default:
        throw Error(ErrorCode::UnsupportedType, "cannot compare output");
    }
  }

 private:
  void assign_fields(const std::string& var, const StructLayout& layout, const json& v) {
    for (const auto& [key, value] : v.items()) {
      const auto* field = layout.find(key);
      const std::string lhs = fmt::format("{}.{}", var, key);
      switch (field->type.kind) {
        case ValueKind::CharArray: {
          const auto& s = value.get_ref<const std::string&>();
          line(fmt::format("if (sizeof({}) < {}) return 0;", lhs, s.size()));
          if (!s.empty()) line(fmt::format("memcpy({}, {}, {});", lhs, c_string_literal(s), s.size()));
          break;
        }
        case ValueKind::IntArray:
        case ValueKind::LongArray:
        case ValueKind::DoubleArray: {
          line(fmt::format("if (sizeof({0}) / sizeof({0}[0]) < {1}) return 0;", lhs, value.size()));
          for (std::size_t k = 0; k < value.size(); ++k) {
            line(fmt::format("{}[{}] = {};", lhs, k, scalar_literal(element_kind(field->type.kind), value[k])));
          }
          break;
        }
        default:
          line(fmt::format("{} = {};", lhs, scalar_literal(field->type.kind, value)));
      }
    }
  }

  const std::vector<StructLayout>& structs_;
  std::string& out_;
};

std::vector<const json*> split_expected(const Signature& sig, const json& expected) {
  std::vector<const json*> out;
  if (sig.output_count() == 1) {
    out.push_back(&expected);
  } else {
    for (const auto& v : expected) out.push_back(&v);
  }
  return out;
}

struct CaseRef {
  std::string function;
  std::size_t index;
  std::string symbol;
};

std::string c_case(const std::vector<StructLayout>& structs, const Signature& sig, const TestCase& tc,
                   const std::string& symbol) {
  std::string body;
  CaseWriter w(structs, body);
  std::vector<std::string> args;
  for (std::size_t i = 0; i < sig.params.size(); ++i) {
    args.push_back(w.argument(i, sig.params[i].type, tc.inputs[i]));
  }
  std::string call = sig.name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) call += (i ? ", " : "") + args[i];
  call += ")";
  if (sig.result.kind == ValueKind::Void) {
    w.line(call + ";");
  } else {
    w.line(fmt::format("{} pp_r = {};", c_result_type(sig.result), call));
  }
  w.line("int pp_ok = 1;");
  auto expected = split_expected(sig, tc.expected);
  std::size_t k = 0;
  if (sig.result.kind != ValueKind::Void) w.check(sig.result, "pp_r", *expected[k++], tc.comparison);
  for (auto idx : sig.output_params()) {
    const auto& t = sig.params[idx].type;
    std::string actual = fmt::format("pp_a{}", idx);
    w.check(t, actual, *expected[k++], tc.comparison);
  }
  w.line("return pp_ok;");
  return fmt::format("static int {}(void) {{\n{}}}\n\n", symbol, body);
}

constexpr std::string_view kCPrelude = R"(#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <stdbool.h>
#include <ctype.h>
#include <math.h>
#define main promptprog_student_main
#line 1 "student.c"
)";

constexpr std::string_view kCRunner = R"(
typedef int (*pp_case_fn)(void);
struct pp_case {
  const char *fn;
  unsigned idx;
  pp_case_fn run;
};

static void pp_run(const struct pp_case *c, int devnull) {
  int fds[2];
  if (pipe(fds) != 0) {
    printf("RESULT %s %u FAIL\n", c->fn, c->idx);
    return;
  }
  fflush(stdout);
  fflush(stderr);
  pid_t pid = fork();
  if (pid == 0) {
    close(fds[0]);
    dup2(devnull, 1);
    dup2(devnull, 2);
    struct itimerval t;
    memset(&t, 0, sizeof t);
    t.it_value.tv_sec = PP_TIMEOUT_USEC / 1000000;
    t.it_value.tv_usec = PP_TIMEOUT_USEC % 1000000;
    setitimer(ITIMER_REAL, &t, NULL);
    char verdict = c->run() ? 'P' : 'F';
    if (write(fds[1], &verdict, 1) != 1) _exit(3);
    _exit(0);
  }
  close(fds[1]);
  char verdict = 0;
  ssize_t got = pid > 0 ? read(fds[0], &verdict, 1) : -1;
  close(fds[0]);
  int status = 0;
  if (pid > 0) waitpid(pid, &status, 0);
  int pass = got == 1 && verdict == 'P' && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  if (!pass && got != 1) {
    if (pid > 0 && WIFSIGNALED(status) && WTERMSIG(status) == SIGALRM) {
      fprintf(stderr, "%s test %u: timed out\n", c->fn, c->idx);
    } else if (pid > 0 && WIFSIGNALED(status)) {
      fprintf(stderr, "%s test %u: crashed (signal %d)\n", c->fn, c->idx, WTERMSIG(status));
    } else {
      fprintf(stderr, "%s test %u: ended without a result\n", c->fn, c->idx);
    }
  }
  printf("RESULT %s %u %s\n", c->fn, c->idx, pass ? "PASS" : "FAIL");
  fflush(stdout);
}

int main(void) {
  if (PP_CASE_COUNT == 0) return 0;
  int devnull = open("/dev/null", O_WRONLY);
  for (size_t i = 0; i < PP_CASE_COUNT; ++i) pp_run(&pp_cases[i], devnull);
  return 0;
}
)";

SourceUnit c_unit(const Problem& p, const std::vector<StructLayout>& structs, const CodeBlock& block,
                  const std::vector<const FunctionSpec*>& fns, std::string name, double timeout_s) {
  SourceUnit unit;
  unit.name = std::move(name);
  std::string cases;
  std::vector<CaseRef> refs;
  for (const auto* fn : fns) {
    unit.functions.push_back(fn->name);
    const auto sig = corpus::parse_signature(fn->signature, p.language);
    for (std::size_t i = 0; i < fn->hidden_tests.size(); ++i) {
      std::string symbol = fmt::format("pp_case_{}_{}", refs.size(), i);
      cases += c_case(structs, sig, fn->hidden_tests[i], symbol);
      refs.push_back({fn->name, i, symbol});
    }
  }
  unit.test_count = refs.size();

  std::string src(kCPrelude);
  src += block.text;
  if (!block.text.empty() && block.text.back() != '\n') src += '\n';
  src += "#undef main\n#line 1 \"driver.c\"\n";
  src += "#include <fcntl.h>\n#include <signal.h>\n#include <sys/time.h>\n#include <sys/wait.h>\n"
         "#include <unistd.h>\n";
  auto usec = static_cast<long long>(std::llround(timeout_s * 1e6));
  src += fmt::format("#define PP_TIMEOUT_USEC {}LL\n#define PP_CASE_COUNT {}u\n\n", std::max<long long>(usec, 1),
                     refs.size());
  src += cases;
  std::string runner(kCRunner);
  const auto split = runner.find("static void pp_run");
  src += runner.substr(0, split);
  src += fmt::format("static const struct pp_case pp_cases[{}] = {{\n", std::max<std::size_t>(refs.size(), 1));
  for (const auto& r : refs) src += fmt::format("  {{\"{}\", {}u, {}}},\n", r.function, r.index, r.symbol);
  if (refs.empty()) src += "  {\"\", 0u, 0},\n";
  src += "};\n\n";
  src += runner.substr(split);
  unit.source = std::move(src);
  return unit;
}

// ---------------------------------------------------------------------------
// Python

constexpr std::string_view kPyRunner = R"(

import json as _pp_json
import math as _pp_math
import os as _pp_os
import signal as _pp_signal
import sys as _pp_sys


def _pp_same(actual, expected, tol):
    if isinstance(actual, tuple):
        actual = list(actual)
    if isinstance(expected, list):
        return isinstance(actual, list) and len(actual) == len(expected) and all(
            _pp_same(a, e, tol) for a, e in zip(actual, expected))
    if isinstance(expected, dict):
        return isinstance(actual, dict) and set(actual) == set(expected) and all(
            _pp_same(actual[k], expected[k], tol) for k in expected)
    if tol is not None and isinstance(expected, (int, float)) and not isinstance(expected, bool):
        return isinstance(actual, (int, float)) and abs(actual - expected) <= tol
    if isinstance(expected, bool) or isinstance(actual, bool):
        return type(actual) is type(expected) and actual == expected
    return actual == expected


def _pp_main():
    if _pp_os.environ.get("PROMPTPROG_LINK_CHECK"):
        missing = [n for n in _PP_REQUIRED if not callable(globals().get(n))]
        for n in missing:
            print("undefined reference to `%s'" % n, file=_pp_sys.stderr)
        _pp_sys.exit(1 if missing else 0)
    devnull = _pp_os.open(_pp_os.devnull, _pp_os.O_WRONLY)
    for case in _PP_CASES:
        r, w = _pp_os.pipe()
        _pp_sys.stdout.flush()
        _pp_sys.stderr.flush()
        pid = _pp_os.fork()
        if pid == 0:
            _pp_os.close(r)
            _pp_os.dup2(devnull, 1)
            _pp_os.dup2(devnull, 2)
            _pp_signal.setitimer(_pp_signal.ITIMER_REAL, _PP_TIMEOUT)
            ok = False
            try:
                fn = globals()[case["fn"]]
                ok = bool(_pp_same(fn(*case["args"]), case["expected"], case["tol"]))
            except BaseException:
                ok = False
            _pp_os.write(w, b"P" if ok else b"F")
            _pp_os._exit(0)
        _pp_os.close(w)
        data = _pp_os.read(r, 1)
        _pp_os.close(r)
        _, status = _pp_os.waitpid(pid, 0)
        passed = data == b"P" and _pp_os.WIFEXITED(status) and _pp_os.WEXITSTATUS(status) == 0
        if not data:
            if _pp_os.WIFSIGNALED(status) and _pp_os.WTERMSIG(status) == _pp_signal.SIGALRM:
                print("%s test %d: timed out" % (case["fn"], case["idx"]), file=_pp_sys.stderr)
            else:
                print("%s test %d: ended without a result" % (case["fn"], case["idx"]), file=_pp_sys.stderr)
        print("RESULT %s %d %s" % (case["fn"], case["idx"], "PASS" if passed else "FAIL"), flush=True)


if __name__ == "__main__":
    _pp_main()
)";

SourceUnit python_unit(const CodeBlock& block, const std::vector<const FunctionSpec*>& fns,
                       std::string name, double timeout_s) {
  SourceUnit unit;
  unit.name = std::move(name);
  json cases = json::array();
  json required = json::array();
  for (const auto* fn : fns) {
    unit.functions.push_back(fn->name);
    required.push_back(fn->name);
    for (std::size_t i = 0; i < fn->hidden_tests.size(); ++i) {
      const auto& tc = fn->hidden_tests[i];
      json c{{"fn", fn->name}, {"idx", i}, {"args", tc.inputs}, {"expected", tc.expected}, {"tol", nullptr}};
      if (tc.comparison.mode == Comparison::Mode::Epsilon) c["tol"] = tc.comparison.tolerance;
      cases.push_back(std::move(c));
    }
  }
  unit.test_count = cases.size();
  std::string src = block.text;
  if (!src.empty() && src.back() != '\n') src += '\n';
  src += kPyRunner.substr(0, kPyRunner.find("\n\ndef _pp_same"));
  // A JSON string literal is also a valid Python string literal.
  src += fmt::format("\n_PP_CASES = _pp_json.loads({})\n", json(cases.dump()).dump());
  src += fmt::format("_PP_REQUIRED = _pp_json.loads({})\n", json(required.dump()).dump());
  src += fmt::format("_PP_TIMEOUT = {}\n", std::max(timeout_s, 0.001));
  src += kPyRunner.substr(kPyRunner.find("\n\ndef _pp_same"));
  unit.source = std::move(src);
  return unit;
}

}  // namespace

SourceBundle synthesize_driver(const Problem& problem, const CodeBlock& block, GradingMode mode,
                               double per_test_timeout_s) {
  SourceBundle bundle;
  bundle.language = problem.language;
  bundle.mode = mode;
  std::vector<StructLayout> structs;
  if (problem.language == Language::C) {
    structs = corpus::struct_layouts(problem);
    // Surface unsupported signatures before emitting anything.
    for (const auto& fn : problem.functions) corpus::parse_signature(fn.signature, problem.language);
  }
  std::vector<const FunctionSpec*> all;
  for (const auto& fn : problem.functions) all.push_back(&fn);

  auto make = [&](const std::vector<const FunctionSpec*>& fns, std::string name) {
    return problem.language == Language::C
               ? c_unit(problem, structs, block, fns, std::move(name), per_test_timeout_s)
               : python_unit(block, fns, std::move(name), per_test_timeout_s);
  };
  if (mode == GradingMode::SingleDriver) {
    bundle.units.push_back(make(all, "all"));
  } else {
    for (const auto* fn : all) bundle.units.push_back(make({fn}, fn->name));
  }
  return bundle;
}

}  // namespace promptprog::runner
