#include "promptprog/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::corpus {

using nlohmann::json;

std::string_view to_string(Tier tier) noexcept {
  switch (tier) {
    case Tier::L7: return "L7";
    case Tier::L9: return "L9";
    case Tier::L10: return "L10";
  }
  return "?";
}

std::optional<Tier> parse_tier(std::string_view text) noexcept {
  if (text == "L7") return Tier::L7;
  if (text == "L9") return Tier::L9;
  if (text == "L10") return Tier::L10;
  return std::nullopt;
}

int default_message_limit(Tier tier) noexcept { return tier == Tier::L7 ? 5 : 20; }

std::string_view to_string(ProblemKind kind) noexcept {
  return kind == ProblemKind::SingleFunction ? "single_function" : "multi_function";
}

std::string Comparison::to_string() const {
  switch (mode) {
    case Mode::Exact: return "exact";
    case Mode::ArrayEqual: return "array_equal";
    case Mode::Epsilon: return fmt::format("epsilon({})", tolerance);
  }
  return "exact";
}

std::optional<Comparison> Comparison::parse(std::string_view text) {
  if (text == "exact") return Comparison{};
  if (text == "array_equal") return Comparison{Mode::ArrayEqual, 0.0};
  constexpr std::string_view prefix = "epsilon(";
  if (text.size() > prefix.size() + 1 && text.substr(0, prefix.size()) == prefix &&
      text.back() == ')') {
    std::string inner(text.substr(prefix.size(), text.size() - prefix.size() - 1));
    try {
      std::size_t used = 0;
      double tol = std::stod(inner, &used);
      if (used != inner.size() || !std::isfinite(tol)) return std::nullopt;
      return Comparison{Mode::Epsilon, tol};
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

const FunctionSpec* Problem::find_function(std::string_view name) const noexcept {
  auto it = std::find_if(functions.begin(), functions.end(),
                         [&](const FunctionSpec& f) { return f.name == name; });
  return it == functions.end() ? nullptr : &*it;
}

std::vector<std::string> Problem::function_names() const {
  std::vector<std::string> names;
  names.reserve(functions.size());
  for (const auto& f : functions) names.push_back(f.name);
  return names;
}

// ---------------------------------------------------------------------------
// Strict JSON mapping

namespace {

[[noreturn]] void malformed(const std::string& why) {
  throw Error(ErrorCode::MalformedDefinition, why);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) malformed(std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      malformed(fmt::format("unknown field '{}' in {}", key, where));
    }
  }
}

const json& require(const json& obj, const char* key, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(fmt::format("missing field '{}' in {}", key, where));
  return *it;
}

std::string require_string(const json& obj, const char* key, std::string_view where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) malformed(fmt::format("field '{}' in {} must be a string", key, where));
  return v.get<std::string>();
}

TestCase test_from_json(const json& doc, std::string_view where) {
  reject_unknown(doc, {"inputs", "expected", "comparison"}, where);
  TestCase tc;
  tc.inputs = require(doc, "inputs", where);
  if (!tc.inputs.is_array()) malformed(fmt::format("'inputs' in {} must be an array", where));
  tc.expected = require(doc, "expected", where);
  if (auto it = doc.find("comparison"); it != doc.end()) {
    if (!it->is_string()) malformed(fmt::format("'comparison' in {} must be a string", where));
    auto cmp = Comparison::parse(it->get<std::string>());
    if (!cmp) malformed(fmt::format("bad comparison '{}' in {}", it->get<std::string>(), where));
    tc.comparison = *cmp;
  }
  return tc;
}

json test_to_json(const TestCase& tc) {
  return json{{"inputs", tc.inputs}, {"expected", tc.expected},
              {"comparison", tc.comparison.to_string()}};
}

std::vector<TestCase> tests_from_json(const json& doc, const char* key, std::string_view where) {
  const auto& arr = require(doc, key, where);
  if (!arr.is_array()) malformed(fmt::format("'{}' in {} must be an array", key, where));
  std::vector<TestCase> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(test_from_json(arr[i], fmt::format("{}[{}] of {}", key, i, where)));
  }
  return out;
}

}  // namespace

Problem problem_from_json(const json& doc) {
  reject_unknown(doc, {"id", "title", "tier", "language", "message_limit", "description",
                       "struct_decls", "functions"},
                 "problem");
  Problem p;
  p.id = require_string(doc, "id", "problem");
  p.title = require_string(doc, "title", "problem");
  auto tier = parse_tier(require_string(doc, "tier", "problem"));
  if (!tier) malformed("tier must be one of L7, L9, L10");
  p.tier = *tier;
  auto lang = parse_language(require_string(doc, "language", "problem"));
  if (!lang) malformed("language must be C or Python");
  p.language = *lang;
  p.description = require_string(doc, "description", "problem");
  p.message_limit = default_message_limit(p.tier);
  if (auto it = doc.find("message_limit"); it != doc.end()) {
    if (!it->is_number_integer()) malformed("message_limit must be an integer");
    auto limit = it->get<std::int64_t>();
    if (limit < std::numeric_limits<int>::min() || limit > std::numeric_limits<int>::max()) {
      malformed("message_limit out of range");
    }
    p.message_limit = static_cast<int>(limit);
  }
  if (auto it = doc.find("struct_decls"); it != doc.end()) {
    if (!it->is_array()) malformed("struct_decls must be an array");
    for (const auto& s : *it) {
      reject_unknown(s, {"name", "fields"}, "struct_decls entry");
      p.struct_decls.push_back(
          {require_string(s, "name", "struct_decls entry"), require_string(s, "fields", "struct_decls entry")});
    }
  }
  const auto& fns = require(doc, "functions", "problem");
  if (!fns.is_array()) malformed("functions must be an array");
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const auto& f = fns[i];
    const std::string where = fmt::format("functions[{}]", i);
    reject_unknown(f, {"name", "signature", "depends_on", "visible_examples", "hidden_tests"}, where);
    FunctionSpec spec;
    spec.name = require_string(f, "name", where);
    spec.signature = require_string(f, "signature", where);
    if (auto it = f.find("depends_on"); it != f.end()) {
      if (!it->is_array()) malformed("depends_on must be an array in " + where);
      for (const auto& d : *it) {
        if (!d.is_string()) malformed("depends_on entries must be strings in " + where);
        spec.depends_on.push_back(d.get<std::string>());
      }
    }
    spec.visible_examples = tests_from_json(f, "visible_examples", where);
    spec.hidden_tests = tests_from_json(f, "hidden_tests", where);
    p.functions.push_back(std::move(spec));
  }
  return p;
}

json to_json(const Problem& p) {
  json doc;
  doc["id"] = p.id;
  doc["title"] = p.title;
  doc["tier"] = std::string(to_string(p.tier));
  doc["language"] = std::string(to_string(p.language));
  doc["message_limit"] = p.message_limit;
  doc["description"] = p.description;
  if (!p.struct_decls.empty()) {
    json decls = json::array();
    for (const auto& s : p.struct_decls) decls.push_back({{"name", s.name}, {"fields", s.fields}});
    doc["struct_decls"] = decls;
  }
  json fns = json::array();
  for (const auto& f : p.functions) {
    json fj;
    fj["name"] = f.name;
    fj["signature"] = f.signature;
    fj["depends_on"] = f.depends_on;
    fj["visible_examples"] = json::array();
    for (const auto& t : f.visible_examples) fj["visible_examples"].push_back(test_to_json(t));
    fj["hidden_tests"] = json::array();
    for (const auto& t : f.hidden_tests) fj["hidden_tests"].push_back(test_to_json(t));
    fns.push_back(std::move(fj));
  }
  doc["functions"] = std::move(fns);
  return doc;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<StructLayout> struct_layouts(const Problem& p) {
  std::vector<StructLayout> out;
  for (const auto& s : p.struct_decls) out.push_back(parse_struct_fields(s.name, s.fields));
  return out;
}

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  });
}

bool is_slug(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
           c == '-';
  });
}

void check_test(const Problem& p, const FunctionSpec& fn, const Signature& sig,
                const std::vector<StructLayout>& structs, const TestCase& tc, std::string_view where,
                std::vector<ValidationIssue>& issues) {
  auto add = [&](std::string code, std::string detail) {
    issues.push_back({std::move(code), fmt::format("{}: {}", where, detail)});
  };
  if (tc.inputs.size() != sig.params.size()) {
    add("ArityMismatch", fmt::format("{} inputs for {} parameters of {}", tc.inputs.size(),
                                     sig.params.size(), fn.name));
    return;
  }
  for (std::size_t i = 0; i < sig.params.size(); ++i) {
    if (auto why = check_value(sig.params[i].type, tc.inputs[i], structs, false)) {
      add("TypeMismatch", fmt::format("input {} ({}): {}", i, sig.params[i].name, *why));
    }
  }
  const auto n_out = sig.output_count();
  if (n_out == 0) {
    add("NoOutputs", fn.name + " has neither a return value nor output parameters");
    return;
  }
  std::vector<const json*> outputs;
  if (n_out == 1) {
    outputs.push_back(&tc.expected);
  } else if (!tc.expected.is_array() || tc.expected.size() != n_out) {
    add("ArityMismatch", fmt::format("expected must list {} output values", n_out));
    return;
  } else {
    for (const auto& v : tc.expected) outputs.push_back(&v);
  }
  std::vector<TypeDesc> out_types;
  if (sig.result.kind != ValueKind::Void) out_types.push_back(sig.result);
  const auto out_params = sig.output_params();
  for (auto idx : out_params) out_types.push_back(sig.params[idx].type);

  bool any_float = false;
  bool any_array = false;
  for (std::size_t k = 0; k < out_types.size(); ++k) {
    if (auto why = check_value(out_types[k], *outputs[k], structs, true)) {
      add("TypeMismatch", fmt::format("expected output {}: {}", k, *why));
    }
    any_array = any_array || out_types[k].is_array();
    if (out_types[k].holds_floating() || out_types[k].kind == ValueKind::Any) any_float = true;
    if (out_types[k].kind == ValueKind::Struct) {
      for (const auto& s : structs) {
        if (s.name != out_types[k].struct_name) continue;
        for (const auto& f : s.fields) any_float = any_float || f.type.holds_floating();
      }
    }
  }
  // Output buffers are the caller-supplied input arrays; expectations must fit.
  const std::size_t first_param_out = sig.result.kind == ValueKind::Void ? 0 : 1;
  for (std::size_t k = 0; k < out_params.size(); ++k) {
    const auto& in = tc.inputs[out_params[k]];
    const auto& out = *outputs[first_param_out + k];
    if (sig.params[out_params[k]].type.is_array() && in.is_array() && out.is_array() &&
        out.size() > in.size()) {
      add("OutputLengthMismatch",
          fmt::format("expected array for '{}' is longer than its input buffer",
                      sig.params[out_params[k]].name));
    }
  }
  if (tc.comparison.mode == Comparison::Mode::Epsilon) {
    if (!any_float) add("EpsilonOnNonFloat", "epsilon comparison on non-floating outputs");
    if (tc.comparison.tolerance < 0) add("NegativeTolerance", "tolerance must be non-negative");
  }
  if (tc.comparison.mode == Comparison::Mode::ArrayEqual && !any_array &&
      p.language == Language::C) {
    add("ArrayEqualOnNonArray", "array_equal comparison without array outputs");
  }
}

}  // namespace

std::vector<ValidationIssue> validate_problem(const Problem& p) {
  std::vector<ValidationIssue> issues;
  auto add = [&](std::string code, std::string detail) {
    issues.push_back({std::move(code), std::move(detail)});
  };
  if (!is_slug(p.id)) add("InvalidId", "id must be a non-empty lowercase slug");
  if (p.title.empty()) add("EmptyTitle", "title is empty");
  if (p.message_limit < 1) {
    add("LimitOutOfRange", fmt::format("message_limit {} must be >= 1", p.message_limit));
  }
  if (p.functions.empty()) add("NoFunctions", "problem defines no functions");

  std::vector<StructLayout> structs;
  std::set<std::string> struct_names;
  for (const auto& s : p.struct_decls) {
    if (!is_identifier(s.name)) add("BadStructDecl", "invalid struct name '" + s.name + "'");
    if (!struct_names.insert(s.name).second) add("DuplicateStructName", s.name);
    if (p.language == Language::C) {
      try {
        structs.push_back(parse_struct_fields(s.name, s.fields));
      } catch (const Error& e) {
        add("BadStructDecl", e.what());
      }
    }
  }

  std::set<std::string> names;
  for (const auto& f : p.functions) {
    if (!names.insert(f.name).second) add("DuplicateFunctionName", f.name);
  }
  for (const auto& f : p.functions) {
    if (!is_identifier(f.name)) add("InvalidFunctionName", "'" + f.name + "'");
    if (f.visible_examples.empty()) add("MissingVisibleExample", f.name);
    if (f.hidden_tests.empty()) add("MissingHiddenTest", f.name);
    std::set<std::string> deps;
    for (const auto& d : f.depends_on) {
      if (d == f.name) add("SelfDependency", f.name + " depends on itself");
      else if (!names.count(d)) add("UnknownDependency", f.name + " depends on unknown '" + d + "'");
      if (!deps.insert(d).second) add("DuplicateDependency", f.name + " lists '" + d + "' twice");
    }

    Signature sig;
    try {
      sig = parse_signature(f.signature, p.language);
    } catch (const Error& e) {
      add(e.code() == ErrorCode::UnsupportedType ? "UnsupportedType" : "BadSignature", e.what());
      continue;
    }
    if (sig.name != f.name) {
      add("SignatureNameMismatch", fmt::format("signature declares '{}' for function '{}'", sig.name, f.name));
    }
    bool structs_ok = true;
    auto check_struct = [&](const TypeDesc& t) {
      if (t.kind == ValueKind::Struct && !struct_names.count(t.struct_name)) {
        add("UnknownStruct", fmt::format("{} uses undeclared struct '{}'", f.name, t.struct_name));
        structs_ok = false;
      }
    };
    check_struct(sig.result);
    for (const auto& prm : sig.params) check_struct(prm.type);
    if (!structs_ok) continue;

    for (std::size_t i = 0; i < f.visible_examples.size(); ++i) {
      check_test(p, f, sig, structs, f.visible_examples[i],
                 fmt::format("{} visible_examples[{}]", f.name, i), issues);
    }
    for (std::size_t i = 0; i < f.hidden_tests.size(); ++i) {
      check_test(p, f, sig, structs, f.hidden_tests[i], fmt::format("{} hidden_tests[{}]", f.name, i),
                 issues);
    }
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Loading

std::vector<FileReport> scan_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw Error(ErrorCode::MalformedDefinition, "corpus directory not found: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<FileReport> reports;
  for (const auto& file : files) {
    FileReport r;
    r.path = file;
    try {
      std::ifstream in(file);
      if (!in) throw Error(ErrorCode::MalformedDefinition, "cannot open file");
      json doc = json::parse(in);
      r.problem = problem_from_json(doc);
      r.issues = validate_problem(*r.problem);
    } catch (const json::exception& e) {
      r.load_error = e.what();
    } catch (const Error& e) {
      r.load_error = e.what();
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<Problem> load_corpus(const std::filesystem::path& dir) {
  std::vector<Problem> problems;
  std::set<std::string> ids;
  for (auto& r : scan_corpus(dir)) {
    if (!r.load_error.empty()) {
      throw Error(ErrorCode::MalformedDefinition,
                  fmt::format("{}: {}", r.path.filename().string(), r.load_error));
    }
    if (!r.issues.empty()) {
      std::string detail;
      for (const auto& i : r.issues) detail += fmt::format("\n  {}: {}", i.code, i.detail);
      throw Error(ErrorCode::InvariantViolation,
                  fmt::format("problem '{}' ({}) is invalid:{}", r.problem->id,
                              r.path.filename().string(), detail));
    }
    if (!ids.insert(r.problem->id).second) {
      throw Error(ErrorCode::DuplicateProblemId, "duplicate problem id '" + r.problem->id + "'");
    }
    problems.push_back(std::move(*r.problem));
  }
  std::sort(problems.begin(), problems.end(), [](const Problem& a, const Problem& b) {
    return std::tie(a.tier, a.id) < std::tie(b.tier, b.id);
  });
  return problems;
}

// ---------------------------------------------------------------------------
// Rendering

std::string render_value(const json& value) {
  switch (value.type()) {
    case json::value_t::null: return "NULL";
    case json::value_t::string: return json(value.get<std::string>()).dump();
    case json::value_t::array: {
      std::string out = "[";
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) out += ", ";
        out += render_value(value[i]);
      }
      return out + "]";
    }
    case json::value_t::object: {
      std::string out = "{";
      bool first = true;
      for (const auto& [k, v] : value.items()) {
        if (!first) out += ", ";
        first = false;
        out += k + ": " + render_value(v);
      }
      return out + "}";
    }
    default: return value.dump();
  }
}

namespace {

std::string render_row(const FunctionSpec& fn, const TestCase& tc) {
  std::string args;
  for (std::size_t i = 0; i < tc.inputs.size(); ++i) {
    if (i) args += ", ";
    args += render_value(tc.inputs[i]);
  }
  return fmt::format("  {}({}) -> {}", fn.name, args, render_value(tc.expected));
}

}  // namespace

std::string render_specification(const Problem& p) {
  std::ostringstream out;
  out << "# " << p.title << "\n";
  out << "Language: " << to_string(p.language) << " | Messages per conversation: " << p.message_limit
      << "\n\n";
  out << p.description << "\n";
  for (const auto& s : p.struct_decls) {
    out << "\n## struct " << s.name << "\n";
    out << "  " << s.fields << "\n";
  }
  for (std::size_t i = 0; i < p.functions.size(); ++i) {
    const auto& fn = p.functions[i];
    out << "\n## Function " << (i + 1) << ": " << fn.name << "\n";
    out << "Signature: " << fn.signature << "\n";
    if (!fn.depends_on.empty()) {
      out << "May use: ";
      for (std::size_t d = 0; d < fn.depends_on.size(); ++d) {
        out << (d ? ", " : "") << fn.depends_on[d];
      }
      out << "\n";
    }
    out << "Examples:\n";
    for (const auto& tc : fn.visible_examples) out << render_row(fn, tc) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<Problem> problems) : problems_(std::move(problems)) {}

const Problem* Corpus::find(std::string_view id) const noexcept {
  auto it = std::find_if(problems_.begin(), problems_.end(),
                         [&](const Problem& p) { return p.id == id; });
  return it == problems_.end() ? nullptr : &*it;
}

const Problem& Corpus::get(std::string_view id) const {
  if (const auto* p = find(id)) return *p;
  throw Error(ErrorCode::UnknownProblem, "unknown problem '" + std::string(id) + "'");
}

}  // namespace promptprog::corpus
