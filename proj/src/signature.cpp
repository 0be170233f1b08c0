#include "promptprog/signature.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <span>

#include "promptprog/error.hpp"

namespace promptprog::corpus {

std::string_view to_string(Language lang) noexcept {
  return lang == Language::C ? "C" : "Python";
}

std::optional<Language> parse_language(std::string_view text) noexcept {
  if (text == "C") return Language::C;
  if (text == "Python") return Language::Python;
  return std::nullopt;
}

std::size_t Signature::output_count() const noexcept {
  std::size_t n = result.kind == ValueKind::Void ? 0 : 1;
  for (const auto& p : params) {
    if (p.type.is_output_param()) ++n;
  }
  return n;
}

std::vector<std::size_t> Signature::output_params() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].type.is_output_param()) out.push_back(i);
  }
  return out;
}

const StructField* StructLayout::find(std::string_view field) const noexcept {
  auto it = std::find_if(fields.begin(), fields.end(),
                         [&](const StructField& f) { return f.name == field; });
  return it == fields.end() ? nullptr : &*it;
}

namespace {

[[noreturn]] void malformed(std::string_view text, std::string_view why) {
  throw Error(ErrorCode::MalformedDefinition,
              "cannot parse '" + std::string(text) + "': " + std::string(why));
}

[[noreturn]] void unsupported(std::string_view text, std::string_view why) {
  throw Error(ErrorCode::UnsupportedType,
              "unsupported type in '" + std::string(text) + "': " + std::string(why));
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<std::string> tokenize_c(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_ident_start(c) || std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (std::string_view("*[](),;").find(c) != std::string_view::npos) {
      tokens.emplace_back(1, c);
      ++i;
    } else {
      malformed(text, std::string("unexpected character '") + c + "'");
    }
  }
  return tokens;
}

const std::vector<std::string_view>& type_words() {
  static const std::vector<std::string_view> words = {
      "const", "int", "long", "short", "signed", "unsigned", "char",
      "bool", "_Bool", "double", "float", "void", "struct"};
  return words;
}

bool is_type_word(std::string_view tok) {
  const auto& w = type_words();
  return std::find(w.begin(), w.end(), tok) != w.end();
}

struct Declarator {
  TypeDesc type;
  std::string name;
};

// Parses "<type words> <stars> name <[N]>" into a marshalling category.
// `allow_unnamed` accepts abstract declarators such as "const int *".
Declarator parse_declarator(std::span<const std::string> toks, std::string_view context,
                            bool is_field, bool allow_unnamed) {
  Declarator d;
  std::string base;
  int stars = 0;
  bool array = false;
  std::size_t fixed = 0;
  bool is_const = false;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t == "const") {
      is_const = true;
    } else if (t == "struct") {
      if (i + 1 >= toks.size()) malformed(context, "struct without a name");
      d.type.struct_name = toks[++i];
      base = "struct";
    } else if (t == "*") {
      ++stars;
    } else if (t == "[") {
      array = true;
      if (i + 1 < toks.size() && toks[i + 1] != "]") {
        const auto& extent = toks[++i];
        if (!std::all_of(extent.begin(), extent.end(),
                         [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
          unsupported(context, "array extent must be a literal");
        }
        fixed = std::stoul(extent);
      }
      if (i + 1 >= toks.size() || toks[i + 1] != "]") malformed(context, "unclosed '['");
      ++i;
    } else if (is_type_word(t)) {
      if (t == "long" && base == "long") continue;
      if (t == "int" && (base == "long" || base == "short")) continue;
      if (t == "unsigned" || t == "signed") {
        if (base.empty()) base = "int";
        continue;
      }
      if (base == "int" && (t == "long" || t == "short" || t == "char")) {
        base = t;
        continue;
      }
      if (!base.empty()) malformed(context, "conflicting type specifiers");
      base = t;
    } else {
      if (!d.name.empty()) malformed(context, "unexpected token '" + t + "'");
      d.name = t;
    }
  }
  if (base.empty()) malformed(context, "missing type");
  if (d.name.empty() && !allow_unnamed) malformed(context, "missing name");

  const int depth = stars + (array ? 1 : 0);
  if (depth > 1) unsupported(context, "multiple indirection");
  d.type.is_const = is_const;
  if (base == "struct") {
    if (array) unsupported(context, "arrays of structs");
    d.type.kind = ValueKind::Struct;
    d.type.by_pointer = depth == 1;
    if (is_field && d.type.by_pointer) unsupported(context, "pointer fields");
    return d;
  }
  d.type.struct_name.clear();
  if (base == "void") {
    if (depth != 0) unsupported(context, "void pointers");
    d.type.kind = ValueKind::Void;
    return d;
  }
  ValueKind scalar = ValueKind::Int;
  if (base == "int" || base == "short") scalar = ValueKind::Int;
  else if (base == "long") scalar = ValueKind::Long;
  else if (base == "char") scalar = ValueKind::Char;
  else if (base == "bool" || base == "_Bool") scalar = ValueKind::Bool;
  else if (base == "double" || base == "float") scalar = ValueKind::Double;

  if (depth == 0) {
    d.type.kind = scalar;
    return d;
  }
  if (is_field) {
    if (stars > 0) unsupported(context, "pointer fields");
    if (fixed == 0) unsupported(context, "struct array fields need an extent");
    d.type.fixed_size = fixed;
  }
  switch (scalar) {
    case ValueKind::Char:
      d.type.kind = is_field ? ValueKind::CharArray : ValueKind::String;
      // strings are never compared as outputs
      if (!is_field) d.type.is_const = true;
      break;
    case ValueKind::Int: d.type.kind = ValueKind::IntArray; break;
    case ValueKind::Long: d.type.kind = ValueKind::LongArray; break;
    case ValueKind::Double: d.type.kind = ValueKind::DoubleArray; break;
    default: unsupported(context, "arrays of this element type");
  }
  return d;
}

Signature parse_c_signature(std::string_view text) {
  auto toks = tokenize_c(text);
  if (!toks.empty() && toks.back() == ";") toks.pop_back();
  auto open = std::find(toks.begin(), toks.end(), "(");
  if (open == toks.end() || toks.back() != ")") malformed(text, "expected a function prototype");
  const std::size_t open_idx = static_cast<std::size_t>(open - toks.begin());
  if (open_idx < 2) malformed(text, "missing return type or name");

  Signature sig;
  sig.name = toks[open_idx - 1];
  if (is_type_word(sig.name) || !is_ident_start(sig.name[0])) malformed(text, "missing function name");
  auto ret = parse_declarator(std::span(toks).subspan(0, open_idx - 1), text, false, true);
  sig.result = ret.type;
  if (sig.result.kind == ValueKind::Struct && sig.result.by_pointer) {
    unsupported(text, "returning struct pointers");
  }
  if (sig.result.is_array()) unsupported(text, "returning arrays");

  std::vector<std::string> current;
  auto flush = [&](bool last) {
    if (current.empty()) {
      if (last && sig.params.empty()) return;
      malformed(text, "empty parameter");
    }
    if (current.size() == 1 && current[0] == "void" && sig.params.empty() && last) {
      current.clear();
      return;
    }
    auto d = parse_declarator(current, text, false, false);
    if (d.type.kind == ValueKind::Void) unsupported(text, "void parameter");
    sig.params.push_back(Param{d.type, d.name});
    current.clear();
  };
  for (std::size_t i = open_idx + 1; i + 1 < toks.size(); ++i) {
    if (toks[i] == ",") {
      flush(false);
    } else if (toks[i] == "(" || toks[i] == ")") {
      unsupported(text, "function pointers");
    } else {
      current.push_back(toks[i]);
    }
  }
  flush(true);
  return sig;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

TypeDesc python_annotation(std::string_view ann) {
  std::string a;
  for (char c : ann) {
    if (!std::isspace(static_cast<unsigned char>(c))) a.push_back(c);
  }
  TypeDesc t;
  t.is_const = true;
  if (a.empty()) t.kind = ValueKind::Any;
  else if (a == "int") t.kind = ValueKind::Int;
  else if (a == "float") t.kind = ValueKind::Double;
  else if (a == "str") t.kind = ValueKind::String;
  else if (a == "bool") t.kind = ValueKind::Bool;
  else if (a == "None") t.kind = ValueKind::Void;
  else if (a == "list[int]" || a == "List[int]") t.kind = ValueKind::LongArray;
  else if (a == "list[float]" || a == "List[float]") t.kind = ValueKind::DoubleArray;
  else t.kind = ValueKind::Any;
  return t;
}

Signature parse_python_signature(std::string_view text) {
  std::string s = trim(text);
  if (s.rfind("def ", 0) != 0) malformed(text, "expected 'def name(...)'");
  if (!s.empty() && s.back() == ':') s.pop_back();
  const auto open = s.find('(');
  if (open == std::string::npos) malformed(text, "missing '('");
  int depth = 0;
  std::size_t close = std::string::npos;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '(' || s[i] == '[') ++depth;
    if (s[i] == ')' || s[i] == ']') {
      if (--depth == 0 && s[i] == ')') {
        close = i;
        break;
      }
    }
  }
  if (close == std::string::npos) malformed(text, "missing ')'");

  Signature sig;
  sig.name = trim(std::string_view(s).substr(4, open - 4));
  if (sig.name.empty() || !is_ident_start(sig.name[0]) ||
      !std::all_of(sig.name.begin(), sig.name.end(), is_ident_char)) {
    malformed(text, "bad function name");
  }
  std::string rest = trim(std::string_view(s).substr(close + 1));
  if (rest.empty()) {
    sig.result.kind = ValueKind::Any;
  } else if (rest.rfind("->", 0) == 0) {
    sig.result = python_annotation(rest.substr(2));
  } else {
    malformed(text, "unexpected text after parameters");
  }
  sig.result.is_const = false;

  std::string_view params = std::string_view(s).substr(open + 1, close - open - 1);
  std::vector<std::string> pieces;
  std::string cur;
  depth = 0;
  for (char c : params) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (c == ',' && depth == 0) {
      pieces.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !pieces.empty()) pieces.push_back(cur);
  for (const auto& piece : pieces) {
    std::string p = trim(piece);
    if (p.empty()) malformed(text, "empty parameter");
    if (p.find('=') != std::string::npos) unsupported(text, "default arguments");
    if (p[0] == '*') unsupported(text, "variadic parameters");
    Param param;
    const auto colon = p.find(':');
    param.name = trim(p.substr(0, colon));
    param.type = python_annotation(colon == std::string::npos ? "" : p.substr(colon + 1));
    if (param.type.kind == ValueKind::Void) unsupported(text, "None-typed parameter");
    sig.params.push_back(std::move(param));
  }
  return sig;
}

bool fits_int(const nlohmann::json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>() <= std::numeric_limits<int>::max();
  if (!v.is_number_integer()) return false;
  auto x = v.get<std::int64_t>();
  return x >= std::numeric_limits<int>::min() && x <= std::numeric_limits<int>::max();
}

bool fits_long(const nlohmann::json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>() <= std::numeric_limits<std::int64_t>::max();
  return v.is_number_integer();
}

}  // namespace

Signature parse_signature(std::string_view text, Language lang) {
  return lang == Language::C ? parse_c_signature(text) : parse_python_signature(text);
}

StructLayout parse_struct_fields(std::string name, std::string_view fields) {
  StructLayout layout{std::move(name), {}};
  auto toks = tokenize_c(fields);
  std::vector<std::string> current;
  for (const auto& t : toks) {
    if (t == ";") {
      if (current.empty()) continue;
      auto d = parse_declarator(current, fields, true, false);
      if (d.type.kind == ValueKind::Void) unsupported(fields, "void field");
      if (d.type.kind == ValueKind::Struct) unsupported(fields, "nested struct fields");
      if (layout.find(d.name)) malformed(fields, "duplicate field '" + d.name + "'");
      layout.fields.push_back(StructField{d.name, d.type});
      current.clear();
    } else {
      current.push_back(t);
    }
  }
  if (!current.empty()) malformed(fields, "field declaration without ';'");
  if (layout.fields.empty()) malformed(fields, "struct has no fields");
  return layout;
}

std::optional<std::string> check_value(const TypeDesc& type, const nlohmann::json& value,
                                       const std::vector<StructLayout>& structs,
                                       bool as_expected) {
  auto each = [&](auto pred, std::string_view what) -> std::optional<std::string> {
    if (!value.is_array()) return "expected an array of " + std::string(what);
    if (type.fixed_size != 0 && value.size() > type.fixed_size) {
      return "array longer than field extent";
    }
    for (const auto& el : value) {
      if (!pred(el)) return "array element is not " + std::string(what);
    }
    return std::nullopt;
  };
  switch (type.kind) {
    case ValueKind::Void:
      return "void has no values";
    case ValueKind::Any:
      return std::nullopt;
    case ValueKind::Int:
      if (!fits_int(value)) return "expected a 32-bit integer";
      return std::nullopt;
    case ValueKind::Long:
      if (!fits_long(value)) return "expected an integer";
      return std::nullopt;
    case ValueKind::Char:
      if (!value.is_string() || value.get_ref<const std::string&>().size() > 1) {
        return "expected a one-character string";
      }
      return std::nullopt;
    case ValueKind::Bool:
      if (!value.is_boolean()) return "expected a boolean";
      return std::nullopt;
    case ValueKind::Double:
      if (!value.is_number()) return "expected a number";
      return std::nullopt;
    case ValueKind::String:
      if (!value.is_string() && !value.is_null()) return "expected a string";
      return std::nullopt;
    case ValueKind::IntArray:
      return each(fits_int, "a 32-bit integer");
    case ValueKind::LongArray:
      return each(fits_long, "an integer");
    case ValueKind::DoubleArray:
      return each([](const nlohmann::json& v) { return v.is_number(); }, "a number");
    case ValueKind::CharArray:
      if (!value.is_string()) return "expected a string";
      if (value.get_ref<const std::string&>().size() > type.fixed_size) {
        return "string longer than field extent";
      }
      return std::nullopt;
    case ValueKind::Struct: {
      auto it = std::find_if(structs.begin(), structs.end(),
                             [&](const StructLayout& s) { return s.name == type.struct_name; });
      if (it == structs.end()) return "unknown struct '" + type.struct_name + "'";
      if (!value.is_object()) return "expected a struct literal object";
      if (as_expected && value.empty()) return "expected struct literal names no fields";
      if (!as_expected) {
        for (const auto& f : it->fields) {
          if (!value.contains(f.name)) return "struct input missing field '" + f.name + "'";
        }
      }
      for (const auto& [key, field_value] : value.items()) {
        const auto* field = it->find(key);
        if (!field) return "struct '" + it->name + "' has no field '" + key + "'";
        if (auto why = check_value(field->type, field_value, structs, as_expected)) {
          return "field '" + key + "': " + *why;
        }
      }
      return std::nullopt;
    }
  }
  return "unhandled type";
}

}  // namespace promptprog::corpus
