#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace promptprog::corpus {

enum class Language { C, Python };

std::string_view to_string(Language lang) noexcept;
std::optional<Language> parse_language(std::string_view text) noexcept;

/// Marshalling category of a parameter, return value, or struct field.
enum class ValueKind {
  Void,
  Int,
  Long,
  Char,
  Bool,
  Double,
  String,
  IntArray,
  LongArray,
  DoubleArray,
  CharArray,  // fixed-size char buffer inside a struct, written as a JSON string
  Struct,
  Any,        // unannotated Python value
};

struct TypeDesc {
  ValueKind kind = ValueKind::Void;
  std::string struct_name;  // for ValueKind::Struct
  bool by_pointer = false;  // struct passed through a pointer
  bool is_const = false;
  std::size_t fixed_size = 0;  // array extent for struct fields

  [[nodiscard]] bool is_array() const noexcept {
    return kind == ValueKind::IntArray || kind == ValueKind::LongArray ||
           kind == ValueKind::DoubleArray || kind == ValueKind::CharArray;
  }
  /// Non-const arrays and struct pointers are compared after the call.
  [[nodiscard]] bool is_output_param() const noexcept {
    return !is_const && (is_array() || (kind == ValueKind::Struct && by_pointer));
  }
  [[nodiscard]] bool holds_floating() const noexcept {
    return kind == ValueKind::Double || kind == ValueKind::DoubleArray;
  }

  bool operator==(const TypeDesc&) const = default;
};

struct Param {
  TypeDesc type;
  std::string name;

  bool operator==(const Param&) const = default;
};

struct Signature {
  std::string name;
  TypeDesc result;
  std::vector<Param> params;

  /// Number of values a test's `expected` must supply.
  [[nodiscard]] std::size_t output_count() const noexcept;
  /// Indices of output params, in parameter order.
  [[nodiscard]] std::vector<std::size_t> output_params() const;

  bool operator==(const Signature&) const = default;
};

struct StructField {
  std::string name;
  TypeDesc type;

  bool operator==(const StructField&) const = default;
};

struct StructLayout {
  std::string name;
  std::vector<StructField> fields;

  [[nodiscard]] const StructField* find(std::string_view field) const noexcept;
};

/// Throws Error(UnsupportedType) or Error(MalformedDefinition) on input the
/// driver generator cannot marshal.
Signature parse_signature(std::string_view text, Language lang);

/// Parses C member declarations such as `int x; char name[16];`.
StructLayout parse_struct_fields(std::string name, std::string_view fields);

/// Checks that `value` is a well-typed literal for `type`. Returns a reason
/// string on mismatch. `structs` resolves struct names.
std::optional<std::string> check_value(const TypeDesc& type, const nlohmann::json& value,
                                       const std::vector<StructLayout>& structs,
                                       bool as_expected);

}  // namespace promptprog::corpus
