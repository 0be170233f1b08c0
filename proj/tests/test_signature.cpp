#include <doctest.h>

#include "promptprog/error.hpp"
#include "promptprog/signature.hpp"

using namespace promptprog;
using namespace promptprog::corpus;

TEST_CASE("C signatures parse into marshalling kinds") {
  auto s = parse_signature("int count_negatives(const int arr[], int n)", Language::C);
  CHECK(s.name == "count_negatives");
  CHECK(s.result.kind == ValueKind::Int);
  REQUIRE(s.params.size() == 2);
  CHECK(s.params[0].type.kind == ValueKind::IntArray);
  CHECK(s.params[0].type.is_const);
  CHECK_FALSE(s.params[0].type.is_output_param());
  CHECK(s.params[1].type.kind == ValueKind::Int);
  CHECK(s.output_count() == 1);
}

TEST_CASE("non-const arrays and struct pointers are outputs") {
  auto s = parse_signature("void add_binary(const int a[], const int b[], int n, int result[])", Language::C);
  CHECK(s.result.kind == ValueKind::Void);
  CHECK(s.output_params() == std::vector<std::size_t>{3});
  CHECK(s.output_count() == 1);

  auto pop = parse_signature("char pop(struct Stack *stack)", Language::C);
  CHECK(pop.result.kind == ValueKind::Char);
  CHECK(pop.params[0].type.kind == ValueKind::Struct);
  CHECK(pop.params[0].type.struct_name == "Stack");
  CHECK(pop.params[0].type.by_pointer);
  CHECK(pop.output_count() == 2);

  auto empty = parse_signature("bool is_empty(const struct Stack *stack)", Language::C);
  CHECK(empty.output_count() == 1);
  CHECK(empty.result.kind == ValueKind::Bool);
}

TEST_CASE("pointer-style arrays and strings") {
  auto s = parse_signature("double mean(const double *xs, int n)", Language::C);
  CHECK(s.result.kind == ValueKind::Double);
  CHECK(s.params[0].type.kind == ValueKind::DoubleArray);
  auto str = parse_signature("bool has_digit(const char *s)", Language::C);
  CHECK(str.params[0].type.kind == ValueKind::String);
  auto l = parse_signature("long total(const long xs[], int n)", Language::C);
  CHECK(l.result.kind == ValueKind::Long);
  CHECK(l.params[0].type.kind == ValueKind::LongArray);
}

TEST_CASE("float widens to double; unsupported C types are rejected") {
  CHECK(parse_signature("float f(int x)", Language::C).result.kind == ValueKind::Double);
  try {
    parse_signature("int f(int **grid)", Language::C);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedType);
  }
  CHECK_THROWS_AS(parse_signature("not a signature", Language::C), Error);
}

TEST_CASE("python signatures") {
  auto s = parse_signature("def mean(xs: list[int]) -> float", Language::Python);
  CHECK(s.name == "mean");
  CHECK(s.result.kind == ValueKind::Double);
  CHECK(s.params[0].type.kind == ValueKind::LongArray);
  auto any = parse_signature("def f(x)", Language::Python);
  CHECK(any.params[0].type.kind == ValueKind::Any);
}

TEST_CASE("struct field declarations") {
  auto layout = parse_struct_fields("Stack", "char items[100]; int top;");
  REQUIRE(layout.fields.size() == 2);
  CHECK(layout.fields[0].type.kind == ValueKind::CharArray);
  CHECK(layout.fields[0].type.fixed_size == 100);
  CHECK(layout.find("top") != nullptr);
  CHECK(layout.find("missing") == nullptr);
}

TEST_CASE("literal checks against types") {
  std::vector<StructLayout> structs{parse_struct_fields("Robot", "int x; int y; char direction;")};
  TypeDesc robot{ValueKind::Struct, "Robot", true, false, 0};
  CHECK_FALSE(check_value(robot, {{"x", 1}, {"y", 2}, {"direction", "N"}}, structs, false));
  CHECK(check_value(robot, {{"x", 1}}, structs, false));          // inputs need every field
  CHECK_FALSE(check_value(robot, {{"x", 1}}, structs, true));     // expected may be partial
  CHECK(check_value(robot, {{"z", 1}}, structs, true));           // unknown field
  TypeDesc i{ValueKind::Int};
  CHECK_FALSE(check_value(i, -2147483648LL, structs, false));
  CHECK(check_value(i, 2147483648LL, structs, false));
  CHECK(check_value(i, "1", structs, false));
  TypeDesc c{ValueKind::Char};
  CHECK_FALSE(check_value(c, "a", structs, false));
  CHECK_FALSE(check_value(c, "", structs, false));
  CHECK(check_value(c, "ab", structs, false));
}
