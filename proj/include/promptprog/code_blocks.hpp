#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace promptprog::runner {

/// Locates a code block: conversation index (0-based), assistant message
/// position within that conversation (1-based), block index in the message
/// (0-based).
struct MessageRef {
  int conversation = 0;
  int position = 0;
  int block = 0;

  auto operator<=>(const MessageRef&) const = default;
};

nlohmann::json to_json(const MessageRef& ref);
MessageRef message_ref_from_json(const nlohmann::json& doc);

struct CodeBlock {
  std::string text;
  std::optional<std::string> language_hint;
  MessageRef ref;

  bool operator==(const CodeBlock&) const = default;
};

/// All triple-backtick fenced blocks in document order. An unterminated final
/// fence runs to the end of the content. Blank blocks are skipped.
std::vector<CodeBlock> extract_code_blocks(std::string_view assistant_content);

}  // namespace promptprog::runner
