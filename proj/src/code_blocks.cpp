#include "promptprog/code_blocks.hpp"

#include <algorithm>

namespace promptprog::runner {

nlohmann::json to_json(const MessageRef& ref) {
  return {{"conversation", ref.conversation}, {"position", ref.position}, {"block", ref.block}};
}

MessageRef message_ref_from_json(const nlohmann::json& doc) {
  return MessageRef{doc.at("conversation").get<int>(), doc.at("position").get<int>(),
                    doc.at("block").get<int>()};
}

namespace {

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Number of leading backticks when the line opens or closes a fence, else 0.
std::size_t fence_length(std::string_view line) {
  auto body = line.substr(std::min(line.find_first_not_of(" \t"), line.size()));
  std::size_t n = 0;
  while (n < body.size() && body[n] == '`') ++n;
  return n >= 3 ? n : 0;
}

}  // namespace

std::vector<CodeBlock> extract_code_blocks(std::string_view content) {
  std::vector<CodeBlock> blocks;
  bool in_block = false;
  std::size_t open_len = 0;
  CodeBlock current;
  std::string body;

  auto finish = [&] {
    if (!trim(body).empty()) {
      current.text = body;
      current.ref.block = static_cast<int>(blocks.size());
      blocks.push_back(current);
    }
    current = CodeBlock{};
    body.clear();
  };

  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto nl = content.find('\n', pos);
    auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    const auto fence = fence_length(line);
    if (!in_block) {
      if (fence) {
        in_block = true;
        open_len = fence;
        auto info = trim(trim(line).substr(fence));
        if (!info.empty()) {
          current.language_hint = std::string(info.substr(0, info.find_first_of(" \t")));
        }
      }
    } else if (fence >= open_len && trim(line).size() == fence) {
      in_block = false;
      finish();
    } else {
      body.append(line);
      if (nl != std::string_view::npos) body.push_back('\n');
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (in_block) finish();
  return blocks;
}

}  // namespace promptprog::runner
