#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptprog/session.hpp"

namespace promptprog::dialogue {

/// Chat backend. Failures throw Error(ProviderFailure) with a reason prefix
/// of "timeout", "http_status", "malformed_reply", "transport" or
/// "fixture_miss".
class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderReply chat(const ProviderRequest& request) = 0;
};

struct ScriptEntry {
  std::string problem_id;
  int turn_index = 0;
  std::optional<std::string> message;  // exact student text; wins over turn_index
  std::string reply_text;
};

std::vector<ScriptEntry> script_entries_from_json(const nlohmann::json& doc);

/// Replays canned replies keyed by (problem_id, message text) or
/// (problem_id, turn_index).
class ScriptedProvider final : public Provider {
 public:
  explicit ScriptedProvider(std::vector<ScriptEntry> entries);
  static std::unique_ptr<ScriptedProvider> from_file(const std::filesystem::path& path);

  ProviderReply chat(const ProviderRequest& request) override;

  /// Every request received, in order.
  [[nodiscard]] std::vector<ProviderRequest> requests() const;

 private:
  std::vector<ScriptEntry> entries_;
  mutable std::mutex mu_;
  std::vector<ProviderRequest> requests_;
};

struct HttpProviderConfig {
  std::string endpoint;  // full URL of an OpenAI-compatible chat completions route
  std::string model;
  double timeout_s = 60.0;
  std::string api_key_env = "PROMPTPROG_API_KEY";
};

/// Body sent to the chat completions endpoint.
nlohmann::json chat_completion_body(const ProviderRequest& request, const std::string& model);

class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  ProviderReply chat(const ProviderRequest& request) override;

 private:
  HttpProviderConfig config_;
  std::string scheme_host_port_;
  std::string path_;
};

}  // namespace promptprog::dialogue
