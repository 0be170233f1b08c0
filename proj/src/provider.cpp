#include "promptprog/provider.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>

#include "promptprog/error.hpp"

namespace promptprog::dialogue {

using nlohmann::json;

std::vector<ScriptEntry> script_entries_from_json(const json& doc) {
  const json& list = doc.is_object() && doc.contains("entries") ? doc["entries"] : doc;
  if (!list.is_array()) throw Error(ErrorCode::InvalidConfig, "script fixture must be a list of entries");
  std::vector<ScriptEntry> out;
  for (const auto& e : list) {
    try {
      ScriptEntry s;
      s.problem_id = e.at("problem_id").get<std::string>();
      s.turn_index = e.value("turn_index", 0);
      if (e.contains("message")) s.message = e["message"].get<std::string>();
      s.reply_text = e.at("reply_text").get<std::string>();
      if (!s.message && s.turn_index < 1) {
        throw Error(ErrorCode::InvalidConfig, "fixture entry needs turn_index >= 1 or message");
      }
      out.push_back(std::move(s));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::InvalidConfig, std::string("bad fixture entry: ") + ex.what());
    }
  }
  return out;
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptEntry> entries) : entries_(std::move(entries)) {}

std::unique_ptr<ScriptedProvider> ScriptedProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read provider fixture " + path.string());
  try {
    return std::make_unique<ScriptedProvider>(script_entries_from_json(json::parse(in)));
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::InvalidConfig, fmt::format("{}: {}", path.string(), ex.what()));
  }
}

ProviderReply ScriptedProvider::chat(const ProviderRequest& request) {
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
  }
  const std::string last = request.history.empty() ? "" : request.history.back().content;
  const ScriptEntry* by_turn = nullptr;
  for (const auto& e : entries_) {
    if (e.problem_id != request.problem_id) continue;
    if (e.message) {
      if (*e.message == last) return {e.reply_text, "scripted"};
    } else if (!by_turn && e.turn_index == request.turn_index) {
      by_turn = &e;
    }
  }
  if (by_turn) return {by_turn->reply_text, "scripted"};
  throw Error(ErrorCode::ProviderFailure,
              fmt::format("fixture_miss: no reply for problem '{}' turn {}", request.problem_id, request.turn_index));
}

std::vector<ProviderRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

json chat_completion_body(const ProviderRequest& request, const std::string& model) {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  for (const auto& t : request.history) {
    messages.push_back({{"role", t.role == Role::Student ? "user" : "assistant"}, {"content", t.content}});
  }
  return {{"model", model}, {"messages", messages}};
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) {
    throw Error(ErrorCode::InvalidConfig, "provider endpoint must be an http(s) URL: " + config_.endpoint);
  }
  scheme_host_port_ = m[1];
  path_ = m[2].matched ? m[2].str() : "/";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme_host_port_.rfind("https", 0) == 0) {
    throw Error(ErrorCode::InvalidConfig, "https endpoints need a build with OpenSSL");
  }
#endif
  if (config_.timeout_s <= 0) throw Error(ErrorCode::InvalidConfig, "provider timeout must be positive");
}

ProviderReply HttpProvider::chat(const ProviderRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = static_cast<time_t>(config_.timeout_s);
  const auto usecs = static_cast<time_t>((config_.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(path_, headers, chat_completion_body(request, config_.model).dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
    throw Error(ErrorCode::ProviderFailure,
                fmt::format("{}: {}", timeout ? "timeout" : "transport", httplib::to_string(err)));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::ProviderFailure, fmt::format("http_status: {}", res->status));
  }
  try {
    auto doc = json::parse(res->body);
    ProviderReply reply;
    reply.content = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    json meta{{"model", doc.value("model", config_.model)}};
    if (doc.contains("usage")) meta["usage"] = doc["usage"];
    reply.provider_meta = meta.dump();
    return reply;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::ProviderFailure, std::string("malformed_reply: ") + ex.what());
  }
}

}  // namespace promptprog::dialogue
