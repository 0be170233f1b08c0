#include "promptprog/config.hpp"

#include <fstream>

#include <fmt/format.h>

#include "promptprog/error.hpp"

namespace promptprog::service {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

std::filesystem::path resolve(const std::filesystem::path& base, const json& v, const std::string& key) {
  if (!v.is_string()) invalid(key + " must be a string");
  std::filesystem::path p = v.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

template <typename T>
T typed(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    invalid("wrong type for '" + key + "'");
  }
}

ProviderSettings provider_from_json(const json& doc, const std::filesystem::path& base) {
  if (!doc.is_object()) invalid("provider must be an object");
  ProviderSettings p;
  for (const auto& [key, value] : doc.items()) {
    const auto name = "provider." + key;
    if (key == "kind") {
      p.kind = typed<std::string>(value, name);
    } else if (key == "endpoint") {
      p.endpoint = typed<std::string>(value, name);
    } else if (key == "model") {
      p.model = typed<std::string>(value, name);
    } else if (key == "fixture_path") {
      p.fixture_path = resolve(base, value, name);
    } else if (key == "timeout_s") {
      p.timeout_s = typed<double>(value, name);
    } else {
      invalid("unknown key '" + name + "'");
    }
  }
  if (p.kind == "scripted") {
    if (p.fixture_path.empty()) invalid("provider.fixture_path is required for the scripted provider");
  } else if (p.kind == "http") {
    if (p.endpoint.empty() || p.model.empty()) invalid("provider.endpoint and provider.model are required");
  } else {
    invalid("provider.kind must be 'scripted' or 'http'");
  }
  if (p.timeout_s <= 0) invalid("provider.timeout_s must be positive");
  return p;
}

}  // namespace

std::string ServiceConfig::host() const {
  const auto colon = listen.rfind(':');
  return colon == std::string::npos ? listen : listen.substr(0, colon);
}

int ServiceConfig::port() const {
  const auto colon = listen.rfind(':');
  return colon == std::string::npos ? 8080 : std::stoi(listen.substr(colon + 1));
}

ServiceConfig config_from_json(const json& doc, const std::filesystem::path& base) {
  if (!doc.is_object()) invalid("config must be an object");
  ServiceConfig c;
  bool has_corpus = false;
  for (const auto& [key, value] : doc.items()) {
    if (key == "listen") {
      c.listen = typed<std::string>(value, key);
      const auto colon = c.listen.rfind(':');
      if (colon == std::string::npos) invalid("listen must be host:port");
      const auto port = c.listen.substr(colon + 1);
      if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || std::stoi(port) > 65535) {
        invalid("listen port is invalid");
      }
    } else if (key == "corpus_path") {
      c.corpus_path = resolve(base, value, key);
      has_corpus = true;
    } else if (key == "provider") {
      c.provider = provider_from_json(value, base);
    } else if (key == "sandbox") {
      try {
        c.sandbox = runner::sandbox_policy_from_json(value);
      } catch (const Error& e) {
        invalid(std::string("sandbox: ") + e.what());
      }
    } else if (key == "toolchain") {
      c.toolchain = runner::toolchain_from_json(value);
    } else if (key == "grading_mode") {
      auto mode = runner::parse_grading_mode(typed<std::string>(value, key));
      if (!mode) invalid("grading_mode must be 'single_driver' or 'modular'");
      c.grading_mode = *mode;
    } else if (key == "log_path") {
      c.log_path = resolve(base, value, key);
    } else if (key == "analytics") {
      if (!value.is_object()) invalid("analytics must be an object");
      for (const auto& [k, v] : value.items()) {
        if (k != "bucket_edges") invalid("unknown key 'analytics." + k + "'");
        c.bucket_edges = typed<std::vector<int>>(v, "analytics.bucket_edges");
      }
    } else if (key == "ui_static_path") {
      c.ui_static_path = resolve(base, value, key);
    } else if (key == "workers") {
      c.workers = typed<int>(value, key);
      if (c.workers < 1) invalid("workers must be at least 1");
    } else if (key == "shadow_async") {
      c.shadow_async = typed<bool>(value, key);
    } else {
      invalid("unknown key '" + key + "'");
    }
  }
  if (!has_corpus) invalid("corpus_path is required");
  if (!doc.contains("provider")) invalid("provider is required");
  if (c.log_path.is_relative()) c.log_path = base / c.log_path;
  return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    invalid(fmt::format("{}: {}", path.string(), e.what()));
  }
  return config_from_json(doc, std::filesystem::absolute(path).parent_path());
}

std::shared_ptr<dialogue::Provider> make_provider(const ProviderSettings& s) {
  if (s.kind == "scripted") return dialogue::ScriptedProvider::from_file(s.fixture_path);
  return std::make_shared<dialogue::HttpProvider>(dialogue::HttpProviderConfig{s.endpoint, s.model, s.timeout_s});
}

std::unique_ptr<Platform> build_platform(const ServiceConfig& config, PlatformOptions options) {
  if (!std::filesystem::is_directory(config.corpus_path)) {
    throw Error(ErrorCode::MalformedDefinition, "corpus directory not found: " + config.corpus_path.string());
  }
  corpus::Corpus corpus(corpus::load_corpus(config.corpus_path));
  bool need_c = false, need_py = false;
  for (const auto& p : corpus.problems()) {
    (p.language == corpus::Language::C ? need_c : need_py) = true;
  }
  if (need_c) runner::check_toolchain(config.toolchain, corpus::Language::C);
  if (need_py) runner::check_toolchain(config.toolchain, corpus::Language::Python);
  if (config.sandbox.temp_dir_only && !runner::landlock_available()) {
    throw Error(ErrorCode::SandboxSetupFailure, "sandbox.filesystem is temp_dir_only but Landlock is unavailable");
  }
  auto log = std::make_shared<events::EventLog>(config.log_path);
  auto grader = std::make_shared<runner::SandboxGrader>(config.sandbox, config.toolchain, config.grading_mode);
  options.shadow_async = config.shadow_async;
  options.workers = config.workers;
  return std::make_unique<Platform>(std::move(corpus), std::move(log), make_provider(config.provider),
                                    std::move(grader), std::move(options));
}

}  // namespace promptprog::service
