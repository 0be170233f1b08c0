#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptprog/driver.hpp"
#include "promptprog/grader.hpp"
#include "promptprog/platform.hpp"
#include "promptprog/sandbox.hpp"

namespace promptprog::service {

struct ProviderSettings {
  std::string kind = "scripted";  // "scripted" | "http"
  std::string endpoint;
  std::string model;
  std::filesystem::path fixture_path;
  double timeout_s = 60.0;
};

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::filesystem::path corpus_path;
  ProviderSettings provider;
  runner::SandboxPolicy sandbox;
  runner::Toolchain toolchain;
  runner::GradingMode grading_mode = runner::GradingMode::SingleDriver;
  std::filesystem::path log_path = "events.jsonl";
  std::vector<int> bucket_edges{1, 2, 3, 4, 5};
  std::optional<std::filesystem::path> ui_static_path;
  int workers = 2;
  bool shadow_async = true;

  [[nodiscard]] std::string host() const;
  [[nodiscard]] int port() const;
};

/// Strict parse; unknown keys throw Error(InvalidConfig) naming the key.
/// Relative paths resolve against `base_dir`.
ServiceConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ServiceConfig load_config(const std::filesystem::path& path);

/// Loads the corpus, checks toolchains, opens the log and wires a Platform.
std::unique_ptr<Platform> build_platform(const ServiceConfig& config, PlatformOptions options = {});

/// Provider described by the settings.
std::shared_ptr<dialogue::Provider> make_provider(const ProviderSettings& settings);

}  // namespace promptprog::service
