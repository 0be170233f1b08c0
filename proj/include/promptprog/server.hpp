#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptprog/error.hpp"
#include "promptprog/platform.hpp"

namespace httplib {
class Server;
}

namespace promptprog::service {

/// HTTP status used for each error code.
int http_status(ErrorCode code) noexcept;

/// {"error": {"code": "...", "message": "..."}}
nlohmann::json error_body(ErrorCode code, const std::string& message);

/// Public view of a problem: rendered specification and visible examples.
nlohmann::json problem_view(const corpus::Problem& p);
nlohmann::json problem_listing(const corpus::Problem& p);

struct ServerOptions {
  std::vector<int> bucket_edges{1, 2, 3, 4, 5};
  std::optional<std::filesystem::path> ui_static_path;
};

class HttpServer {
 public:
  HttpServer(Platform& platform, ServerOptions options = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Blocks until stop(). Returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds `port` (0 picks an ephemeral one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves on the socket from bind(); blocks until stop().
  bool serve_bound();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  Platform& platform_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace promptprog::service
