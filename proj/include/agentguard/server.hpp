#pragma once

#include "agentguard/engine.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

namespace agentguard {

struct ServerOptions {
  std::size_t max_clients = 16;  // concurrent /stream connections
  std::uint64_t heartbeat_ms = 15'000;
};

/// Splits `host:port`; throws ConfigError.
std::pair<std::string, int> parse_listen(std::string_view address);

/// HTTP/JSON front end of a Guard under /api/v1/.
class ApiServer {
 public:
  ApiServer(Guard& guard, ServerOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds without serving yet; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves on a background thread.
  void start();
  /// Serves on the calling thread until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace agentguard
