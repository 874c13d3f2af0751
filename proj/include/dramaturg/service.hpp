#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dramaturg/engine.hpp"
#include "dramaturg/lm_gateway.hpp"

namespace httplib {
class Server;
}

namespace dramaturg {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  BackendConfig backend;
  std::filesystem::path prompt_dir;
  std::filesystem::path storage_dir = "sessions";
  std::size_t max_concurrent = 4;
  std::optional<std::string> auth_token;

  void validate() const;
};

/// `key = value` lines (TOML subset: strings, integers, comments, [sections]
/// flattened as section.key). Env overrides apply to the backend afterwards.
ServiceConfig load_service_config(const std::filesystem::path& path);

/// HTTP front end to the engine. Sessions live in `storage_dir` as
/// `<id>.dramaturg.json` and are cached in memory.
class StudioService {
 public:
  explicit StudioService(ServiceConfig config, std::shared_ptr<Backend> backend = nullptr,
                         Clock clock = system_clock());
  ~StudioService();

  StudioService(const StudioService&) = delete;
  StudioService& operator=(const StudioService&) = delete;

  /// Binds and serves until stop(). Returns false when binding fails.
  bool listen();
  /// Binds to an ephemeral port on host and serves in a background thread.
  int start_background();
  void stop();

  Gateway& gateway() noexcept { return *gateway_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::shared_ptr<Gateway> gateway_;
};

}  // namespace dramaturg
