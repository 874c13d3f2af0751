#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "dramaturg/prompt_forge.hpp"
#include "dramaturg/sampling.hpp"

namespace dramaturg {

struct Completion {
  std::string text;
  std::string backend_id;
  std::optional<int> token_count;
};

/// Text up to (excluding) the earliest occurrence of any marker.
std::string truncate_at_marker(std::string_view text, std::span<const std::string> markers);

/// Conservative token estimate used when a backend has no tokenizer: ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view text);

class Backend {
 public:
  virtual ~Backend() = default;

  virtual Completion complete(const Prompt& prompt, const SamplingConfig& config) = 0;
  virtual std::string id() const = 0;

  /// Declared context window in tokens, if the backend advertises one.
  virtual std::optional<std::size_t> context_window() const { return std::nullopt; }
  virtual std::size_t count_tokens(std::string_view text) const { return estimate_tokens(text); }
};

// ---------------------------------------------------------------------------
// Mock backend

/// Scripted outputs keyed by (prompt digest, seed); a missing seed matches any.
struct MockEntry {
  std::string prompt_digest;
  std::optional<std::uint64_t> seed;
  std::string text;
};

struct MockOptions {
  std::optional<std::size_t> context_window;
  /// Artificial per-call delay, for concurrency tests.
  std::chrono::milliseconds latency{0};
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(std::vector<MockEntry> entries = {}, MockOptions options = {});

  Completion complete(const Prompt& prompt, const SamplingConfig& config) override;
  std::string id() const override { return "mock"; }
  std::optional<std::size_t> context_window() const override { return options_.context_window; }

  void add(MockEntry entry);
  void script(const Prompt& prompt, std::optional<std::uint64_t> seed, std::string text);

  /// Prompts (by digest) for which complete() throws BackendUnavailable.
  void fail_on(std::string prompt_digest);

  std::size_t calls() const noexcept { return calls_.load(); }
  std::size_t peak_in_flight() const noexcept { return peak_.load(); }
  /// (digest, seed) of every call, in arrival order.
  std::vector<std::pair<std::string, std::uint64_t>> call_log() const;

 private:
  MockOptions options_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::optional<std::uint64_t>>, std::string> entries_;
  std::vector<std::string> failing_;
  std::vector<std::pair<std::string, std::uint64_t>> log_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

/// Deterministic, family-shaped filler text for unscripted mock queries.
std::string mock_fallback_text(PromptFamily family, std::string_view prompt_digest, std::uint64_t seed);

/// Reads `{"entries":[{"prompt_sha256"|"prompt": ..., "seed": n?, "text": ...}]}`.
std::vector<MockEntry> load_mock_script(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Remote backend

struct HttpResponse {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string error;
};

/// Sends a JSON body to the configured endpoint.
using HttpTransport = std::function<HttpResponse(const std::string& body)>;

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

struct HttpBackendOptions {
  std::string url;  // e.g. http://localhost:8080/v1/completions
  std::string api_key;
  std::optional<std::size_t> context_window;
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

/// Minimal completion protocol: POST {prompt, max_tokens, temperature, top_p,
/// seed} -> {text}. Retries transport failures and 5xx/429 with exponential
/// backoff; other 4xx fail immediately with BackendRejected.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options, HttpTransport transport = {});

  Completion complete(const Prompt& prompt, const SamplingConfig& config) override;
  std::string id() const override { return "http:" + options_.url; }
  std::optional<std::size_t> context_window() const override { return options_.context_window; }

  static std::string request_body(const Prompt& prompt, const SamplingConfig& config);

 private:
  HttpBackendOptions options_;
  HttpTransport transport_;
};

HttpTransport make_httplib_transport(const std::string& url, const std::string& api_key,
                                     std::chrono::seconds timeout);

// ---------------------------------------------------------------------------

struct BackendConfig {
  std::string kind = "mock";  // "mock" | "http"
  std::filesystem::path mock_script;
  std::string url;
  std::string api_key;
  std::optional<std::size_t> context_window;
};

/// Applies LMGW_BACKEND_URL / LMGW_API_KEY on top of `config`.
BackendConfig with_env_overrides(BackendConfig config);
std::shared_ptr<Backend> make_backend(const BackendConfig& config);

/// Front door to a backend: validates requests, enforces the context window
/// and bounds concurrent in-flight calls.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, std::size_t max_in_flight = 4);

  Completion complete(const Prompt& prompt, const SamplingConfig& config);

  /// Like complete(), but throws Busy instead of waiting for a free slot.
  Completion try_complete(const Prompt& prompt, const SamplingConfig& config);

  std::size_t in_flight() const;
  std::size_t max_in_flight() const noexcept { return max_in_flight_; }
  Backend& backend() noexcept { return *backend_; }

 private:
  void check(const Prompt& prompt, const SamplingConfig& config) const;
  Completion call(const Prompt& prompt, const SamplingConfig& config);

  std::shared_ptr<Backend> backend_;
  std::size_t max_in_flight_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
};

}  // namespace dramaturg
