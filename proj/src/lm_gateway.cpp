#include "dramaturg/lm_gateway.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <random>

#include "dramaturg/error.hpp"
#include "dramaturg/story_model.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

void SamplingConfig::validate() const {
  if (!(nucleus_mass > 0.0 && nucleus_mass <= 1.0)) {
    throw Error(ErrorCode::InvalidInput, "nucleus_mass must lie in (0, 1]");
  }
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidInput, "temperature must be positive");
  if (max_tokens <= 0) throw Error(ErrorCode::InvalidInput, "max_tokens must be positive");
}

std::string truncate_at_marker(std::string_view text, std::span<const std::string> markers) {
  auto cut = std::string_view::npos;
  for (const auto& m : markers) {
    if (m.empty()) continue;
    cut = std::min(cut, text.find(m));
  }
  return std::string(text.substr(0, cut));
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

// ---------------------------------------------------------------------------
// Mock

MockBackend::MockBackend(std::vector<MockEntry> entries, MockOptions options) : options_(options) {
  for (auto& e : entries) add(std::move(e));
}

void MockBackend::add(MockEntry entry) {
  std::lock_guard lock(mu_);
  entries_[{entry.prompt_digest, entry.seed}] = std::move(entry.text);
}

void MockBackend::script(const Prompt& prompt, std::optional<std::uint64_t> seed, std::string text) {
  add({prompt.digest(), seed, std::move(text)});
}

void MockBackend::fail_on(std::string prompt_digest) {
  std::lock_guard lock(mu_);
  failing_.push_back(std::move(prompt_digest));
}

std::vector<std::pair<std::string, std::uint64_t>> MockBackend::call_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

Completion MockBackend::complete(const Prompt& prompt, const SamplingConfig& config) {
  struct InFlight {
    std::atomic<std::size_t>& n;
    explicit InFlight(std::atomic<std::size_t>& counter, std::atomic<std::size_t>& peak) : n(counter) {
      auto now = ++n;
      auto prev = peak.load();
      while (prev < now && !peak.compare_exchange_weak(prev, now)) {
      }
    }
    ~InFlight() { --n; }
  } guard(in_flight_, peak_);

  ++calls_;
  const auto digest = prompt.digest();
  std::optional<std::string> scripted;
  {
    std::lock_guard lock(mu_);
    log_.emplace_back(digest, config.seed);
    if (std::find(failing_.begin(), failing_.end(), digest) != failing_.end()) {
      throw Error(ErrorCode::BackendUnavailable, "mock backend configured to fail for this prompt");
    }
    if (auto it = entries_.find({digest, config.seed}); it != entries_.end()) {
      scripted = it->second;
    } else if (auto any = entries_.find({digest, std::nullopt}); any != entries_.end()) {
      scripted = any->second;
    }
  }
  if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
  if (scripted) return {*scripted, id(), std::nullopt};
  return {mock_fallback_text(prompt.family, digest, config.seed), id(), std::nullopt};
}

namespace {

constexpr std::array<std::string_view, 48> kWords = {
    "lantern", "harbour", "quietly", "letter",  "promise", "storm",   "window",  "silver",
    "garden",  "brother", "secret",  "morning", "river",   "shadow",  "violin",  "ticket",
    "candle",  "market",  "stranger", "winter", "machine", "orchard", "signal",  "bridge",
    "whisper", "engine",  "thunder", "mirror",  "anchor",  "ledger",  "compass", "meadow",
    "falcon",  "tavern",  "velvet",  "harvest", "beacon",  "cellar",  "glacier", "rumour",
    "saddle",  "furnace", "lagoon",  "pocket",  "satchel", "quarry",  "banner",  "cradle"};
constexpr std::array<std::string_view, 6> kNames = {"Ada", "Bruno", "Cleo", "Dmitri", "Esme", "Farid"};
constexpr std::array<std::string_view, 4> kPlaces = {"The Harbour Inn.", "The Old Lighthouse.",
                                                     "A Crowded Market.", "The Night Train."};

class Filler {
 public:
  Filler(std::string_view digest, std::uint64_t seed) {
    std::uint64_t h = 0;
    for (std::size_t i = 0; i < 16 && i < digest.size(); ++i) {
      h = (h << 4) | static_cast<std::uint64_t>(std::stoi(std::string(1, digest[i]), nullptr, 16));
    }
    rng_.seed(h ^ (seed * 0x9E3779B97F4A7C15ULL));
  }

  // Modulo reduction keeps the sequence identical across standard libraries.
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

  std::string sentence(std::size_t min_words, std::size_t max_words) {
    auto n = min_words + pick(max_words - min_words + 1);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      std::string w(kWords[pick(kWords.size())]);
      if (i == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      if (i > 0) out += ' ';
      out += w;
    }
    return out + ".";
  }

  std::vector<std::string_view> names(std::size_t n) {
    std::vector<std::string_view> pool(kNames.begin(), kNames.end());
    std::vector<std::string_view> out;
    for (std::size_t i = 0; i < n && !pool.empty(); ++i) {
      auto k = pick(pool.size());
      out.push_back(pool[k]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string mock_fallback_text(PromptFamily family, std::string_view prompt_digest, std::uint64_t seed) {
  Filler f(prompt_digest, seed);
  switch (family) {
    case PromptFamily::Title: {
      std::string t;
      auto n = 2 + f.pick(3);
      for (std::size_t i = 0; i < n; ++i) {
        std::string w(kWords[f.pick(kWords.size())]);
        w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
        t += (i ? " " : "") + w;
      }
      return " The " + t + "<end>";
    }
    case PromptFamily::Character: {
      std::string out;
      for (auto name : f.names(2 + f.pick(3))) {
        out += "<character>" + std::string(name) + " <description>" + std::string(name) + " keeps the " +
               std::string(kWords[f.pick(kWords.size())]) + ". " + f.sentence(5, 9) + "<stop>\n";
      }
      return out + "<end>";
    }
    case PromptFamily::Plot: {
      const auto& labels = freytag_scaffold().labels;
      auto n = 3 + f.pick(3);
      auto cast = f.names(3);
      std::string out = "\n\n";
      for (std::size_t i = 0; i < n; ++i) {
        auto label = labels[i * (labels.size() - 1) / (n - 1)];
        auto a = f.pick(cast.size());
        auto b = (a + 1 + f.pick(cast.size() - 1)) % cast.size();
        out += "Place: " + std::string(kPlaces[f.pick(kPlaces.size())]) + "\nPlot element: " + label +
               ".\nBeat: " + std::string(cast[a]) + " and " + std::string(cast[b]) + " meet. " +
               f.sentence(6, 10) + "\n\n";
      }
      return out + "<end>";
    }
    case PromptFamily::Location:
      return " " + f.sentence(7, 12) + " " + f.sentence(7, 12) + "<end>";
    case PromptFamily::Dialogue: {
      auto cast = f.names(2 + f.pick(2));
      auto turns = 3 + f.pick(4);
      std::string out = "\n\n";
      for (std::size_t i = 0; i < turns; ++i) {
        out += upper(cast[i % cast.size()]) + "\n" + f.sentence(6, 11) + "\n\n";
      }
      return out + "<end>";
    }
  }
  return "<end>";
}

std::vector<MockEntry> load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open mock script " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, "mock script " + path.string() + ": " + e.what());
  }
  std::vector<MockEntry> out;
  for (const auto& e : j.at("entries")) {
    MockEntry entry;
    if (e.contains("prompt_sha256")) {
      entry.prompt_digest = e.at("prompt_sha256").get<std::string>();
    } else {
      entry.prompt_digest = text::sha256_hex(e.at("prompt").get<std::string>());
    }
    if (e.contains("seed") && !e.at("seed").is_null()) entry.seed = e.at("seed").get<std::uint64_t>();
    entry.text = e.at("text").get<std::string>();
    out.push_back(std::move(entry));
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(HttpBackendOptions options, HttpTransport transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (options_.url.empty()) throw Error(ErrorCode::InvalidInput, "http backend needs a URL");
  if (!transport_) transport_ = make_httplib_transport(options_.url, options_.api_key, options_.timeout);
}

std::string HttpBackend::request_body(const Prompt& prompt, const SamplingConfig& config) {
  nlohmann::json body = {{"prompt", prompt.text},
                         {"max_tokens", config.max_tokens},
                         {"temperature", config.temperature},
                         {"top_p", config.nucleus_mass},
                         {"seed", config.seed}};
  return body.dump();
}

Completion HttpBackend::complete(const Prompt& prompt, const SamplingConfig& config) {
  const auto body = request_body(prompt, config);
  auto backoff = options_.retry.initial_backoff;
  std::string last_error;
  const int attempts = std::max(1, options_.retry.max_attempts);

  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto resp = transport_(body);
    if (resp.status == 200) {
      try {
        auto j = nlohmann::json::parse(resp.body);
        Completion c;
        if (j.contains("text")) {
          c.text = j.at("text").get<std::string>();
        } else {
          c.text = j.at("choices").at(0).at("text").get<std::string>();
        }
        c.backend_id = id();
        if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
          c.token_count = j["usage"]["completion_tokens"].get<int>();
        } else if (j.contains("token_count")) {
          c.token_count = j["token_count"].get<int>();
        }
        return c;
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed response: ") + e.what();
      }
    } else if (resp.status >= 400 && resp.status < 500 && resp.status != 429) {
      throw Error(ErrorCode::BackendRejected,
                  "backend rejected request with HTTP " + std::to_string(resp.status) + ": " + resp.body,
                  std::to_string(resp.status));
    } else {
      last_error = resp.status == 0 ? resp.error : "HTTP " + std::to_string(resp.status);
    }
    if (attempt < attempts) {
      options_.retry.sleep(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<std::chrono::milliseconds::rep>(static_cast<double>(backoff.count()) * options_.retry.multiplier));
    }
  }
  throw Error(ErrorCode::BackendUnavailable,
              "backend unavailable after " + std::to_string(attempts) + " attempts: " + last_error);
}

HttpTransport make_httplib_transport(const std::string& url, const std::string& api_key,
                                     std::chrono::seconds timeout) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidInput, "backend URL needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  std::string origin = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  return [origin, path, api_key, timeout](const std::string& body) -> HttpResponse {
    httplib::Client client(origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  };
}

BackendConfig with_env_overrides(BackendConfig config) {
  if (const char* url = std::getenv("LMGW_BACKEND_URL"); url && *url) {
    config.kind = "http";
    config.url = url;
  }
  if (const char* key = std::getenv("LMGW_API_KEY"); key && *key) config.api_key = key;
  return config;
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == "mock") {
    std::vector<MockEntry> entries;
    if (!config.mock_script.empty()) entries = load_mock_script(config.mock_script);
    return std::make_shared<MockBackend>(std::move(entries), MockOptions{config.context_window, {}});
  }
  if (config.kind == "http") {
    HttpBackendOptions opts;
    opts.url = config.url;
    opts.api_key = config.api_key;
    opts.context_window = config.context_window;
    return std::make_shared<HttpBackend>(std::move(opts));
  }
  throw Error(ErrorCode::InvalidInput, "unknown backend kind '" + config.kind + "'");
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<Backend> backend, std::size_t max_in_flight)
    : backend_(std::move(backend)), max_in_flight_(max_in_flight) {
  if (!backend_) throw Error(ErrorCode::InvalidInput, "gateway needs a backend");
  if (max_in_flight_ == 0) throw Error(ErrorCode::InvalidInput, "max_in_flight must be at least 1");
}

void Gateway::check(const Prompt& prompt, const SamplingConfig& config) const {
  if (prompt.text.empty()) throw Error(ErrorCode::InvalidInput, "prompt is empty");
  config.validate();
  if (auto window = backend_->context_window()) {
    auto tokens = backend_->count_tokens(prompt.text);
    if (tokens > *window) {
      throw Error(ErrorCode::ContextOverflow,
                  "prompt needs " + std::to_string(tokens) + " tokens, window is " + std::to_string(*window));
    }
  }
}

Completion Gateway::call(const Prompt& prompt, const SamplingConfig& config) {
  struct Release {
    Gateway& g;
    ~Release() {
      {
        std::lock_guard lock(g.mu_);
        --g.in_flight_;
      }
      g.cv_.notify_one();
    }
  } release{*this};
  return backend_->complete(prompt, config);
}

Completion Gateway::complete(const Prompt& prompt, const SamplingConfig& config) {
  check(prompt, config);
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
    ++in_flight_;
  }
  return call(prompt, config);
}

Completion Gateway::try_complete(const Prompt& prompt, const SamplingConfig& config) {
  check(prompt, config);
  {
    std::lock_guard lock(mu_);
    if (in_flight_ >= max_in_flight_) throw Error(ErrorCode::Busy, "too many generations in flight");
    ++in_flight_;
  }
  return call(prompt, config);
}

std::size_t Gateway::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

}  // namespace dramaturg
