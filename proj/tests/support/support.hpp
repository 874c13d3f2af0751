#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "dramaturg/engine.hpp"
#include "dramaturg/error.hpp"
#include "dramaturg/lm_gateway.hpp"
#include "dramaturg/script_io.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg::test {

inline const std::filesystem::path kSourceDir = DRAMATURG_SOURCE_DIR;
inline const std::filesystem::path kPromptDir = kSourceDir / "prompts";

inline std::string teddy(std::string_view name) {
  return read_file(kSourceDir / "fixtures" / "teddy" / std::string(name));
}

inline std::string golden_prompt(std::string_view name) {
  return read_file(kSourceDir / "tests" / "golden" / "prompts" / (std::string(name) + ".txt"));
}

inline std::string teddy_log_line() { return text::trim_copy(teddy("logline.txt")); }

inline PromptSet prompt_set(std::string_view name) { return load_named_prompt_set(kPromptDir, name); }

inline Clock fixed_clock(Timestamp t = 1700000000000) {
  return [t] { return t; };
}

inline Clock ticking_clock(Timestamp start = 1700000000000) {
  auto now = std::make_shared<std::atomic<Timestamp>>(start);
  return [now] { return now->fetch_add(1); };
}

/// Teddy completions keyed by the digests of the hand-transcribed golden
/// prompts, so a chaining mistake falls through to filler text.
inline std::vector<MockEntry> teddy_mock_entries() {
  auto key = [](std::string_view golden) { return text::sha256_hex(golden_prompt(golden)); };
  return {
      {key("medea_title"), std::nullopt, teddy("title.txt")},
      {key("medea_character"), std::nullopt, teddy("characters.txt")},
      {key("medea_plot"), std::nullopt, teddy("plot.txt")},
      {key("medea_location"), std::nullopt, teddy("location.txt")},
      {key("medea_dialogue_scene1"), 1, teddy("dialogue_1_seed1.txt")},
      {key("medea_dialogue_scene1"), 2, teddy("dialogue_1_seed2.txt")},
      {key("medea_dialogue_scene2"), std::nullopt, teddy("dialogue_2_seed1.txt")},
  };
}

inline Engine make_engine(std::shared_ptr<Backend> backend, EngineOptions options = {},
                          std::string_view set = "medea", std::size_t max_in_flight = 4) {
  return Engine(prompt_set(set), std::make_shared<Gateway>(std::move(backend), max_in_flight), std::move(options));
}

inline EngineOptions fixed_options(bool parallel = true) {
  EngineOptions o;
  o.clock = fixed_clock();
  o.parallel = parallel;
  return o;
}

/// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dramaturg-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / std::string(name); }

 private:
  std::filesystem::path path_;
};

inline std::string random_word(std::mt19937_64& rng, std::size_t min_len = 1, std::size_t max_len = 8) {
  static constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
  std::string w;
  auto n = min_len + rng() % (max_len - min_len + 1);
  for (std::size_t i = 0; i < n; ++i) w += kLetters[rng() % kLetters.size()];
  return w;
}

inline std::string random_sentence(std::mt19937_64& rng, std::size_t words) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) s += (i ? " " : "") + random_word(rng);
  return s;
}

/// Session built by a random walk of generate/continue/edit/accept operations
/// against the mock filler backend.
inline StorySession random_session(std::mt19937_64& rng, const Engine& engine) {
  auto s = engine.new_session(LogLine(random_sentence(rng, 3 + rng() % 8) + "."), "s" + std::to_string(rng() % 100000));
  const auto steps = rng() % 25;
  for (std::size_t i = 0; i < steps; ++i) {
    auto addresses = s.addresses();
    const auto& address = addresses[rng() % addresses.size()];
    try {
      switch (rng() % 5) {
        case 0:
        case 1: engine.generate(s, address, rng() % 50); break;
        case 2: engine.continue_generation(s, address, rng() % 50); break;
        case 3: {
          const auto& slot = s.slot(address);
          std::string text = slot.resolvable() ? resolve_slot_text(slot) + " " + random_word(rng) : random_word(rng);
          if (address.kind == SlotKind::Characters) text = "<character>Zed <description>Zed is " + random_word(rng) + ".<stop>";
          engine.apply_edit(s, address, text);
          break;
        }
        default: {
          const auto& slot = s.slot(address);
          if (!slot.candidates.empty()) engine.accept(s, address, rng() % slot.candidates.size());
        }
      }
    } catch (const Error&) {
      // Upstream-missing and friends are part of the walk.
    }
  }
  return s;
}

}  // namespace dramaturg::test
