#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "dramaturg/lm_gateway.hpp"
#include "dramaturg/parsing.hpp"
#include "dramaturg/prompt_forge.hpp"
#include "dramaturg/story_model.hpp"

namespace dramaturg {

struct LoopDetectorConfig {
  /// Blank lines that separate two blocks.
  int min_blank_lines = 1;
  int repeat_threshold = 3;
  int max_resamples = 5;

  void validate() const;
};

/// Exact-match frequency of each trimmed, non-empty block of text.
std::map<std::string, int> detect_loops(std::string_view text, const LoopDetectorConfig& config = {});
int max_block_repeats(std::string_view text, const LoopDetectorConfig& config = {});

struct SeedPolicy {
  enum class Mode { Fixed, Sequential };

  std::uint64_t base = 1;
  Mode mode = Mode::Fixed;

  /// Seed for the ordinal-th slot of a full run (0-based).
  std::uint64_t seed_for(std::size_t ordinal) const;
  static SeedPolicy parse(std::string_view spec);  // "7", "fixed:7", "sequential:7"
};

struct EngineOptions {
  LoopDetectorConfig loop;
  SamplingConfig sampling;
  Clock clock = system_clock();
  /// Run location and dialogue generations of generate_full concurrently.
  bool parallel = true;
  std::size_t workers = 4;
};

/// Orchestrates the title -> characters -> plot -> locations -> dialogue
/// hierarchy. The engine is stateless apart from configuration; callers own
/// sessions and serialize mutations per session.
class Engine {
 public:
  Engine(PromptSet prompt_set, std::shared_ptr<Gateway> gateway, EngineOptions options = {});

  const PromptSet& prompt_set() const noexcept { return prompt_set_; }
  const EngineOptions& options() const noexcept { return options_; }

  StorySession new_session(const LogLine& log_line, std::string id = {}) const;

  /// Prompt the slot would be generated from, built from resolved upstream
  /// text. Throws UpstreamMissing naming the first unresolved dependency.
  Prompt prompt_for(const StorySession& session, const SlotAddress& address) const;

  /// Produces a candidate without touching the session. The returned event
  /// can be applied later; generate() does both.
  CandidateAdded produce(const StorySession& session, const SlotAddress& address,
                         std::uint64_t seed) const;

  Candidate generate(StorySession& session, const SlotAddress& address, std::uint64_t seed) const;
  Candidate continue_generation(StorySession& session, const SlotAddress& address,
                                std::optional<std::uint64_t> seed = std::nullopt) const;
  void apply_edit(StorySession& session, const SlotAddress& address, std::string new_text) const;
  void accept(StorySession& session, const SlotAddress& address, std::size_t index) const;

  /// Fills every unresolved slot in hierarchy order. Errors carry the failing
  /// slot in Error::slot(); slots completed before the failure are kept.
  void generate_full(StorySession& session, const SeedPolicy& seeds) const;

 private:
  PromptSet prompt_set_;
  std::shared_ptr<Gateway> gateway_;
  EngineOptions options_;
};

/// Random 16-hex-digit identifier.
std::string new_session_id();

}  // namespace dramaturg
