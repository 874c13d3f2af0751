#include "dramaturg/engine.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <random>
#include <thread>

#include "dramaturg/error.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

void LoopDetectorConfig::validate() const {
  if (min_blank_lines < 1) throw Error(ErrorCode::InvalidInput, "min_blank_lines must be at least 1");
  if (repeat_threshold < 2) throw Error(ErrorCode::InvalidInput, "repeat_threshold must be at least 2");
  if (max_resamples < 1) throw Error(ErrorCode::InvalidInput, "max_resamples must be positive");
}

std::map<std::string, int> detect_loops(std::string_view text, const LoopDetectorConfig& config) {
  std::map<std::string, int> counts;
  std::string block;
  std::string pending;  // blank lines not (yet) long enough to split
  int blank_run = 0;

  auto flush = [&] {
    auto b = text::trim(block);
    if (!b.empty()) ++counts[std::string(b)];
    block.clear();
  };

  for (auto line : text::split_lines(text)) {
    if (text::trim(line).empty()) {
      ++blank_run;
      pending += '\n';
      continue;
    }
    if (blank_run >= config.min_blank_lines) {
      flush();
    } else {
      block += pending;
    }
    pending.clear();
    blank_run = 0;
    if (!block.empty()) block += '\n';
    block += line;
  }
  flush();
  return counts;
}

int max_block_repeats(std::string_view text, const LoopDetectorConfig& config) {
  int best = 0;
  for (const auto& [_, n] : detect_loops(text, config)) best = std::max(best, n);
  return best;
}

std::uint64_t SeedPolicy::seed_for(std::size_t ordinal) const {
  return mode == Mode::Fixed ? base : base + ordinal;
}

SeedPolicy SeedPolicy::parse(std::string_view spec) {
  SeedPolicy p;
  auto number = spec;
  if (auto colon = spec.find(':'); colon != std::string_view::npos) {
    auto mode = spec.substr(0, colon);
    if (mode == "fixed") {
      p.mode = Mode::Fixed;
    } else if (mode == "sequential") {
      p.mode = Mode::Sequential;
    } else {
      throw Error(ErrorCode::InvalidInput, "unknown seed mode '" + std::string(mode) + "'");
    }
    number = spec.substr(colon + 1);
  }
  auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), p.base);
  if (ec != std::errc{} || ptr != number.data() + number.size() || number.empty()) {
    throw Error(ErrorCode::InvalidInput, "invalid seed '" + std::string(spec) + "'");
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::string resolved_or_missing(const StorySession& session, const SlotAddress& address) {
  const auto* slot = session.find_slot(address);
  if (!slot || !slot->resolvable()) {
    throw Error(ErrorCode::UpstreamMissing, "slot '" + address.str() + "' must be resolved first",
                address.str());
  }
  return resolve_slot_text(*slot);
}

std::vector<CharacterSpec> resolved_characters(const StorySession& session) {
  return parse_characters(resolved_or_missing(session, SlotAddress::characters()));
}

struct Sample {
  std::string text;
  std::uint64_t seed = 0;
  int repeats = 0;
  bool flagged = false;
  std::vector<GatewayAttempt> attempts;
};

}  // namespace

Engine::Engine(PromptSet prompt_set, std::shared_ptr<Gateway> gateway, EngineOptions options)
    : prompt_set_(std::move(prompt_set)), gateway_(std::move(gateway)), options_(std::move(options)) {
  if (!gateway_) throw Error(ErrorCode::InvalidInput, "engine needs a gateway");
  options_.loop.validate();
  options_.sampling.validate();
  if (!options_.clock) options_.clock = system_clock();
  if (options_.workers == 0) options_.workers = 1;
}

StorySession Engine::new_session(const LogLine& log_line, std::string id) const {
  StorySession s;
  s.apply(SessionCreated{id.empty() ? new_session_id() : std::move(id), log_line.text(), prompt_set_.name,
                         options_.clock()});
  return s;
}

Prompt Engine::prompt_for(const StorySession& session, const SlotAddress& address) const {
  const auto& log_line = session.log_line();
  switch (address.kind) {
    case SlotKind::Title:
      return render_title_prompt(prompt_set_, log_line);
    case SlotKind::Characters:
      return render_character_prompt(prompt_set_, log_line);
    case SlotKind::Plot: {
      auto cast = resolved_characters(session);
      return render_plot_prompt(prompt_set_, log_line, cast);
    }
    case SlotKind::Location:
      (void)resolved_or_missing(session, SlotAddress::plot());
      (void)session.slot(address);
      return render_location_prompt(prompt_set_, log_line, address.location);
    case SlotKind::Dialogue: {
      (void)resolved_or_missing(session, SlotAddress::plot());
      (void)session.slot(address);
      const auto scenes = session.scenes();
      const auto& scene = scenes.at(address.scene - 1);
      auto cast = resolved_characters(session);
      auto place = resolved_or_missing(session, SlotAddress::location_of(text::trim_copy(scene.place)));
      std::optional<std::string_view> previous;
      if (address.scene > 1) previous = scenes[address.scene - 2].beat;
      auto named = select_characters_for_beat(cast, scene.beat);
      return render_dialogue_prompt(prompt_set_, log_line, scene, previous, text::unwrap_lines(place), named);
    }
  }
  throw Error(ErrorCode::UnknownSlot, "unknown slot", address.str());
}

CandidateAdded Engine::produce(const StorySession& session, const SlotAddress& address,
                               std::uint64_t seed) const {
  const auto prompt = prompt_for(session, address);
  const bool check_loops = address.kind == SlotKind::Dialogue;

  Sample s;
  s.seed = seed;
  for (int resample = 0;; ++resample) {
    auto config = options_.sampling;
    config.seed = s.seed;
    auto completion = gateway_->complete(prompt, config);
    s.text = truncate_at_marker(completion.text, prompt.stop_markers);
    s.repeats = max_block_repeats(s.text, options_.loop);
    s.attempts.push_back({s.seed, s.repeats});
    if (!check_loops || s.repeats < options_.loop.repeat_threshold) break;
    if (resample == options_.loop.max_resamples) {
      s.flagged = true;
      break;
    }
    ++s.seed;
  }

  CandidateAdded e;
  e.address = address;
  e.candidate.raw_text = std::move(s.text);
  e.candidate.seed = s.seed;
  e.candidate.sampling = options_.sampling;
  e.candidate.sampling.seed = s.seed;
  e.candidate.prompt_hash = prompt.digest();
  e.candidate.loop_flagged = s.flagged;
  e.candidate.max_block_repeats = s.repeats;
  e.origin = "generate";
  e.attempts = std::move(s.attempts);
  e.at = options_.clock();
  e.candidate.created_at = e.at;
  return e;
}

namespace {

Candidate commit(StorySession& session, CandidateAdded event) {
  auto address = event.address;
  const bool flagged = event.candidate.loop_flagged;
  session.apply(std::move(event));
  const auto& slot = session.slot(address);
  if (flagged) {
    throw Error(ErrorCode::LoopUnresolved,
                "generation for " + address.str() + " still loops after " +
                    std::to_string(std::get<CandidateAdded>(session.history().back()).attempts.size() - 1) +
                    " resamples",
                address.str());
  }
  return slot.candidates.back();
}

}  // namespace

Candidate Engine::generate(StorySession& session, const SlotAddress& address, std::uint64_t seed) const {
  return commit(session, produce(session, address, seed));
}

Candidate Engine::continue_generation(StorySession& session, const SlotAddress& address,
                                      std::optional<std::uint64_t> seed) const {
  const auto& slot = session.slot(address);
  if (!slot.resolvable()) {
    throw Error(ErrorCode::EmptySlot, "slot '" + address.str() + "' has nothing to continue", address.str());
  }
  const auto prior = resolve_slot_text(slot);
  auto prompt = prompt_for(session, address);
  prompt.text += prior;

  auto config = options_.sampling;
  config.seed = seed.value_or(slot.candidates.empty() ? options_.sampling.seed : slot.candidates.back().seed);
  auto completion = gateway_->complete(prompt, config);

  CandidateAdded e;
  e.address = address;
  e.candidate.raw_text = prior + truncate_at_marker(completion.text, prompt.stop_markers);
  e.candidate.seed = config.seed;
  e.candidate.sampling = config;
  e.candidate.prompt_hash = prompt.digest();
  e.candidate.max_block_repeats = max_block_repeats(e.candidate.raw_text, options_.loop);
  e.origin = "continue";
  e.attempts = {{config.seed, e.candidate.max_block_repeats}};
  e.at = options_.clock();
  e.candidate.created_at = e.at;
  session.apply(std::move(e));
  return session.slot(address).candidates.back();
}

void Engine::apply_edit(StorySession& session, const SlotAddress& address, std::string new_text) const {
  SlotEdited e;
  e.address = address;
  e.text = std::move(new_text);
  e.at = options_.clock();
  session.apply(std::move(e));
}

void Engine::accept(StorySession& session, const SlotAddress& address, std::size_t index) const {
  session.apply(CandidateAccepted{address, index, options_.clock()});
}

void Engine::generate_full(StorySession& session, const SeedPolicy& seeds) const {
  auto tagged = [](const SlotAddress& address, auto&& fn) {
    try {
      fn();
    } catch (Error& e) {
      if (e.slot().empty()) e.set_slot(address.str());
      throw;
    }
  };

  std::size_t ordinal = 0;
  for (const auto& address : {SlotAddress::title(), SlotAddress::characters(), SlotAddress::plot()}) {
    const auto seed = seeds.seed_for(ordinal++);
    if (session.slot(address).resolvable()) continue;
    tagged(address, [&] { generate(session, address, seed); });
  }
  tagged(SlotAddress::plot(), [&] { (void)parse_plot(resolve_slot_text(session.plot_slot())); });

  // Locations first, then dialogues; each batch is produced against a fixed
  // snapshot and committed in canonical order.
  auto run_batch = [&](std::vector<SlotAddress> batch) {
    struct Job {
      SlotAddress address;
      std::uint64_t seed = 0;
      std::optional<CandidateAdded> result;
      std::exception_ptr error;
    };
    std::vector<Job> jobs;
    for (auto& a : batch) {
      const auto seed = seeds.seed_for(ordinal++);
      if (!session.slot(a).resolvable()) jobs.push_back({std::move(a), seed, std::nullopt, nullptr});
    }

    const StorySession& snapshot = session;
    auto work = [&](Job& job) {
      try {
        job.result = produce(snapshot, job.address, job.seed);
      } catch (...) {
        job.error = std::current_exception();
      }
    };

    if (options_.parallel && jobs.size() > 1) {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      const auto n = std::min(options_.workers, jobs.size());
      for (std::size_t i = 0; i < n; ++i) {
        pool.emplace_back([&] {
          for (auto k = next++; k < jobs.size(); k = next++) work(jobs[k]);
        });
      }
      for (auto& t : pool) t.join();
    } else {
      for (auto& job : jobs) {
        work(job);
        if (job.error) break;
      }
    }

    for (auto& job : jobs) {
      tagged(job.address, [&] {
        if (job.error) std::rethrow_exception(job.error);
        commit(session, std::move(*job.result));
      });
    }
  };

  std::vector<SlotAddress> locations;
  for (const auto& l : session.location_slots()) locations.push_back(SlotAddress::location_of(l.name));
  run_batch(std::move(locations));

  std::vector<SlotAddress> dialogues;
  for (std::size_t k = 1; k <= session.dialogue_slots().size(); ++k) dialogues.push_back(SlotAddress::dialogue(k));
  run_batch(std::move(dialogues));
}

std::string new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  auto v = rng();
  std::string id(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) id[static_cast<std::size_t>(i)] = kHex[v & 0xF];
  return id;
}

}  // namespace dramaturg
