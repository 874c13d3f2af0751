#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "dramaturg/sampling.hpp"

namespace dramaturg {

inline constexpr std::array<std::string_view, 6> kReservedMarkers = {
    "<end>", "<stop>", "<character>", "<description>", "<scenes>", "<dialog>"};

inline constexpr std::string_view kEndMarker = "<end>";
inline constexpr std::string_view kStopMarker = "<stop>";

bool contains_reserved_marker(std::string_view s);

/// Root of the hierarchy. Construction validates the text.
class LogLine {
 public:
  explicit LogLine(std::string text);

  const std::string& text() const noexcept { return text_; }

  friend bool operator==(const LogLine&, const LogLine&) = default;

 private:
  std::string text_;
};

struct CharacterSpec {
  std::string name;
  std::string description;

  friend bool operator==(const CharacterSpec&, const CharacterSpec&) = default;
};

/// Throws InvalidInput on an empty/multi-line/marker-bearing name, an empty
/// description, or a case-insensitive duplicate name.
void validate_characters(std::span<const CharacterSpec> characters);

struct Scene {
  std::string place;
  std::string plot_element;
  std::string beat;

  /// Whether plot_element belongs to one of the shipped arc scaffolds.
  bool canonical_element() const;

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct ArcScaffold {
  std::string name;
  std::vector<std::string> labels;
};

const ArcScaffold& freytag_scaffold();
const ArcScaffold& hero_journey_scaffold();

/// Membership test against both scaffolds, ignoring case, punctuation,
/// surrounding whitespace and the accent in "Dénouement".
bool is_canonical_plot_element(std::string_view label);

/// Distinct trimmed place names in first-appearance order (case-sensitive).
std::vector<std::string> unique_locations(std::span<const Scene> scenes);

// ---------------------------------------------------------------------------
// Slots

enum class SlotKind { Title, Characters, Plot, Location, Dialogue };
enum class Provenance { Generated, Edited, Mixed };

std::string_view to_string(SlotKind kind);
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

/// `title`, `characters`, `plot`, `location:<name>`, `dialogue:<n>` (1-based).
struct SlotAddress {
  SlotKind kind = SlotKind::Title;
  std::string location;
  std::size_t scene = 0;

  static SlotAddress title() { return {SlotKind::Title, {}, 0}; }
  static SlotAddress characters() { return {SlotKind::Characters, {}, 0}; }
  static SlotAddress plot() { return {SlotKind::Plot, {}, 0}; }
  static SlotAddress location_of(std::string name) { return {SlotKind::Location, std::move(name), 0}; }
  static SlotAddress dialogue(std::size_t scene) { return {SlotKind::Dialogue, {}, scene}; }

  /// Throws Error(UnknownSlot) on malformed input.
  static SlotAddress parse(std::string_view s);
  std::string str() const;

  friend bool operator==(const SlotAddress&, const SlotAddress&) = default;
};

using Timestamp = std::int64_t;  // milliseconds since the Unix epoch
using Clock = std::function<Timestamp()>;

Clock system_clock();

struct Candidate {
  std::string raw_text;
  std::uint64_t seed = 0;
  SamplingConfig sampling;
  std::string prompt_hash;
  Timestamp created_at = 0;
  bool loop_flagged = false;
  int max_block_repeats = 0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct GenerationSlot {
  SlotKind kind = SlotKind::Title;
  std::string key;
  std::vector<Candidate> candidates;
  std::optional<std::size_t> accepted;
  std::optional<std::string> edited_text;
  Provenance provenance = Provenance::Generated;
  /// An upstream slot this one was built from has changed since.
  bool stale = false;

  bool resolvable() const noexcept { return edited_text.has_value() || accepted.has_value(); }

  friend bool operator==(const GenerationSlot&, const GenerationSlot&) = default;
};

/// edited_text if present, else the accepted candidate's raw text; throws EmptySlot.
std::string resolve_slot_text(const GenerationSlot& slot);

// ---------------------------------------------------------------------------
// History events. The session state is a left fold of these.

struct GatewayAttempt {
  std::uint64_t seed = 0;
  int max_block_repeats = 0;

  friend bool operator==(const GatewayAttempt&, const GatewayAttempt&) = default;
};

struct SessionCreated {
  std::string id;
  std::string log_line;
  std::string prompt_set;
  Timestamp at = 0;

  friend bool operator==(const SessionCreated&, const SessionCreated&) = default;
};

struct CandidateAdded {
  SlotAddress address;
  Candidate candidate;
  std::string origin;  // "generate" or "continue"
  std::vector<GatewayAttempt> attempts;
  Timestamp at = 0;

  friend bool operator==(const CandidateAdded&, const CandidateAdded&) = default;
};

struct CandidateAccepted {
  SlotAddress address;
  std::size_t index = 0;
  Timestamp at = 0;

  friend bool operator==(const CandidateAccepted&, const CandidateAccepted&) = default;
};

/// Text of a slot that a plot change removed, kept for the record.
struct RetiredSlot {
  std::string address;
  std::optional<std::string> text;
  std::size_t candidates = 0;

  friend bool operator==(const RetiredSlot&, const RetiredSlot&) = default;
};

struct SlotEdited {
  SlotAddress address;
  std::string text;
  Provenance provenance = Provenance::Edited;
  std::vector<RetiredSlot> retired;
  Timestamp at = 0;

  friend bool operator==(const SlotEdited&, const SlotEdited&) = default;
};

using SessionEvent = std::variant<SessionCreated, CandidateAdded, CandidateAccepted, SlotEdited>;

std::string_view event_type(const SessionEvent& e);

// ---------------------------------------------------------------------------

struct LocationSlot {
  std::string name;
  GenerationSlot slot;

  friend bool operator==(const LocationSlot&, const LocationSlot&) = default;
};

/// The hierarchical document. Mutate only through `apply`, which records the
/// event in `history`, so replaying history rebuilds the same state.
class StorySession {
 public:
  StorySession() = default;

  const std::string& id() const noexcept { return id_; }
  const LogLine& log_line() const;
  const std::string& prompt_set_name() const noexcept { return prompt_set_; }

  const GenerationSlot& title_slot() const noexcept { return title_; }
  const GenerationSlot& character_slot() const noexcept { return characters_; }
  const GenerationSlot& plot_slot() const noexcept { return plot_; }
  const std::vector<LocationSlot>& location_slots() const noexcept { return locations_; }
  const std::vector<GenerationSlot>& dialogue_slots() const noexcept { return dialogues_; }
  const std::vector<SessionEvent>& history() const noexcept { return history_; }

  /// Throws Error(UnknownSlot).
  const GenerationSlot& slot(const SlotAddress& address) const;
  const GenerationSlot* find_slot(const SlotAddress& address) const;

  /// Every slot address currently present, in hierarchy order.
  std::vector<SlotAddress> addresses() const;

  /// Scenes of the resolved plot; empty when the plot is unresolved or unparseable.
  std::vector<Scene> scenes() const;

  /// Validates the event against the current state, applies it and appends it
  /// to history. Throws without modifying anything when the event is invalid.
  void apply(SessionEvent event);

  /// Rebuilds a session by applying `events` to an empty session.
  static StorySession replay(std::span<const SessionEvent> events);

  friend bool operator==(const StorySession&, const StorySession&) = default;

 private:
  GenerationSlot* mutable_slot(const SlotAddress& address);
  void mark_downstream_stale(const SlotAddress& changed);
  std::vector<RetiredSlot> sync_structure();
  void apply_event(SessionEvent& event);

  std::string id_;
  std::optional<LogLine> log_line_;
  std::string prompt_set_;
  GenerationSlot title_{SlotKind::Title, "title"};
  GenerationSlot characters_{SlotKind::Characters, "characters"};
  GenerationSlot plot_{SlotKind::Plot, "plot"};
  std::vector<LocationSlot> locations_;
  std::vector<GenerationSlot> dialogues_;
  std::vector<SessionEvent> history_;
};

/// Provenance an edit receives given the slot it lands on.
Provenance edit_provenance(const GenerationSlot& slot, std::string_view new_text);

}  // namespace dramaturg
