#include "dramaturg/story_model.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <charconv>
#include <set>

#include "dramaturg/error.hpp"
#include "dramaturg/metrics.hpp"
#include "dramaturg/parsing.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

bool contains_reserved_marker(std::string_view s) {
  return std::any_of(kReservedMarkers.begin(), kReservedMarkers.end(),
                     [&](std::string_view m) { return s.find(m) != std::string_view::npos; });
}

LogLine::LogLine(std::string text) : text_(std::move(text)) {
  if (text::trim(text_).empty()) {
    throw Error(ErrorCode::InvalidLogLine, "log line is empty");
  }
  if (contains_reserved_marker(text_)) {
    throw Error(ErrorCode::InvalidLogLine, "log line contains a reserved marker");
  }
}

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Lowercase, fold é/É to e, drop punctuation, collapse whitespace.
std::string normalize_label(std::string_view label) {
  std::string folded;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label.substr(i, 2) == "\xC3\xA9" || label.substr(i, 2) == "\xC3\x89") {
      folded += 'e';
      ++i;
      continue;
    }
    folded += label[i];
  }
  std::string out;
  bool pending_space = false;
  for (char c : folded) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(u));
    } else if (std::isspace(u)) {
      pending_space = true;
    }
  }
  return out;
}

}  // namespace

void validate_characters(std::span<const CharacterSpec> characters) {
  std::set<std::string> seen;
  for (const auto& c : characters) {
    if (text::trim(c.name).empty() || c.name.find('\n') != std::string::npos ||
        contains_reserved_marker(c.name)) {
      throw Error(ErrorCode::InvalidInput, "invalid character name '" + c.name + "'", c.name);
    }
    if (text::trim(c.description).empty()) {
      throw Error(ErrorCode::InvalidInput, "character '" + c.name + "' has no description", c.name);
    }
    if (!seen.insert(lower_ascii(c.name)).second) {
      throw Error(ErrorCode::InvalidInput, "duplicate character name '" + c.name + "'", c.name);
    }
  }
}

const ArcScaffold& freytag_scaffold() {
  static const ArcScaffold kFreytag{
      "freytag",
      {"Exposition", "Inciting Incident", "Conflict", "Rising Action", "Dilemma", "Climax",
       "Falling Action", "Resolution", "Denouement"}};
  return kFreytag;
}

const ArcScaffold& hero_journey_scaffold() {
  static const ArcScaffold kHero{
      "hero_journey",
      {"The Ordinary World", "Call to Adventure", "Refusal of the Call", "Crossing the First Threshold",
       "Tests Allies and Enemies", "The Approach to the Inmost Cave", "The Ordeal", "The Reward",
       "The Road Back", "The Resurrection", "The Return"}};
  return kHero;
}

bool is_canonical_plot_element(std::string_view label) {
  static const std::set<std::string> kKnown = [] {
    std::set<std::string> s;
    for (const auto* scaffold : {&freytag_scaffold(), &hero_journey_scaffold()}) {
      for (const auto& l : scaffold->labels) s.insert(normalize_label(l));
    }
    return s;
  }();
  return kKnown.count(normalize_label(label)) > 0;
}

bool Scene::canonical_element() const { return is_canonical_plot_element(plot_element); }

std::vector<std::string> unique_locations(std::span<const Scene> scenes) {
  std::vector<std::string> out;
  for (const auto& s : scenes) {
    auto place = text::trim_copy(s.place);
    if (std::find(out.begin(), out.end(), place) == out.end()) out.push_back(std::move(place));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(SlotKind kind) {
  switch (kind) {
    case SlotKind::Title: return "title";
    case SlotKind::Characters: return "characters";
    case SlotKind::Plot: return "plot";
    case SlotKind::Location: return "location";
    case SlotKind::Dialogue: return "dialogue";
  }
  return "?";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Generated: return "generated";
    case Provenance::Edited: return "edited";
    case Provenance::Mixed: return "mixed";
  }
  return "?";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "generated") return Provenance::Generated;
  if (s == "edited") return Provenance::Edited;
  if (s == "mixed") return Provenance::Mixed;
  throw Error(ErrorCode::SerializationError, "unknown provenance '" + std::string(s) + "'");
}

SlotAddress SlotAddress::parse(std::string_view s) {
  if (s == "title") return title();
  if (s == "characters") return characters();
  if (s == "plot") return plot();
  if (text::starts_with(s, "location:")) {
    auto name = text::trim(s.substr(9));
    if (name.empty()) throw Error(ErrorCode::UnknownSlot, "empty location name", std::string(s));
    return location_of(std::string(name));
  }
  if (text::starts_with(s, "dialogue:")) {
    auto num = s.substr(9);
    std::size_t n = 0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), n);
    if (ec != std::errc{} || p != num.data() + num.size() || n == 0) {
      throw Error(ErrorCode::UnknownSlot, "bad scene index in '" + std::string(s) + "'", std::string(s));
    }
    return dialogue(n);
  }
  throw Error(ErrorCode::UnknownSlot, "unknown slot address '" + std::string(s) + "'", std::string(s));
}

std::string SlotAddress::str() const {
  switch (kind) {
    case SlotKind::Location: return "location:" + location;
    case SlotKind::Dialogue: return "dialogue:" + std::to_string(scene);
    default: return std::string(to_string(kind));
  }
}

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

std::string resolve_slot_text(const GenerationSlot& slot) {
  if (slot.edited_text) return *slot.edited_text;
  if (slot.accepted) return slot.candidates.at(*slot.accepted).raw_text;
  throw Error(ErrorCode::EmptySlot, "slot '" + slot.key + "' has no accepted or edited text", slot.key);
}

std::string_view event_type(const SessionEvent& e) {
  struct V {
    std::string_view operator()(const SessionCreated&) const { return "session_created"; }
    std::string_view operator()(const CandidateAdded&) const { return "candidate_added"; }
    std::string_view operator()(const CandidateAccepted&) const { return "candidate_accepted"; }
    std::string_view operator()(const SlotEdited&) const { return "slot_edited"; }
  };
  return std::visit(V{}, e);
}

Provenance edit_provenance(const GenerationSlot& slot, std::string_view new_text) {
  if (!slot.accepted) return Provenance::Edited;
  const auto& original = slot.candidates.at(*slot.accepted).raw_text;
  if (original.empty()) return Provenance::Edited;
  return metrics::relative_levenshtein(original, new_text) < 1.0 ? Provenance::Mixed : Provenance::Edited;
}

// ---------------------------------------------------------------------------
// StorySession

const LogLine& StorySession::log_line() const {
  if (!log_line_) throw Error(ErrorCode::InvalidInput, "session has not been created");
  return *log_line_;
}

const GenerationSlot* StorySession::find_slot(const SlotAddress& address) const {
  switch (address.kind) {
    case SlotKind::Title: return &title_;
    case SlotKind::Characters: return &characters_;
    case SlotKind::Plot: return &plot_;
    case SlotKind::Location:
      for (const auto& l : locations_) {
        if (l.name == address.location) return &l.slot;
      }
      return nullptr;
    case SlotKind::Dialogue:
      if (address.scene >= 1 && address.scene <= dialogues_.size()) return &dialogues_[address.scene - 1];
      return nullptr;
  }
  return nullptr;
}

const GenerationSlot& StorySession::slot(const SlotAddress& address) const {
  const auto* s = find_slot(address);
  if (!s) throw Error(ErrorCode::UnknownSlot, "no slot '" + address.str() + "'", address.str());
  return *s;
}

GenerationSlot* StorySession::mutable_slot(const SlotAddress& address) {
  return const_cast<GenerationSlot*>(&slot(address));
}

std::vector<SlotAddress> StorySession::addresses() const {
  std::vector<SlotAddress> out{SlotAddress::title(), SlotAddress::characters(), SlotAddress::plot()};
  for (const auto& l : locations_) out.push_back(SlotAddress::location_of(l.name));
  for (std::size_t i = 1; i <= dialogues_.size(); ++i) out.push_back(SlotAddress::dialogue(i));
  return out;
}

std::vector<Scene> StorySession::scenes() const {
  if (!plot_.resolvable()) return {};
  try {
    return parse_plot(resolve_slot_text(plot_));
  } catch (const Error&) {
    return {};
  }
}

void StorySession::mark_downstream_stale(const SlotAddress& changed) {
  auto mark = [](GenerationSlot& s) {
    if (s.resolvable()) s.stale = true;
  };
  switch (changed.kind) {
    case SlotKind::Characters:
      mark(plot_);
      for (auto& d : dialogues_) mark(d);
      break;
    case SlotKind::Plot:
      for (auto& d : dialogues_) mark(d);
      break;
    case SlotKind::Location: {
      auto sc = scenes();
      for (std::size_t i = 0; i < sc.size() && i < dialogues_.size(); ++i) {
        if (text::trim(sc[i].place) == changed.location) mark(dialogues_[i]);
      }
      break;
    }
    default:
      break;
  }
}

std::vector<RetiredSlot> StorySession::sync_structure() {
  std::vector<RetiredSlot> retired;
  auto retire = [&](const std::string& address, const GenerationSlot& s) {
    if (s.candidates.empty() && !s.edited_text) return;
    RetiredSlot r{address, std::nullopt, s.candidates.size()};
    if (s.resolvable()) r.text = resolve_slot_text(s);
    retired.push_back(std::move(r));
  };

  const auto sc = scenes();
  const auto places = unique_locations(sc);

  std::vector<LocationSlot> next;
  for (const auto& place : places) {
    auto it = std::find_if(locations_.begin(), locations_.end(),
                           [&](const LocationSlot& l) { return l.name == place; });
    if (it != locations_.end()) {
      next.push_back(std::move(*it));
    } else {
      next.push_back({place, GenerationSlot{SlotKind::Location, place}});
    }
  }
  for (const auto& l : locations_) {
    if (std::find(places.begin(), places.end(), l.name) == places.end()) {
      retire("location:" + l.name, l.slot);
    }
  }
  locations_ = std::move(next);

  for (std::size_t i = sc.size(); i < dialogues_.size(); ++i) {
    retire("dialogue:" + std::to_string(i + 1), dialogues_[i]);
  }
  const auto old = dialogues_.size();
  dialogues_.resize(sc.size());
  for (std::size_t i = old; i < dialogues_.size(); ++i) {
    dialogues_[i] = GenerationSlot{SlotKind::Dialogue, std::to_string(i + 1)};
  }
  return retired;
}

void StorySession::apply_event(SessionEvent& event) {
  if (!std::holds_alternative<SessionCreated>(event) && !log_line_) {
    throw Error(ErrorCode::InvalidInput, "first event must create the session");
  }

  struct Visitor {
    StorySession& s;

    void operator()(SessionCreated& e) {
      if (s.log_line_) throw Error(ErrorCode::InvalidInput, "session already created");
      s.log_line_.emplace(e.log_line);
      s.id_ = e.id;
      s.prompt_set_ = e.prompt_set;
    }

    void operator()(CandidateAdded& e) {
      auto* slot = s.mutable_slot(e.address);
      if (e.candidate.raw_text.find(kEndMarker) != std::string::npos) {
        throw Error(ErrorCode::InvalidInput, "candidate text still contains <end>");
      }
      const bool was_resolvable = slot->resolvable();
      const bool first = slot->candidates.empty();
      slot->candidates.push_back(e.candidate);
      if (first) {
        slot->accepted = 0;
        if (!was_resolvable) {
          slot->stale = false;
          resolution_changed(e.address);
        }
      }
    }

    void operator()(CandidateAccepted& e) {
      auto* slot = s.mutable_slot(e.address);
      if (e.index >= slot->candidates.size()) {
        throw Error(ErrorCode::InvalidInput,
                    "candidate index " + std::to_string(e.index) + " out of range for " + e.address.str());
      }
      slot->accepted = e.index;
      slot->edited_text.reset();
      slot->provenance = Provenance::Generated;
      slot->stale = false;
      resolution_changed(e.address);
    }

    void operator()(SlotEdited& e) {
      auto* slot = s.mutable_slot(e.address);
      try {
        switch (e.address.kind) {
          case SlotKind::Plot: (void)parse_plot(e.text); break;
          case SlotKind::Characters: (void)parse_characters(e.text); break;
          case SlotKind::Title: (void)parse_title(e.text); break;
          default: break;
        }
      } catch (const Error& err) {
        throw Error(ErrorCode::UnparseableEdit, "edit of " + e.address.str() + " does not parse: " + err.what(),
                    e.address.str());
      }
      e.provenance = edit_provenance(*slot, e.text);
      slot->edited_text = e.text;
      slot->provenance = e.provenance;
      slot->stale = false;
      e.retired = resolution_changed(e.address);
    }

    std::vector<RetiredSlot> resolution_changed(const SlotAddress& address) {
      std::vector<RetiredSlot> retired;
      if (address.kind == SlotKind::Plot) retired = s.sync_structure();
      s.mark_downstream_stale(address);
      return retired;
    }
  };

  std::visit(Visitor{*this}, event);
}

void StorySession::apply(SessionEvent event) {
  auto history = std::move(history_);
  history_.clear();
  StorySession next = *this;
  try {
    next.apply_event(event);
  } catch (...) {
    history_ = std::move(history);
    throw;
  }
  next.history_ = std::move(history);
  next.history_.push_back(std::move(event));
  *this = std::move(next);
}

StorySession StorySession::replay(std::span<const SessionEvent> events) {
  StorySession s;
  for (const auto& e : events) s.apply(e);
  return s;
}

}  // namespace dramaturg
