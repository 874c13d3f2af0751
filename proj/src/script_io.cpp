#include "dramaturg/script_io.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "dramaturg/error.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

using nlohmann::json;

ScriptDocument assemble_script(const StorySession& session) {
  std::vector<std::string> missing;
  for (const auto& a : {SlotAddress::title(), SlotAddress::characters(), SlotAddress::plot()}) {
    if (!session.slot(a).resolvable()) missing.push_back(a.str());
  }
  std::vector<Scene> scenes;
  if (session.plot_slot().resolvable()) {
    scenes = session.scenes();
    if (scenes.empty()) missing.push_back("plot");
  }
  for (const auto& l : session.location_slots()) {
    if (!l.slot.resolvable()) missing.push_back(SlotAddress::location_of(l.name).str());
  }
  for (std::size_t k = 1; k <= session.dialogue_slots().size(); ++k) {
    if (!session.dialogue_slots()[k - 1].resolvable()) missing.push_back(SlotAddress::dialogue(k).str());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::IncompleteSession, "session is missing " + list, session.id(), missing);
  }

  ScriptDocument doc;
  doc.log_line = session.log_line().text();
  doc.title = parse_title(resolve_slot_text(session.title_slot()));
  doc.characters = parse_characters(resolve_slot_text(session.character_slot()));
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ScriptScene s;
    s.scene = scenes[i];
    const auto& place = session.slot(SlotAddress::location_of(text::trim_copy(scenes[i].place)));
    s.location_description = text::unwrap_lines(resolve_slot_text(place));
    s.dialogue = parse_dialogue(resolve_slot_text(session.dialogue_slots()[i]));
    doc.scenes.push_back(std::move(s));
  }
  for (const auto& a : session.addresses()) doc.provenance.emplace_back(a.str(), session.slot(a).provenance);
  return doc;
}

std::string export_plaintext(const ScriptDocument& doc) {
  std::string out = doc.title + "\n\nCHARACTERS\n";
  for (const auto& c : doc.characters) out += c.name + ": " + c.description + "\n";
  for (std::size_t i = 0; i < doc.scenes.size(); ++i) {
    const auto& s = doc.scenes[i];
    out += "\nSCENE " + std::to_string(i + 1) + " \xE2\x80\x94 " + s.scene.place + " (" + s.scene.plot_element +
           ")\n";
    out += s.location_description + "\n";
    out += "[" + s.scene.beat + "]\n";
    if (!s.dialogue.empty()) out += "\n" + render_dialogue(s.dialogue);
  }
  return out;
}

namespace {

template <class F>
auto try_parse(const GenerationSlot& slot, F&& parse) -> std::optional<decltype(parse(std::string{}))> {
  if (!slot.resolvable()) return std::nullopt;
  try {
    return parse(resolve_slot_text(slot));
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string missing(const std::string& address) { return "[" + address + " missing]"; }

}  // namespace

std::string export_draft(const StorySession& session) {
  ScriptDocument doc;
  auto title = try_parse(session.title_slot(), [](const std::string& t) { return parse_title(t); });
  doc.title = title.value_or(missing("title"));
  auto cast = try_parse(session.character_slot(), [](const std::string& t) { return parse_characters(t); });
  if (cast) doc.characters = std::move(*cast);

  const auto scenes = session.scenes();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ScriptScene s;
    s.scene = scenes[i];
    const auto place = text::trim_copy(scenes[i].place);
    const auto* loc = session.find_slot(SlotAddress::location_of(place));
    s.location_description = loc && loc->resolvable() ? text::unwrap_lines(resolve_slot_text(*loc))
                                                      : missing(SlotAddress::location_of(place).str());
    const auto& d = session.dialogue_slots()[i];
    if (d.resolvable()) {
      s.dialogue = parse_dialogue(resolve_slot_text(d));
    } else {
      s.dialogue.push_back({"", missing(SlotAddress::dialogue(i + 1).str()), ""});
    }
    doc.scenes.push_back(std::move(s));
  }

  auto out = export_plaintext(doc);
  if (!cast) {
    const std::string header = "CHARACTERS\n";
    out.insert(out.find(header) + header.size(), missing("characters") + "\n");
  }
  if (scenes.empty()) out += "\n" + missing("plot") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json sampling_to_json(const SamplingConfig& c) {
  return {{"nucleus_mass", c.nucleus_mass},
          {"temperature", c.temperature},
          {"max_tokens", c.max_tokens},
          {"seed", c.seed}};
}

SamplingConfig sampling_from_json(const json& j) {
  SamplingConfig c;
  c.nucleus_mass = j.at("nucleus_mass").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json candidate_to_json(const Candidate& c) {
  return {{"raw_text", c.raw_text},
          {"seed", c.seed},
          {"sampling", sampling_to_json(c.sampling)},
          {"prompt_hash", c.prompt_hash},
          {"created_at", c.created_at},
          {"loop_flagged", c.loop_flagged},
          {"max_block_repeats", c.max_block_repeats}};
}

Candidate candidate_from_json(const json& j) {
  Candidate c;
  c.raw_text = j.at("raw_text").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.sampling = sampling_from_json(j.at("sampling"));
  c.prompt_hash = j.at("prompt_hash").get<std::string>();
  c.created_at = j.at("created_at").get<Timestamp>();
  c.loop_flagged = j.at("loop_flagged").get<bool>();
  c.max_block_repeats = j.at("max_block_repeats").get<int>();
  return c;
}

template <class T>
json optional_to_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

}  // namespace

json slot_to_json(const GenerationSlot& slot) {
  json candidates = json::array();
  for (const auto& c : slot.candidates) candidates.push_back(candidate_to_json(c));
  return {{"kind", std::string(to_string(slot.kind))},
          {"key", slot.key},
          {"candidates", std::move(candidates)},
          {"accepted", optional_to_json(slot.accepted)},
          {"edited_text", optional_to_json(slot.edited_text)},
          {"provenance", std::string(to_string(slot.provenance))},
          {"stale", slot.stale}};
}

json event_to_json(const SessionEvent& e) {
  struct V {
    json operator()(const SessionCreated& e) const {
      return {{"id", e.id}, {"log_line", e.log_line}, {"prompt_set", e.prompt_set}, {"at", e.at}};
    }
    json operator()(const CandidateAdded& e) const {
      json attempts = json::array();
      for (const auto& a : e.attempts) attempts.push_back({{"seed", a.seed}, {"max_block_repeats", a.max_block_repeats}});
      return {{"address", e.address.str()},
              {"candidate", candidate_to_json(e.candidate)},
              {"origin", e.origin},
              {"attempts", std::move(attempts)},
              {"at", e.at}};
    }
    json operator()(const CandidateAccepted& e) const {
      return {{"address", e.address.str()}, {"index", e.index}, {"at", e.at}};
    }
    json operator()(const SlotEdited& e) const {
      json retired = json::array();
      for (const auto& r : e.retired) {
        retired.push_back({{"address", r.address}, {"text", optional_to_json(r.text)}, {"candidates", r.candidates}});
      }
      return {{"address", e.address.str()},
              {"text", e.text},
              {"provenance", std::string(to_string(e.provenance))},
              {"retired", std::move(retired)},
              {"at", e.at}};
    }
  };
  auto j = std::visit(V{}, e);
  j["type"] = std::string(event_type(e));
  return j;
}

SessionEvent event_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  const auto at = j.at("at").get<Timestamp>();
  if (type == "session_created") {
    return SessionCreated{j.at("id").get<std::string>(), j.at("log_line").get<std::string>(),
                          j.at("prompt_set").get<std::string>(), at};
  }
  if (type == "candidate_added") {
    CandidateAdded e;
    e.address = SlotAddress::parse(j.at("address").get<std::string>());
    e.candidate = candidate_from_json(j.at("candidate"));
    e.origin = j.at("origin").get<std::string>();
    for (const auto& a : j.at("attempts")) {
      e.attempts.push_back({a.at("seed").get<std::uint64_t>(), a.at("max_block_repeats").get<int>()});
    }
    e.at = at;
    return e;
  }
  if (type == "candidate_accepted") {
    return CandidateAccepted{SlotAddress::parse(j.at("address").get<std::string>()),
                             j.at("index").get<std::size_t>(), at};
  }
  if (type == "slot_edited") {
    SlotEdited e;
    e.address = SlotAddress::parse(j.at("address").get<std::string>());
    e.text = j.at("text").get<std::string>();
    e.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    for (const auto& r : j.at("retired")) {
      e.retired.push_back({r.at("address").get<std::string>(), optional_from_json<std::string>(r.at("text")),
                           r.at("candidates").get<std::size_t>()});
    }
    e.at = at;
    return e;
  }
  throw Error(ErrorCode::SerializationError, "unknown event type '" + type + "'");
}

json session_to_json(const StorySession& session) {
  json locations = json::array();
  for (const auto& l : session.location_slots()) locations.push_back({{"name", l.name}, {"slot", slot_to_json(l.slot)}});
  json dialogues = json::array();
  for (const auto& d : session.dialogue_slots()) dialogues.push_back(slot_to_json(d));
  json history = json::array();
  for (const auto& e : session.history()) history.push_back(event_to_json(e));
  return {{"format_version", kSessionFormatVersion},
          {"id", session.id()},
          {"log_line", session.log_line().text()},
          {"prompt_set", session.prompt_set_name()},
          {"slots",
           {{"title", slot_to_json(session.title_slot())},
            {"characters", slot_to_json(session.character_slot())},
            {"plot", slot_to_json(session.plot_slot())},
            {"locations", std::move(locations)},
            {"dialogues", std::move(dialogues)}}},
          {"history", std::move(history)}};
}

StorySession session_from_json(const json& j) {
  int version = 0;
  try {
    version = j.at("format_version").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SerializationError, std::string("session file has no format version: ") + e.what());
  }
  if (version > kSessionFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                "session format " + std::to_string(version) + " is newer than supported " +
                    std::to_string(kSessionFormatVersion));
  }
  if (version < 1) throw Error(ErrorCode::SerializationError, "invalid format version");

  StorySession s;
  try {
    std::vector<SessionEvent> events;
    for (const auto& e : j.at("history")) events.push_back(event_from_json(e));
    s = StorySession::replay(events);
    auto rebuilt = session_to_json(s);
    if (rebuilt.at("slots") != j.at("slots") || rebuilt.at("id") != j.at("id") ||
        rebuilt.at("log_line") != j.at("log_line") || rebuilt.at("prompt_set") != j.at("prompt_set")) {
      throw Error(ErrorCode::SerializationError, "stored slots disagree with replayed history");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SerializationError, std::string("malformed session: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SerializationError) throw;
    throw Error(ErrorCode::SerializationError, std::string("history does not replay: ") + e.what());
  }
  return s;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rng() % 1000000);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::SerializationError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::SerializationError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::SerializationError, "cannot replace " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_session(const std::filesystem::path& path, const StorySession& session) {
  write_file_atomic(path, session_to_json(session).dump(2) + "\n");
}

StorySession load_session(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SerializationError, "cannot parse " + path.string() + ": " + e.what(), path.string());
  }
  return session_from_json(j);
}

}  // namespace dramaturg
