#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dramaturg/parsing.hpp"
#include "dramaturg/story_model.hpp"

namespace dramaturg {

struct ScriptScene {
  Scene scene;
  std::string location_description;
  std::vector<DialogueLine> dialogue;
};

struct ScriptDocument {
  std::string title;
  std::vector<CharacterSpec> characters;
  std::vector<ScriptScene> scenes;
  std::string log_line;
  std::vector<std::pair<std::string, Provenance>> provenance;
};

/// Throws IncompleteSession with the missing slot addresses in Error::items().
ScriptDocument assemble_script(const StorySession& session);

/// Plain-text screenplay:
///
///   TITLE
///
///   CHARACTERS
///   Name: description
///
///   SCENE n <U+2014> place (plot element)
///   location description
///   [beat]
///
///   SPEAKER
///     (direction)
///     utterance
std::string export_plaintext(const ScriptDocument& doc);

/// Same layout for a possibly incomplete session: unresolved or unparseable
/// slots render as `[<address> missing]`. Equals
/// export_plaintext(assemble_script(s)) once the session is complete.
std::string export_draft(const StorySession& session);

inline constexpr int kSessionFormatVersion = 1;

nlohmann::json session_to_json(const StorySession& session);
/// Throws SerializationError or VersionMismatch.
StorySession session_from_json(const nlohmann::json& j);

/// Atomic write (temp file + rename).
void save_session(const std::filesystem::path& path, const StorySession& session);
StorySession load_session(const std::filesystem::path& path);

nlohmann::json event_to_json(const SessionEvent& e);
SessionEvent event_from_json(const nlohmann::json& j);
nlohmann::json slot_to_json(const GenerationSlot& slot);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace dramaturg
