#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dramaturg/story_model.hpp"

// Parsers for the tagged text each prompt family elicits, plus serializers
// producing text the parsers accept.
namespace dramaturg {

/// Trimmed single-line title. Throws EmptyTitle.
std::string parse_title(std::string_view raw);

/// `<character>NAME <description>DESC<stop>` units. A final unit may lack
/// `<stop>`. Duplicate names (case-insensitive) keep the first. Throws
/// NoCharactersFound.
std::vector<CharacterSpec> parse_characters(std::string_view raw);
std::string render_characters(std::span<const CharacterSpec> characters);

/// `Place:` / `Plot element:` / `Beat:` triples. Beat continuation lines are
/// joined with single spaces; `Scene N` header lines are skipped; anything
/// after `<end>` is ignored. Throws NoScenesFound or MalformedScene (subject
/// is the 1-based scene ordinal).
std::vector<Scene> parse_plot(std::string_view raw);
std::string render_plot(std::span<const Scene> scenes);

struct DialogueLine {
  std::string speaker;  // empty for a pure stage direction
  std::optional<std::string> stage_direction;
  std::string utterance;

  friend bool operator==(const DialogueLine&, const DialogueLine&) = default;
};

/// Speaker cues are all-caps lines (optionally followed by a parenthetical)
/// at the start of a paragraph. Leading parenthesized lines of a turn become
/// its stage direction; parenthesized paragraphs outside a turn, and any
/// uncued text, become entries with an empty speaker.
std::vector<DialogueLine> parse_dialogue(std::string_view raw);

/// Screenplay layout of dialogue turns: cue line, then indented lines.
std::string render_dialogue(std::span<const DialogueLine> lines);

}  // namespace dramaturg
