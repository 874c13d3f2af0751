#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dramaturg/story_model.hpp"

namespace dramaturg {

enum class PromptFamily { Title, Character, Plot, Location, Dialogue };

std::string_view to_string(PromptFamily f);
PromptFamily prompt_family_from_string(std::string_view s);

/// One few-shot prefix with `<UPPER_SNAKE>` placeholders.
struct TemplateText {
  std::string body;
  /// Repeatable placeholder name -> joiner placed between expansions.
  std::map<std::string, std::string> repeatable;

  /// Distinct placeholder names in order of first appearance.
  std::vector<std::string> placeholders() const;

  friend bool operator==(const TemplateText&, const TemplateText&) = default;
};

struct PromptSet {
  std::string name;
  TemplateText title;
  TemplateText character;
  TemplateText plot;
  TemplateText location;
  TemplateText dialogue;

  const TemplateText& family(PromptFamily f) const;
};

struct Prompt {
  std::string text;
  PromptFamily family = PromptFamily::Title;
  std::vector<std::string> stop_markers{std::string(kEndMarker)};

  /// SHA-256 of text.
  std::string digest() const;
};

/// Parses the sectioned `.promptset` grammar:
///
///   # comment lines before the first section
///   @name medea
///   @family title
///   ...verbatim body...
///   @family character
///   @repeat CHARACTER_DESCRIPTION newline
///
/// The line break ending the last body line belongs to the next header, so a
/// body ends without a newline unless followed by an empty line.
/// Throws ParseError, UnknownPlaceholder, MissingPlaceholder or MissingFamily.
PromptSet load_prompt_set(std::istream& in, std::string_view default_name = {});
PromptSet load_prompt_set_file(const std::filesystem::path& path);

/// `<dir>/<name>.promptset`; throws InvalidInput when absent.
PromptSet load_named_prompt_set(const std::filesystem::path& dir, std::string_view name);
std::vector<std::string> list_prompt_sets(const std::filesystem::path& dir);

/// Text a character contributes to plot and dialogue prompts.
std::string character_line(const CharacterSpec& c);

Prompt render_title_prompt(const PromptSet& set, const LogLine& log_line);
Prompt render_character_prompt(const PromptSet& set, const LogLine& log_line);
Prompt render_plot_prompt(const PromptSet& set, const LogLine& log_line,
                          std::span<const CharacterSpec> characters);
Prompt render_location_prompt(const PromptSet& set, const LogLine& log_line,
                              std::string_view location_name);
Prompt render_dialogue_prompt(const PromptSet& set, const LogLine& log_line, const Scene& scene,
                              std::optional<std::string_view> previous_beat,
                              std::string_view location_description,
                              std::span<const CharacterSpec> characters);

/// Characters whose name is a case-sensitive substring of beat, input order kept.
std::vector<CharacterSpec> select_characters_for_beat(std::span<const CharacterSpec> characters,
                                                      std::string_view beat);

}  // namespace dramaturg
