#include "dramaturg/prompt_forge.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include "dramaturg/error.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

namespace {

constexpr std::string_view kCharacterDescription = "CHARACTER_DESCRIPTION";

constexpr std::array<PromptFamily, 5> kFamilies = {PromptFamily::Title, PromptFamily::Character,
                                                   PromptFamily::Plot, PromptFamily::Location,
                                                   PromptFamily::Dialogue};

std::vector<std::string_view> required_placeholders(PromptFamily f) {
  switch (f) {
    case PromptFamily::Title:
    case PromptFamily::Character: return {"LOG_LINE"};
    case PromptFamily::Plot: return {"LOG_LINE", kCharacterDescription};
    case PromptFamily::Location: return {"LOG_LINE", "LOCATION_NAME"};
    case PromptFamily::Dialogue:
      return {"PLACE_NAME", "PLACE_DESCRIPTION", kCharacterDescription, "PLOT_ELEMENT",
              "LOG_LINE", "PREVIOUS_BEAT", "BEAT"};
  }
  return {};
}

bool is_upper_snake(std::string_view s) {
  if (s.empty() || !std::isupper(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isupper(u) || std::isdigit(u) || c == '_';
  });
}

struct Token {
  std::size_t pos;
  std::size_t len;
  std::string_view name;
};

// `<UPPER_SNAKE>` tokens in order.
std::vector<Token> scan_placeholders(std::string_view body) {
  std::vector<Token> out;
  std::size_t i = 0;
  while ((i = body.find('<', i)) != std::string_view::npos) {
    auto close = body.find('>', i + 1);
    if (close == std::string_view::npos) break;
    auto name = body.substr(i + 1, close - i - 1);
    if (is_upper_snake(name)) {
      out.push_back({i, close - i + 1, name});
      i = close + 1;
    } else {
      ++i;
    }
  }
  return out;
}

using Values = std::vector<std::pair<std::string_view, std::vector<std::string>>>;

std::string substitute(const TemplateText& t, const Values& values) {
  std::string out;
  std::size_t last = 0;
  for (const auto& tok : scan_placeholders(t.body)) {
    out.append(t.body, last, tok.pos - last);
    auto it = std::find_if(values.begin(), values.end(), [&](const auto& v) { return v.first == tok.name; });
    if (it == values.end()) {
      throw Error(ErrorCode::UnknownPlaceholder, "no value for <" + std::string(tok.name) + ">",
                  std::string(tok.name));
    }
    auto rep = t.repeatable.find(std::string(tok.name));
    const std::string joiner = rep != t.repeatable.end() ? rep->second : std::string();
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      if (k > 0) out += joiner;
      out += it->second[k];
    }
    last = tok.pos + tok.len;
  }
  out.append(t.body, last, std::string::npos);
  return out;
}

void validate_template(PromptFamily family, const TemplateText& t) {
  const auto required = required_placeholders(family);
  const auto present = t.placeholders();
  for (const auto& p : present) {
    if (std::find(required.begin(), required.end(), p) == required.end()) {
      throw Error(ErrorCode::UnknownPlaceholder,
                  "unknown placeholder <" + p + "> in " + std::string(to_string(family)) + " template", p);
    }
  }
  for (auto r : required) {
    if (std::find(present.begin(), present.end(), r) == present.end()) {
      throw Error(ErrorCode::MissingPlaceholder,
                  std::string(to_string(family)) + " template lacks <" + std::string(r) + ">", std::string(r));
    }
  }
  for (const auto& [name, joiner] : t.repeatable) {
    if (name != kCharacterDescription) {
      throw Error(ErrorCode::ParseError, "placeholder <" + name + "> cannot repeat", name);
    }
  }
  const bool needs_repeat = std::find(required.begin(), required.end(), kCharacterDescription) != required.end();
  if (needs_repeat && !t.repeatable.count(std::string(kCharacterDescription))) {
    throw Error(ErrorCode::ParseError,
                std::string(to_string(family)) + " template needs '@repeat CHARACTER_DESCRIPTION'");
  }
  if (t.body.find(kEndMarker) == std::string::npos) {
    throw Error(ErrorCode::ParseError,
                std::string(to_string(family)) + " template has no <end>-terminated example");
  }
}

}  // namespace

std::string_view to_string(PromptFamily f) {
  switch (f) {
    case PromptFamily::Title: return "title";
    case PromptFamily::Character: return "character";
    case PromptFamily::Plot: return "plot";
    case PromptFamily::Location: return "location";
    case PromptFamily::Dialogue: return "dialogue";
  }
  return "?";
}

PromptFamily prompt_family_from_string(std::string_view s) {
  for (auto f : kFamilies) {
    if (to_string(f) == s) return f;
  }
  throw Error(ErrorCode::ParseError, "unknown prompt family '" + std::string(s) + "'", std::string(s));
}

std::vector<std::string> TemplateText::placeholders() const {
  std::vector<std::string> out;
  for (const auto& tok : scan_placeholders(body)) {
    std::string name(tok.name);
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
  }
  return out;
}

const TemplateText& PromptSet::family(PromptFamily f) const {
  switch (f) {
    case PromptFamily::Title: return title;
    case PromptFamily::Character: return character;
    case PromptFamily::Plot: return plot;
    case PromptFamily::Location: return location;
    case PromptFamily::Dialogue: return dialogue;
  }
  return title;
}

std::string Prompt::digest() const { return text::sha256_hex(text); }

PromptSet load_prompt_set(std::istream& in, std::string_view default_name) {
  std::stringstream buf;
  buf << in.rdbuf();
  std::string content = buf.str();
  if (in.bad()) throw Error(ErrorCode::ParseError, "cannot read prompt set");

  std::vector<std::string_view> lines;
  {
    std::string_view rest = content;
    while (true) {
      auto nl = rest.find('\n');
      if (nl == std::string_view::npos) {
        if (!rest.empty()) lines.push_back(rest);
        break;
      }
      lines.push_back(rest.substr(0, nl));
      rest.remove_prefix(nl + 1);
    }
  }

  struct Section {
    std::vector<std::string> body;
    std::map<std::string, std::string> repeat_joiners;  // "" = infer
    bool seen = false;
  };
  std::array<Section, 5> sections;
  std::optional<std::size_t> current;
  std::string name(default_name);

  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    auto line = lines[ln];
    const auto where = " (line " + std::to_string(ln + 1) + ")";
    const bool directive = line.size() > 1 && line[0] == '@' && std::isalpha(static_cast<unsigned char>(line[1]));
    if (!directive) {
      if (!current) {
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        throw Error(ErrorCode::ParseError, "text before the first @family section" + where);
      }
      if (text::starts_with(line, "@@")) line.remove_prefix(1);
      sections[*current].body.emplace_back(line);
      continue;
    }

    std::istringstream words{std::string(line.substr(1))};
    std::string keyword, arg, extra, trailing;
    words >> keyword >> arg >> extra >> trailing;
    if (keyword == "name") {
      if (arg.empty() || !extra.empty()) throw Error(ErrorCode::ParseError, "@name takes one argument" + where);
      name = arg;
    } else if (keyword == "family") {
      if (arg.empty() || !extra.empty()) throw Error(ErrorCode::ParseError, "@family takes one argument" + where);
      auto idx = static_cast<std::size_t>(prompt_family_from_string(arg));
      if (sections[idx].seen) throw Error(ErrorCode::ParseError, "duplicate @family " + arg + where);
      sections[idx].seen = true;
      current = idx;
    } else if (keyword == "repeat") {
      if (!current) throw Error(ErrorCode::ParseError, "@repeat outside a section" + where);
      if (!is_upper_snake(arg) || !trailing.empty()) throw Error(ErrorCode::ParseError, "malformed @repeat" + where);
      std::string joiner;
      if (extra == "newline") {
        joiner = "\n";
      } else if (extra == "space") {
        joiner = " ";
      } else if (!extra.empty()) {
        throw Error(ErrorCode::ParseError, "unknown @repeat joiner '" + extra + "'" + where);
      }
      sections[*current].repeat_joiners[arg] = joiner;
    } else {
      throw Error(ErrorCode::ParseError, "unknown directive @" + keyword + where);
    }
  }

  PromptSet set;
  set.name = name;
  for (auto f : kFamilies) {
    auto& sec = sections[static_cast<std::size_t>(f)];
    if (!sec.seen) {
      throw Error(ErrorCode::MissingFamily, "prompt set lacks the " + std::string(to_string(f)) + " family",
                  std::string(to_string(f)));
    }
    TemplateText t;
    for (std::size_t i = 0; i < sec.body.size(); ++i) {
      if (i > 0) t.body += '\n';
      t.body += sec.body[i];
    }
    for (auto& [ph, joiner] : sec.repeat_joiners) {
      if (joiner.empty()) {
        // Alone on its line: one expansion per line. Otherwise space-separated.
        const auto token = "<" + ph + ">";
        const bool alone = std::any_of(sec.body.begin(), sec.body.end(),
                                       [&](const std::string& l) { return text::trim(l) == token; });
        joiner = alone ? "\n" : " ";
      }
      if (t.body.find("<" + ph + ">") == std::string::npos) {
        throw Error(ErrorCode::ParseError, "@repeat " + ph + " names a placeholder the body lacks", ph);
      }
      t.repeatable[ph] = joiner;
    }
    validate_template(f, t);
    switch (f) {
      case PromptFamily::Title: set.title = std::move(t); break;
      case PromptFamily::Character: set.character = std::move(t); break;
      case PromptFamily::Plot: set.plot = std::move(t); break;
      case PromptFamily::Location: set.location = std::move(t); break;
      case PromptFamily::Dialogue: set.dialogue = std::move(t); break;
    }
  }
  if (set.name.empty()) throw Error(ErrorCode::ParseError, "prompt set has no name");
  return set;
}

PromptSet load_prompt_set_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open prompt set " + path.string());
  return load_prompt_set(in, path.stem().string());
}

PromptSet load_named_prompt_set(const std::filesystem::path& dir, std::string_view name) {
  const bool simple = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
  if (!simple) throw Error(ErrorCode::InvalidInput, "invalid prompt set name '" + std::string(name) + "'");
  auto path = dir / (std::string(name) + ".promptset");
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::InvalidInput, "unknown prompt set '" + std::string(name) + "'", std::string(name));
  }
  return load_prompt_set_file(path);
}

std::vector<std::string> list_prompt_sets(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".promptset") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string character_line(const CharacterSpec& c) {
  if (text::starts_with(c.description, c.name)) return c.description;
  return c.name + ": " + c.description;
}

namespace {

std::vector<std::string> character_lines(std::span<const CharacterSpec> characters) {
  std::vector<std::string> out;
  out.reserve(characters.size());
  for (const auto& c : characters) out.push_back(character_line(c));
  return out;
}

}  // namespace

Prompt render_title_prompt(const PromptSet& set, const LogLine& log_line) {
  return {substitute(set.title, {{"LOG_LINE", {log_line.text()}}}), PromptFamily::Title};
}

Prompt render_character_prompt(const PromptSet& set, const LogLine& log_line) {
  return {substitute(set.character, {{"LOG_LINE", {log_line.text()}}}), PromptFamily::Character};
}

Prompt render_plot_prompt(const PromptSet& set, const LogLine& log_line,
                          std::span<const CharacterSpec> characters) {
  if (characters.empty()) throw Error(ErrorCode::EmptyCharacterList, "plot prompt needs at least one character");
  return {substitute(set.plot, {{"LOG_LINE", {log_line.text()}},
                                {kCharacterDescription, character_lines(characters)}}),
          PromptFamily::Plot};
}

Prompt render_location_prompt(const PromptSet& set, const LogLine& log_line, std::string_view location_name) {
  if (text::trim(location_name).empty()) throw Error(ErrorCode::InvalidInput, "location name is empty");
  return {substitute(set.location, {{"LOG_LINE", {log_line.text()}},
                                    {"LOCATION_NAME", {std::string(location_name)}}}),
          PromptFamily::Location};
}

Prompt render_dialogue_prompt(const PromptSet& set, const LogLine& log_line, const Scene& scene,
                              std::optional<std::string_view> previous_beat,
                              std::string_view location_description,
                              std::span<const CharacterSpec> characters) {
  if (characters.empty()) {
    spdlog::warn("dialogue prompt for '{}' has no characters named in its beat", scene.place);
  }
  return {substitute(set.dialogue,
                     {{"PLACE_NAME", {scene.place}},
                      {"PLACE_DESCRIPTION", {std::string(location_description)}},
                      {kCharacterDescription, character_lines(characters)},
                      {"PLOT_ELEMENT", {scene.plot_element}},
                      {"LOG_LINE", {log_line.text()}},
                      {"PREVIOUS_BEAT", {std::string(previous_beat.value_or(""))}},
                      {"BEAT", {scene.beat}}}),
          PromptFamily::Dialogue};
}

std::vector<CharacterSpec> select_characters_for_beat(std::span<const CharacterSpec> characters,
                                                      std::string_view beat) {
  std::vector<CharacterSpec> out;
  for (const auto& c : characters) {
    if (!c.name.empty() && beat.find(c.name) != std::string_view::npos) out.push_back(c);
  }
  return out;
}

}  // namespace dramaturg
