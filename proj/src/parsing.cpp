#include "dramaturg/parsing.hpp"

#include <cctype>
#include <set>

#include "dramaturg/error.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

namespace {

std::string_view before_end(std::string_view raw) {
  auto pos = raw.find(kEndMarker);
  return pos == std::string_view::npos ? raw : raw.substr(0, pos);
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_scene_header(std::string_view t) {
  if (!text::starts_with(t, "Scene ")) return false;
  auto rest = t.substr(6);
  if (rest.empty()) return false;
  for (char c : rest) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// "(...)" whose opening parenthesis is closed only by the final character.
bool fully_parenthesized(std::string_view t) {
  if (t.size() < 2 || t.front() != '(' || t.back() != ')') return false;
  int depth = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '(') ++depth;
    if (t[i] == ')') {
      --depth;
      if (depth == 0 && i + 1 != t.size()) return false;
    }
  }
  return depth == 0;
}

int paren_balance(std::string_view t) {
  int depth = 0;
  for (char c : t) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
  }
  return depth;
}

bool is_cue_name(std::string_view name) {
  if (name.empty() || name.size() > 40) return false;
  bool has_upper = false;
  for (char c : name) {
    auto u = static_cast<unsigned char>(c);
    if (std::isupper(u)) {
      has_upper = true;
    } else if (!(std::isdigit(u) || c == ' ' || c == '.' || c == '\'' || c == '-' || c == '&')) {
      return false;
    }
  }
  return has_upper;
}

// Splits "NAME" or "NAME (direction)" into its parts.
std::optional<std::pair<std::string, std::optional<std::string>>> parse_cue(std::string_view t) {
  auto open = t.find('(');
  if (open != std::string_view::npos && open > 0 && t.back() == ')') {
    auto name = text::trim(t.substr(0, open));
    auto paren = t.substr(open);
    if (is_cue_name(name) && fully_parenthesized(paren)) {
      return std::pair{std::string(name), std::optional<std::string>(std::string(paren))};
    }
    return std::nullopt;
  }
  if (is_cue_name(t)) return std::pair{std::string(t), std::optional<std::string>{}};
  return std::nullopt;
}

void append_line(std::string& dst, std::string_view line) {
  if (!dst.empty()) dst += '\n';
  dst += line;
}

}  // namespace

std::string parse_title(std::string_view raw) {
  for (auto line : text::split_lines(before_end(raw))) {
    auto t = text::trim(line);
    if (!t.empty()) return std::string(t);
  }
  throw Error(ErrorCode::EmptyTitle, "generated title is empty");
}

std::vector<CharacterSpec> parse_characters(std::string_view raw) {
  static constexpr std::string_view kCharacter = "<character>";
  static constexpr std::string_view kDescription = "<description>";

  const auto body = before_end(raw);
  std::vector<CharacterSpec> out;
  std::set<std::string> seen;

  auto pos = body.find(kCharacter);
  while (pos != std::string_view::npos) {
    const auto start = pos + kCharacter.size();
    const auto next = body.find(kCharacter, start);
    auto unit = body.substr(start, next == std::string_view::npos ? std::string_view::npos : next - start);
    pos = next;

    auto stop = unit.find(kStopMarker);
    if (stop != std::string_view::npos) unit = unit.substr(0, stop);
    auto desc_pos = unit.find(kDescription);
    if (desc_pos == std::string_view::npos) continue;

    auto name = text::trim(unit.substr(0, desc_pos));
    auto description = text::unwrap_lines(unit.substr(desc_pos + kDescription.size()));
    if (name.empty() || name.find('\n') != std::string_view::npos || description.empty()) continue;
    if (!seen.insert(lower_ascii(name)).second) continue;
    out.push_back({std::string(name), std::move(description)});
  }
  if (out.empty()) throw Error(ErrorCode::NoCharactersFound, "no <character> entries found");
  return out;
}

std::string render_characters(std::span<const CharacterSpec> characters) {
  std::string out;
  for (const auto& c : characters) {
    out += "<character>" + c.name + " <description>" + c.description + "<stop>\n";
  }
  return out;
}

std::vector<Scene> parse_plot(std::string_view raw) {
  struct Partial {
    std::optional<std::string> place, element, beat;
  };
  std::vector<Partial> partials;
  bool in_beat = false;

  auto current = [&]() -> Partial& {
    if (partials.empty()) partials.emplace_back();
    return partials.back();
  };

  for (auto line : text::split_lines(before_end(raw))) {
    auto t = text::trim(line);
    if (text::starts_with(t, "Place:")) {
      partials.emplace_back();
      partials.back().place = text::trim_copy(t.substr(6));
      in_beat = false;
    } else if (text::starts_with(t, "Plot element:")) {
      auto& p = current();
      if (p.element) partials.emplace_back();
      current().element = text::trim_copy(t.substr(13));
      in_beat = false;
    } else if (text::starts_with(t, "Beat:")) {
      auto& p = current();
      if (p.beat) partials.emplace_back();
      current().beat = text::trim_copy(t.substr(5));
      in_beat = true;
    } else if (is_scene_header(t)) {
      in_beat = false;
    } else if (!t.empty() && in_beat) {
      auto& beat = *current().beat;
      if (!beat.empty()) beat += ' ';
      beat += t;
    }
  }

  if (partials.empty()) throw Error(ErrorCode::NoScenesFound, "no Place:/Plot element:/Beat: scenes found");

  std::vector<Scene> scenes;
  for (std::size_t i = 0; i < partials.size(); ++i) {
    const auto& p = partials[i];
    if (!p.place || p.place->empty() || !p.element || !p.beat || p.beat->empty()) {
      std::string missing = !p.place || p.place->empty() ? "Place" : !p.element ? "Plot element" : "Beat";
      throw Error(ErrorCode::MalformedScene,
                  "scene " + std::to_string(i + 1) + " is missing its " + missing + " field",
                  std::to_string(i + 1));
    }
    scenes.push_back({*p.place, *p.element, *p.beat});
  }
  return scenes;
}

std::string render_plot(std::span<const Scene> scenes) {
  std::string out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (i > 0) out += '\n';
    out += "Place: " + scenes[i].place + "\nPlot element: " + scenes[i].plot_element + "\nBeat: " +
           scenes[i].beat + "\n";
  }
  return out;
}

std::vector<DialogueLine> parse_dialogue(std::string_view raw) {
  enum class State { None, Turn, Direction, Free };

  std::vector<DialogueLine> out;
  State state = State::None;
  DialogueLine cur;
  bool has_utterance = false;
  int depth = 0;

  auto close = [&] {
    if (state != State::None) out.push_back(std::move(cur));
    cur = {};
    state = State::None;
    has_utterance = false;
    depth = 0;
  };

  for (auto line : text::split_lines(before_end(raw))) {
    auto t = text::trim(line);
    if (t.empty()) {
      close();
      continue;
    }
    switch (state) {
      case State::None:
        if (auto cue = parse_cue(t)) {
          state = State::Turn;
          cur.speaker = cue->first;
          cur.stage_direction = cue->second;
        } else if (t.front() == '(') {
          state = State::Direction;
          cur.stage_direction = std::string(t);
          depth = paren_balance(t);
          if (depth <= 0) close();
        } else {
          state = State::Free;
          cur.stage_direction = std::string(t);
        }
        break;
      case State::Turn:
        if (!has_utterance && fully_parenthesized(t)) {
          if (!cur.stage_direction) cur.stage_direction.emplace();
          append_line(*cur.stage_direction, t);
        } else {
          append_line(cur.utterance, t);
          has_utterance = true;
        }
        break;
      case State::Direction:
        append_line(*cur.stage_direction, t);
        depth += paren_balance(t);
        if (depth <= 0) close();
        break;
      case State::Free:
        append_line(*cur.stage_direction, t);
        break;
    }
  }
  close();
  return out;
}

std::string render_dialogue(std::span<const DialogueLine> lines) {
  std::string out;
  auto indented = [&](std::string_view block) {
    for (auto l : text::split_lines(block)) {
      out += "  ";
      out += l;
      out += '\n';
    }
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& d = lines[i];
    if (i > 0) out += '\n';
    if (d.speaker.empty()) {
      if (d.stage_direction) out += *d.stage_direction + "\n";
      if (!d.utterance.empty()) out += d.utterance + "\n";
      continue;
    }
    out += d.speaker + "\n";
    if (d.stage_direction) indented(*d.stage_direction);
    if (!d.utterance.empty()) indented(d.utterance);
  }
  return out;
}

}  // namespace dramaturg
