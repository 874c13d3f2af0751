#include <doctest.h>

#include <random>

#include "dramaturg/error.hpp"
#include "dramaturg/lm_gateway.hpp"
#include "dramaturg/parsing.hpp"
#include "support.hpp"

using namespace dramaturg;

namespace {

std::string until_end(std::string_view s) {
  const std::vector<std::string> markers{"<end>"};
  return truncate_at_marker(s, markers);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidInput;
}

}  // namespace

TEST_CASE("parse_title") {
  CHECK(parse_title("The Day The Pool Pit Burned Down") == "The Day The Pool Pit Burned Down");
  CHECK(parse_title(until_end(test::teddy("title.txt"))) == "The Day The Pool Pit Burned Down");
  CHECK(parse_title("  T  \n") == "T");
  CHECK(parse_title("\n\nA Title.\nsecond line") == "A Title.");
  CHECK(code_of([] { parse_title(""); }) == ErrorCode::EmptyTitle);
  CHECK(code_of([] { parse_title(" \n\t"); }) == ErrorCode::EmptyTitle);
}

TEST_CASE("parse_characters on the Medea prefix example") {
  const auto body = test::prompt_set("medea").character.body;
  auto cast = parse_characters(until_end(body));
  REQUIRE(cast.size() == 5);
  CHECK(cast[0].name == "Medea");
  CHECK(text::starts_with(cast[0].description, "Medea is"));
}

TEST_CASE("parse_characters on the Teddy cast") {
  auto cast = parse_characters(until_end(test::teddy("characters.txt")));
  REQUIRE(cast.size() == 5);
  CHECK(cast[0].name == "Teddy");
  CHECK(cast[4].name == "D.J.");
  CHECK(cast[4].description == "The resident DJ at the club.");
}

TEST_CASE("parse_characters edge cases") {
  CHECK(code_of([] { parse_characters("Medea is a woman."); }) == ErrorCode::NoCharactersFound);
  CHECK(code_of([] { parse_characters(""); }) == ErrorCode::NoCharactersFound);

  auto dup = parse_characters(
      "<character>Teddy <description>First.<stop>\n<character>Teddy <description>Second.<stop>");
  REQUIRE(dup.size() == 1);
  CHECK(dup[0].description == "First.");

  // A final unit cut off before <stop> still counts.
  auto cut = parse_characters("<character>A <description>One.<stop>\n<character>B <description>Two and");
  REQUIRE(cut.size() == 2);
  CHECK(cut[1].description == "Two and");

  auto wrapped = parse_characters("<character>Jo <description>Line one\n  line two.<stop>");
  CHECK(wrapped[0].description == "Line one line two.");
}

TEST_CASE("render_characters round-trips") {
  std::vector<CharacterSpec> cast{{"Ann", "A pilot."}, {"Bo", "Her brother."}};
  CHECK(parse_characters(render_characters(cast)) == cast);
}

TEST_CASE("parse_plot on the Teddy plot") {
  auto scenes = parse_plot(test::teddy("plot.txt"));
  REQUIRE(scenes.size() == 8);
  CHECK(scenes[0].plot_element == "Exposition.");
  CHECK(scenes[0].place == "The Pool Pit.");
  CHECK(text::starts_with(scenes[0].beat, "Teddy is the manager"));
  CHECK(scenes[0].beat.find('\n') == std::string::npos);
  for (const auto& s : scenes) CHECK(s.canonical_element());
}

TEST_CASE("parse_plot on the Medea prefix scene list") {
  auto scenes = parse_plot(test::prompt_set("medea").plot.body);
  REQUIRE(scenes.size() == 9);
  CHECK(scenes.back().plot_element == "Denouement.");
}

TEST_CASE("parse_plot errors") {
  try {
    parse_plot("Place: X\nBeat: Y");
    FAIL("expected MalformedScene");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedScene);
    CHECK(e.subject() == "1");
  }
  try {
    parse_plot("Place: A\nPlot element: B.\nBeat: C.\n\nPlace: D\nBeat: E.");
    FAIL("expected MalformedScene");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedScene);
    CHECK(e.subject() == "2");
  }
  CHECK(code_of([] { parse_plot("No scenes here."); }) == ErrorCode::NoScenesFound);
  CHECK(code_of([] { parse_plot(""); }) == ErrorCode::NoScenesFound);

  auto s = parse_plot("Place: A\nPlot element: B.\nBeat: C.\n<end>\nPlace: junk");
  CHECK(s.size() == 1);
}

TEST_CASE("parse_plot inverts render_plot on random scene lists") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    std::vector<Scene> scenes;
    const auto n = 1 + rng() % 9;
    for (std::size_t k = 0; k < n; ++k) {
      scenes.push_back({test::random_sentence(rng, 1 + rng() % 3) + ".",
                        freytag_scaffold().labels[rng() % freytag_scaffold().labels.size()] + ".",
                        test::random_sentence(rng, 1 + rng() % 30) + "."});
    }
    REQUIRE(parse_plot(render_plot(scenes)) == scenes);
  }
}

TEST_CASE("parse_dialogue on Teddy scene 1") {
  auto lines = parse_dialogue(until_end(test::teddy("dialogue_1_seed1.txt")));
  REQUIRE(lines.size() > 4);
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
    CHECK(lines[i].speaker == (i % 2 == 0 ? "TEDDY" : "ROSIE"));
  }
  CHECK(lines[0].utterance == "He's a bit strange, old Teddy.");
  const auto& last = lines.back();
  CHECK(last.speaker.empty());
  REQUIRE(last.stage_direction);
  CHECK(text::starts_with(*last.stage_direction, "(TEDDY picks up"));

  // "(pause)" before ROSIE's line is that turn's direction.
  auto pause = std::find_if(lines.begin(), lines.end(),
                            [](const DialogueLine& d) { return d.stage_direction == std::optional<std::string>("(pause)"); });
  REQUIRE(pause != lines.end());
  CHECK(pause->speaker == "ROSIE");
  CHECK(pause->utterance == "I'll always love you.");
}

TEST_CASE("parse_dialogue fallbacks") {
  CHECK(parse_dialogue("").empty());
  auto free = parse_dialogue("hello there");
  REQUIRE(free.size() == 1);
  CHECK(free[0].speaker.empty());
  CHECK(free[0].stage_direction == std::optional<std::string>("hello there"));
}

TEST_CASE("render_dialogue output parses back to the same turns") {
  for (auto name : {"dialogue_1_seed1.txt", "dialogue_1_seed2.txt", "dialogue_2_seed1.txt"}) {
    auto lines = parse_dialogue(until_end(test::teddy(name)));
    CHECK(parse_dialogue(render_dialogue(lines)) == lines);
  }
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    std::vector<DialogueLine> lines;
    for (std::size_t k = 0, n = 1 + rng() % 6; k < n; ++k) {
      DialogueLine d;
      if (rng() % 5 == 0) {
        d.stage_direction = "(" + test::random_sentence(rng, 1 + rng() % 5) + ")";
      } else {
        d.speaker = text::trim_copy(test::random_word(rng, 2, 6));
        for (auto& c : d.speaker) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (rng() % 3 == 0) d.stage_direction = "(" + test::random_sentence(rng, 2) + ")";
        d.utterance = "Well " + test::random_sentence(rng, 1 + rng() % 8) + ".";
      }
      lines.push_back(std::move(d));
    }
    REQUIRE(parse_dialogue(render_dialogue(lines)) == lines);
  }
}
