#include <doctest.h>

#include <json.hpp>
#include <random>
#include <regex>
#include <sstream>

#include "dramaturg/error.hpp"
#include "dramaturg/parsing.hpp"
#include "dramaturg/prompt_forge.hpp"
#include "support.hpp"

using namespace dramaturg;

namespace {

struct Inputs {
  LogLine log_line{"x"};
  std::vector<CharacterSpec> cast;
  std::string location_name;
  std::string location_description;
  std::vector<Scene> scenes;
};

Inputs golden_inputs() {
  auto j = nlohmann::json::parse(read_file(test::kSourceDir / "tests/golden/prompts/inputs.json"));
  Inputs in;
  in.log_line = LogLine(j.at("log_line").get<std::string>());
  for (const auto& c : j.at("characters")) in.cast.push_back({c.at("name"), c.at("description")});
  in.location_name = j.at("location_name");
  in.location_description = j.at("location_description");
  for (const auto& s : j.at("scenes")) in.scenes.push_back({s.at("place"), s.at("plot_element"), s.at("beat")});
  return in;
}

ErrorCode load_error(const std::string& src) {
  std::istringstream in(src);
  try {
    load_prompt_set(in, "t");
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("prompt set accepted:\n" << src);
  return ErrorCode::InvalidInput;
}

const char* kMinimal =
    "@family title\nT <LOG_LINE> Title:<end>\n"
    "@family character\nC <LOG_LINE><end>\n"
    "@family plot\n@repeat CHARACTER_DESCRIPTION newline\nP <LOG_LINE>\n<CHARACTER_DESCRIPTION>\n<end>\n"
    "@family location\nL <LOG_LINE> <LOCATION_NAME><end>\n"
    "@family dialogue\n@repeat CHARACTER_DESCRIPTION space\n"
    "D <PLACE_NAME> <PLACE_DESCRIPTION> <CHARACTER_DESCRIPTION> <PLOT_ELEMENT> <LOG_LINE> <PREVIOUS_BEAT> <BEAT><end>\n";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("rendered prompts equal the transcribed goldens") {
  const auto in = golden_inputs();
  for (std::string name : {"medea", "scifi"}) {
    CAPTURE(name);
    const auto set = test::prompt_set(name);
    CHECK(render_title_prompt(set, in.log_line).text == test::golden_prompt(name + "_title"));
    CHECK(render_character_prompt(set, in.log_line).text == test::golden_prompt(name + "_character"));
    CHECK(render_plot_prompt(set, in.log_line, in.cast).text == test::golden_prompt(name + "_plot"));
    CHECK(render_location_prompt(set, in.log_line, in.location_name).text == test::golden_prompt(name + "_location"));
    for (std::size_t k = 0; k < 2; ++k) {
      std::optional<std::string_view> prev;
      if (k > 0) prev = in.scenes[k - 1].beat;
      auto named = select_characters_for_beat(in.cast, in.scenes[k].beat);
      CHECK(render_dialogue_prompt(set, in.log_line, in.scenes[k], prev, in.location_description, named).text ==
            test::golden_prompt(name + "_dialogue_scene" + std::to_string(k + 1)));
    }
  }
}

TEST_CASE("prompt sets are discoverable") {
  auto names = list_prompt_sets(test::kPromptDir);
  CHECK(names == std::vector<std::string>{"medea", "scifi"});
  CHECK(test::prompt_set("scifi").name == "scifi");
  CHECK_THROWS_AS(load_named_prompt_set(test::kPromptDir, "western"), Error);
}

TEST_CASE("loader accepts a minimal set and rejects broken ones") {
  std::istringstream in(kMinimal);
  auto set = load_prompt_set(in, "mini");
  CHECK(set.name == "mini");
  CHECK(set.title.body == "T <LOG_LINE> Title:<end>");
  CHECK(set.plot.repeatable.at("CHARACTER_DESCRIPTION") == "\n");
  CHECK(set.dialogue.repeatable.at("CHARACTER_DESCRIPTION") == " ");

  const std::string ok = kMinimal;
  CHECK(load_error(replace(ok, "T <LOG_LINE>", "T <LOG_LINE> <GENRE>")) == ErrorCode::UnknownPlaceholder);
  CHECK(load_error(replace(ok, "L <LOG_LINE> <LOCATION_NAME>", "L <LOG_LINE>")) == ErrorCode::MissingPlaceholder);
  CHECK(load_error(replace(ok, "@family location\nL <LOG_LINE> <LOCATION_NAME><end>\n", "")) == ErrorCode::MissingFamily);
  CHECK(load_error(replace(ok, "@family title", "@family poem")) == ErrorCode::ParseError);
  CHECK(load_error(replace(ok, "@family title", "@colour red\n@family title")) == ErrorCode::ParseError);
  CHECK(load_error("stray text\n" + ok) == ErrorCode::ParseError);
  CHECK(load_error(ok + "@family title\nT <LOG_LINE><end>\n") == ErrorCode::ParseError);
}

TEST_CASE("character lines follow the description-first rule") {
  CHECK(character_line({"Teddy", "Teddy is the protagonist."}) == "Teddy is the protagonist.");
  CHECK(character_line({"Rosie", "A regular patron."}) == "Rosie: A regular patron.");
}

TEST_CASE("renderer preconditions") {
  const auto set = test::prompt_set("medea");
  LogLine log("A story.");
  try {
    render_plot_prompt(set, log, {});
    FAIL("expected EmptyCharacterList");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCharacterList);
  }
  CHECK_THROWS_AS(render_location_prompt(set, log, ""), Error);
  // Empty cast is allowed for dialogue; the character line is simply empty.
  auto p = render_dialogue_prompt(set, log, {"Home.", "Exposition.", "Nobody speaks."}, std::nullopt, "A room.", {});
  CHECK(p.text.find("Previous beat: \n") != std::string::npos);
}

TEST_CASE("beat-matched character selection") {
  std::vector<CharacterSpec> cast{{"Teddy", "a"}, {"Rosie", "b"}, {"Gerald", "c"}, {"D.J.", "d"}};
  auto picked = select_characters_for_beat(cast, "Rosie and Teddy argue.");
  REQUIRE(picked.size() == 2);
  CHECK(picked[0].name == "Teddy");
  CHECK(picked[1].name == "Rosie");
  CHECK(select_characters_for_beat(cast, "rosie waits.").empty());
  CHECK(select_characters_for_beat(cast, "D.J. plays.").size() == 1);
}

TEST_CASE("rendering is deterministic and leaves no placeholders") {
  std::mt19937_64 rng(17);
  const std::regex placeholder("<(LOG_LINE|CHARACTER_DESCRIPTION|LOCATION_NAME|PLACE_NAME|PLACE_DESCRIPTION|PLOT_ELEMENT|PREVIOUS_BEAT|BEAT)>");
  for (std::string name : {"medea", "scifi"}) {
    const auto set = test::prompt_set(name);
    for (int i = 0; i < 100; ++i) {
      LogLine log(test::random_sentence(rng, 2 + rng() % 10) + ".");
      std::vector<CharacterSpec> cast;
      for (std::size_t k = 0, n = 1 + rng() % 4; k < n; ++k) cast.push_back({"N" + test::random_word(rng), test::random_sentence(rng, 4)});
      Scene scene{test::random_word(rng) + ".", "Climax.", cast[0].name + " " + test::random_sentence(rng, 5)};
      std::vector<Prompt> prompts{render_title_prompt(set, log), render_character_prompt(set, log),
                                  render_plot_prompt(set, log, cast), render_location_prompt(set, log, scene.place),
                                  render_dialogue_prompt(set, log, scene, "before", "desc", cast)};
      for (const auto& p : prompts) {
        CHECK_FALSE(std::regex_search(p.text, placeholder));
        CHECK(p.text.find(log.text()) != std::string::npos);
      }
      CHECK(render_plot_prompt(set, log, cast).digest() == prompts[2].digest());
      CHECK(prompts[4].digest() == render_dialogue_prompt(set, log, scene, "before", "desc", cast).digest());
    }
  }
}
