#include <doctest.h>

#include <fstream>
#include <random>

#include "dramaturg/error.hpp"
#include "dramaturg/parsing.hpp"
#include "dramaturg/script_io.hpp"
#include "support.hpp"

using namespace dramaturg;

namespace {

StorySession one_scene_session() {
  StorySession s;
  s.apply(SessionCreated{"one", "A pilot lands.", "medea", 1});
  auto add = [&](SlotAddress a, std::string text) {
    CandidateAdded e;
    e.address = std::move(a);
    e.candidate.raw_text = std::move(text);
    e.origin = "generate";
    s.apply(std::move(e));
  };
  add(SlotAddress::title(), " Landing");
  add(SlotAddress::characters(), "<character>Ann <description>Ann is a pilot.<stop>\n");
  add(SlotAddress::plot(), "Place: Runway.\nPlot element: Climax.\nBeat: Ann lands the plane.\n");
  add(SlotAddress::location_of("Runway."), " A wet strip of\ntarmac.");
  add(SlotAddress::dialogue(1), "ANN\n(shouting)\nBrace!\n\n(The plane stops.)\n");
  return s;
}

}  // namespace

TEST_CASE("export layout of a one-scene script") {
  auto doc = assemble_script(one_scene_session());
  const std::string expected =
      "Landing\n"
      "\n"
      "CHARACTERS\n"
      "Ann: Ann is a pilot.\n"
      "\n"
      "SCENE 1 \xE2\x80\x94 Runway. (Climax.)\n"
      "A wet strip of tarmac.\n"
      "[Ann lands the plane.]\n"
      "\n"
      "ANN\n"
      "  (shouting)\n"
      "  Brace!\n"
      "\n"
      "(The plane stops.)\n";
  CHECK(export_plaintext(doc) == expected);
  CHECK(export_plaintext(doc) == export_plaintext(assemble_script(one_scene_session())));
}

TEST_CASE("stage directions survive export") {
  auto doc = assemble_script(one_scene_session());
  auto out = export_plaintext(doc);
  auto dialogue = out.substr(out.find("ANN\n"));
  CHECK(parse_dialogue(dialogue) == doc.scenes[0].dialogue);
  CHECK(out.find("(The plane stops.)") != std::string::npos);
}

TEST_CASE("incomplete sessions list their missing slots") {
  auto s = one_scene_session();
  s.apply(SlotEdited{SlotAddress::plot(),
                     render_plot(std::vector<Scene>{{"Runway.", "Climax.", "Ann lands."}, {"Runway.", "Denouement.", "Ann rests."},
                                                    {"Runway.", "x", "y"}, {"Runway.", "x", "y"}, {"Runway.", "x", "y"}})});
  for (std::size_t k = 2; k <= 4; ++k) {
    CandidateAdded e;
    e.address = SlotAddress::dialogue(k);
    e.candidate.raw_text = "ANN\nHi.";
    s.apply(std::move(e));
  }
  const auto before = s;
  try {
    assemble_script(s);
    FAIL("expected IncompleteSession");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompleteSession);
    CHECK(e.items() == std::vector<std::string>{"dialogue:5"});
  }
  CHECK(s == before);

  StorySession fresh;
  fresh.apply(SessionCreated{"f", "Log.", "medea", 0});
  try {
    assemble_script(fresh);
    FAIL("expected IncompleteSession");
  } catch (const Error& e) {
    CHECK(e.items() == std::vector<std::string>{"title", "characters", "plot"});
  }
}

TEST_CASE("provenance summary") {
  auto s = one_scene_session();
  s.apply(SlotEdited{SlotAddress::title(), "Touchdown"});
  auto doc = assemble_script(s);
  CHECK(doc.title == "Touchdown");
  CHECK(doc.provenance.front() == std::pair<std::string, Provenance>{"title", Provenance::Edited});
  CHECK(doc.provenance.size() == 5);
}

TEST_CASE("load after save is the identity") {
  test::TempDir dir;
  std::mt19937_64 rng(99);
  auto engine = test::make_engine(std::make_shared<MockBackend>(), EngineOptions{{}, {}, test::ticking_clock()});
  for (int i = 0; i < 100; ++i) {
    auto s = test::random_session(rng, engine);
    const auto path = dir / ("s" + std::to_string(i) + ".dramaturg.json");
    save_session(path, s);
    REQUIRE(load_session(path) == s);
  }
}

TEST_CASE("corrupt files are rejected") {
  test::TempDir dir;
  const auto s = one_scene_session();
  const auto path = dir / "s.json";
  save_session(path, s);
  const auto good = read_file(path);

  auto expect = [&](const std::string& content, ErrorCode code) {
    std::ofstream(path, std::ios::trunc) << content;
    try {
      load_session(path);
      FAIL("accepted corrupt file");
    } catch (const Error& e) {
      CHECK(e.code() == code);
    }
  };
  expect(good.substr(0, good.size() / 2), ErrorCode::SerializationError);
  expect("[]", ErrorCode::SerializationError);

  auto j = session_to_json(s);
  j["format_version"] = kSessionFormatVersion + 1;
  expect(j.dump(), ErrorCode::VersionMismatch);

  j = session_to_json(s);
  j["slots"]["title"]["edited_text"] = "tampered";
  expect(j.dump(), ErrorCode::SerializationError);

  j = session_to_json(s);
  j["history"][1]["type"] = "mystery";
  expect(j.dump(), ErrorCode::SerializationError);

  CHECK_THROWS_AS(load_session(dir / "missing.json"), Error);
}

TEST_CASE("atomic writes leave no temp files behind") {
  test::TempDir dir;
  write_file_atomic(dir / "nested" / "f.txt", "one");
  write_file_atomic(dir / "nested" / "f.txt", "two");
  CHECK(read_file(dir / "nested" / "f.txt") == "two");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "nested")) ++files;
  CHECK(files == 1);
}

TEST_CASE("draft export marks missing slots and matches the strict export when complete") {
  auto s = one_scene_session();
  CHECK(export_draft(s) == export_plaintext(assemble_script(s)));

  StorySession fresh;
  fresh.apply(SessionCreated{"f", "Log.", "medea", 0});
  CHECK(export_draft(fresh) == "[title missing]\n\nCHARACTERS\n[characters missing]\n\n[plot missing]\n");

  StorySession partial;
  partial.apply(SessionCreated{"p", "Log.", "medea", 0});
  CandidateAdded e;
  e.address = SlotAddress::plot();
  e.candidate.raw_text = "Place: Dock.\nPlot element: Climax.\nBeat: Ann waits.\n";
  partial.apply(std::move(e));
  auto draft = export_draft(partial);
  CHECK(draft.find("[location:Dock. missing]") != std::string::npos);
  CHECK(draft.find("[dialogue:1 missing]") != std::string::npos);
  CHECK(draft.find("[Ann waits.]") != std::string::npos);
}
