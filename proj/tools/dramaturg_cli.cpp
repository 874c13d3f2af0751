// Command-line front end: batch generation, editing, export, metrics and the HTTP service.
#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "dramaturg/engine.hpp"
#include "dramaturg/error.hpp"
#include "dramaturg/metrics.hpp"
#include "dramaturg/script_io.hpp"
#include "dramaturg/service.hpp"
#include "dramaturg/text.hpp"

#ifndef DRAMATURG_DEFAULT_PROMPT_DIR
#define DRAMATURG_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace fs = std::filesystem;
using namespace dramaturg;

namespace {

struct Globals {
  std::string prompt_dir = DRAMATURG_DEFAULT_PROMPT_DIR;
  std::string backend = "mock";
  std::string mock_script;
  std::string backend_url;
  std::size_t workers = 4;
  bool serial = false;
};

Engine make_engine(const Globals& g, const std::string& prompt_set) {
  BackendConfig bc;
  bc.kind = g.backend;
  bc.mock_script = g.mock_script;
  bc.url = g.backend_url;
  bc = with_env_overrides(bc);
  auto gateway = std::make_shared<Gateway>(make_backend(bc), std::max<std::size_t>(1, g.workers));
  EngineOptions opts;
  opts.parallel = !g.serial;
  opts.workers = std::max<std::size_t>(1, g.workers);
  return Engine(load_named_prompt_set(g.prompt_dir, prompt_set), gateway, opts);
}

// Saves whatever the operation committed, then rethrows its error.
template <class F>
void mutate_file(const Globals& g, const std::string& path, F&& op) {
  auto session = load_session(path);
  auto engine = make_engine(g, session.prompt_set_name());
  const auto before = session.history().size();
  try {
    op(engine, session);
  } catch (...) {
    if (session.history().size() != before) save_session(path, session);
    throw;
  }
  save_session(path, session);
}

std::string slot_summary(const StorySession& s) {
  std::string out;
  for (const auto& a : s.addresses()) {
    const auto& slot = s.slot(a);
    out += a.str() + "\t" + std::to_string(slot.candidates.size()) + " candidate(s)\t";
    out += slot.resolvable() ? std::string(to_string(slot.provenance)) : "unresolved";
    if (slot.stale) out += "\tstale";
    out += "\n";
  }
  return out;
}

void write_output(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-") {
    std::cout << content;
  } else {
    write_file_atomic(out_path, content);
  }
}

int run_metrics(const std::string& input, const std::string& plot_dir) {
  std::vector<metrics::EditReport> reports;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> names;

  if (fs::is_directory(input)) {
    // <name>.original.txt + <name>.edited.txt
    constexpr std::string_view kOriginal = ".original.txt";
    std::vector<fs::path> originals;
    for (const auto& entry : fs::directory_iterator(input)) {
      const auto name = entry.path().filename().string();
      if (name.size() > kOriginal.size() && name.ends_with(kOriginal)) {
        originals.push_back(entry.path());
      }
    }
    std::sort(originals.begin(), originals.end());
    for (const auto& o : originals) {
      const auto fname = o.filename().string();
      const auto stem = fname.substr(0, fname.size() - kOriginal.size());
      const auto edited = o.parent_path() / (stem + ".edited.txt");
      if (!fs::exists(edited)) throw Error(ErrorCode::InvalidInput, "missing " + edited.string());
      pairs.emplace_back(read_file(o), read_file(edited));
      names.push_back(stem);
      reports.push_back(metrics::edit_report(stem, pairs.back().first, pairs.back().second));
    }
  } else {
    auto session = load_session(input);
    reports = metrics::session_edit_reports(session);
    for (const auto& r : reports) {
      const auto& slot = session.slot(SlotAddress::parse(r.slot_address));
      pairs.emplace_back(slot.candidates[*slot.accepted].raw_text, resolve_slot_text(slot));
      names.push_back(r.slot_address);
    }
  }

  const auto table = metrics::format_reports(reports);
  std::cout << table;
  if (!plot_dir.empty()) {
    write_file_atomic(fs::path(plot_dir) / "edit_metrics.tsv", table);
    if (!pairs.empty()) {
      auto stats = metrics::length_stats(pairs);
      std::string rows = "slot\tlength_delta\tnormalized_abs_delta\n";
      for (std::size_t i = 0; i < names.size(); ++i) {
        rows += names[i] + "\t" + std::to_string(stats.deltas[i]) + "\t" +
                std::to_string(stats.normalized_abs[i]) + "\n";
      }
      write_file_atomic(fs::path(plot_dir) / "length_stats.tsv", rows);
    }
  }
  return 0;
}

StudioService* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dramaturg: hierarchical script co-writing"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--prompt-dir", g.prompt_dir, "Directory of .promptset files");
  app.add_option("--backend", g.backend, "Language model backend")->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--mock-script", g.mock_script, "JSON script of canned mock completions");
  app.add_option("--backend-url", g.backend_url, "Completion endpoint for the http backend");
  app.add_option("--workers", g.workers, "Concurrent generations during full runs");
  app.add_flag("--serial", g.serial, "Disable concurrent location/dialogue generation");

  std::string session_path, slot, out_path, log_line, log_line_file, prompt_set = "medea", id, seed = "1";
  std::string text_file, text_value, plot_dir, config_path;
  std::uint64_t seed_value = 1;
  std::optional<std::uint64_t> continue_seed;
  std::size_t index = 0;
  bool full = false;

  auto* cmd_new = app.add_subcommand("new", "Create a session from a log line");
  auto* ll = cmd_new->add_option("--logline", log_line, "Log line text");
  cmd_new->add_option("--logline-file", log_line_file, "Read the log line from a file")->excludes(ll);
  cmd_new->add_option("--prompt-set", prompt_set, "Prompt set name");
  cmd_new->add_option("--id", id, "Session id (random when omitted)");
  cmd_new->add_option("--out", out_path, "Session file to write")->required();

  auto* cmd_run = app.add_subcommand("run", "Generate every unresolved slot");
  cmd_run->add_option("session", session_path)->required();
  cmd_run->add_flag("--full", full, "Fill the whole hierarchy");
  cmd_run->add_option("--seed", seed, "Seed policy: N, fixed:N or sequential:N");

  auto* cmd_gen = app.add_subcommand("gen", "Generate a candidate for one slot");
  cmd_gen->add_option("session", session_path)->required();
  cmd_gen->add_option("--slot", slot)->required();
  cmd_gen->add_option("--seed", seed_value);

  auto* cmd_cont = app.add_subcommand("continue", "Extend the resolved text of a slot");
  cmd_cont->add_option("session", session_path)->required();
  cmd_cont->add_option("--slot", slot)->required();
  cmd_cont->add_option("--seed", continue_seed);

  auto* cmd_edit = app.add_subcommand("edit", "Replace the text of a slot");
  cmd_edit->add_option("session", session_path)->required();
  cmd_edit->add_option("--slot", slot)->required();
  auto* tf = cmd_edit->add_option("--file", text_file, "File with the new text");
  cmd_edit->add_option("--text", text_value, "New text")->excludes(tf);

  auto* cmd_accept = app.add_subcommand("accept", "Accept a candidate of a slot");
  cmd_accept->add_option("session", session_path)->required();
  cmd_accept->add_option("--slot", slot)->required();
  cmd_accept->add_option("--index", index)->required();

  auto* cmd_show = app.add_subcommand("show", "List slots with provenance");
  cmd_show->add_option("session", session_path)->required();

  auto* cmd_export = app.add_subcommand("export", "Write the plain-text script");
  cmd_export->add_option("session", session_path)->required();
  cmd_export->add_option("--out", out_path, "Output file (stdout when omitted)");
  bool draft = false;
  cmd_export->add_flag("--draft", draft, "Mark missing slots instead of failing");

  auto* cmd_metrics = app.add_subcommand("metrics", "Edit metrics for a session or a directory of text pairs");
  cmd_metrics->add_option("input", session_path, "Session file or directory of NAME.original.txt/NAME.edited.txt")
      ->required();
  cmd_metrics->add_option("--plot-data", plot_dir, "Directory for plot-ready TSV files");

  auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP service");
  cmd_serve->add_option("--config", config_path, "Service config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_new->parsed()) {
      if (!log_line_file.empty()) log_line = text::trim_copy(read_file(log_line_file));
      if (log_line.empty()) throw Error(ErrorCode::InvalidLogLine, "--logline or --logline-file is required");
      auto engine = make_engine(g, prompt_set);
      save_session(out_path, engine.new_session(LogLine(log_line), id));
    } else if (cmd_run->parsed()) {
      if (!full) throw Error(ErrorCode::InvalidInput, "run needs --full");
      auto policy = SeedPolicy::parse(seed);
      mutate_file(g, session_path, [&](Engine& e, StorySession& s) { e.generate_full(s, policy); });
    } else if (cmd_gen->parsed()) {
      auto address = SlotAddress::parse(slot);
      mutate_file(g, session_path, [&](Engine& e, StorySession& s) { e.generate(s, address, seed_value); });
    } else if (cmd_cont->parsed()) {
      auto address = SlotAddress::parse(slot);
      mutate_file(g, session_path,
                  [&](Engine& e, StorySession& s) { e.continue_generation(s, address, continue_seed); });
    } else if (cmd_edit->parsed()) {
      auto address = SlotAddress::parse(slot);
      auto value = text_file.empty() ? text_value : read_file(text_file);
      mutate_file(g, session_path, [&](Engine& e, StorySession& s) { e.apply_edit(s, address, value); });
    } else if (cmd_accept->parsed()) {
      auto address = SlotAddress::parse(slot);
      mutate_file(g, session_path, [&](Engine& e, StorySession& s) { e.accept(s, address, index); });
    } else if (cmd_show->parsed()) {
      std::cout << slot_summary(load_session(session_path));
    } else if (cmd_export->parsed()) {
      auto session = load_session(session_path);
      write_output(out_path, draft ? export_draft(session) : export_plaintext(assemble_script(session)));
    } else if (cmd_metrics->parsed()) {
      return run_metrics(session_path, plot_dir);
    } else if (cmd_serve->parsed()) {
      auto cfg = load_service_config(config_path);
      StudioService service(cfg);
      g_service = &service;
      std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
      });
      if (!service.listen()) {
        spdlog::error("cannot bind {}:{}", cfg.host, cfg.port);
        return 1;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what();
    if (!e.slot().empty()) std::cerr << " [slot " << e.slot() << "]";
    std::cerr << "\n";
    for (const auto& item : e.items()) std::cerr << "  " << item << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
