#include "dramaturg/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cctype>
#include <fstream>
#include <json.hpp>

#include "dramaturg/error.hpp"
#include "dramaturg/metrics.hpp"
#include "dramaturg/script_io.hpp"
#include "dramaturg/text.hpp"

namespace dramaturg {

using nlohmann::json;

void ServiceConfig::validate() const {
  if (max_concurrent < 1) throw Error(ErrorCode::InvalidInput, "max_concurrent must be at least 1");
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidInput, "port out of range");
  if (prompt_dir.empty()) throw Error(ErrorCode::InvalidInput, "prompt_dir is required");
  if (storage_dir.empty()) throw Error(ErrorCode::InvalidInput, "storage_dir is required");
}

namespace {

std::string unquote(std::string_view v, const std::string& where) {
  if (v.size() < 2 || v.back() != '"') throw Error(ErrorCode::ParseError, "unterminated string at " + where);
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] != '\\') {
      out += v[i];
      continue;
    }
    if (++i + 1 >= v.size()) throw Error(ErrorCode::ParseError, "bad escape at " + where);
    switch (v[i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      default: throw Error(ErrorCode::ParseError, "bad escape at " + where);
    }
  }
  return out;
}

// Drops a trailing comment that is not inside a quoted string.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

long long to_integer(std::string_view v, const std::string& where) {
  try {
    std::size_t used = 0;
    auto n = std::stoll(std::string(v), &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return n;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "expected an integer at " + where);
  }
}

}  // namespace

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot open config " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() || base.empty() ? fp : base / fp;
  };

  ServiceConfig cfg;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = path.filename().string() + ":" + std::to_string(lineno);
    auto l = text::trim(strip_comment(line));
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') throw Error(ErrorCode::ParseError, "bad section header at " + where);
      section = text::trim_copy(l.substr(1, l.size() - 2));
      continue;
    }
    auto eq = l.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, "expected key = value at " + where);
    auto key = text::trim_copy(l.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    auto raw = text::trim(l.substr(eq + 1));
    const bool quoted = !raw.empty() && raw.front() == '"';
    auto str = [&] { return quoted ? unquote(raw, where) : std::string(raw); };

    if (key == "host") {
      cfg.host = str();
    } else if (key == "port") {
      cfg.port = static_cast<int>(to_integer(raw, where));
    } else if (key == "prompt_dir") {
      cfg.prompt_dir = resolve(str());
    } else if (key == "storage_dir") {
      cfg.storage_dir = resolve(str());
    } else if (key == "max_concurrent") {
      auto n = to_integer(raw, where);
      if (n < 1) throw Error(ErrorCode::InvalidInput, "max_concurrent must be at least 1");
      cfg.max_concurrent = static_cast<std::size_t>(n);
    } else if (key == "auth_token") {
      cfg.auth_token = str();
    } else if (key == "backend.kind") {
      cfg.backend.kind = str();
    } else if (key == "backend.url") {
      cfg.backend.url = str();
    } else if (key == "backend.api_key") {
      cfg.backend.api_key = str();
    } else if (key == "backend.mock_script") {
      cfg.backend.mock_script = resolve(str());
    } else if (key == "backend.context_window") {
      cfg.backend.context_window = static_cast<std::size_t>(to_integer(raw, where));
    } else {
      throw Error(ErrorCode::ParseError, "unknown key '" + key + "' at " + where);
    }
  }
  cfg.backend = with_env_overrides(cfg.backend);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSlot: return 404;
    case ErrorCode::UpstreamMissing:
    case ErrorCode::EmptySlot:
    case ErrorCode::IncompleteSession:
    case ErrorCode::EmptyTitle:
    case ErrorCode::NoCharactersFound:
    case ErrorCode::NoScenesFound:
    case ErrorCode::MalformedScene:
    case ErrorCode::EmptyCharacterList:
      return 409;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::BackendRejected:
      return 502;
    case ErrorCode::Busy: return 503;
    case ErrorCode::SerializationError:
    case ErrorCode::VersionMismatch:
      return 500;
    default: return 400;
  }
}

json error_json(const Error& e) {
  return {{"error", std::string(to_string(e.code()))},
          {"message", e.what()},
          {"subject", e.subject()},
          {"items", e.items()},
          {"slot", e.slot()}};
}

json report_json(const metrics::EditReport& r) {
  return {{"slot", r.slot_address},
          {"levenshtein", r.levenshtein},
          {"relative_levenshtein", r.relative_levenshtein},
          {"jaccard_lemma", r.jaccard_lemma},
          {"length_delta", r.length_delta},
          {"repetition",
           {{"ngram_overlap", r.repetition.ngram_overlap},
            {"tcr", r.repetition.total_consecutive_repetition},
            {"lcr", r.repetition.longest_consecutive_repetition}}}};
}

bool valid_id(std::string_view id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
           return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
         });
}

struct NotFound {
  std::string what;
};

}  // namespace

struct StudioService::Impl {
  struct Entry {
    std::mutex mu;
    StorySession session;
  };

  struct Job {
    std::string id;
    std::string session_id;
    std::string status = "queued";  // queued | running | succeeded | failed
    json error;
  };

  ServiceConfig config;
  Clock clock;
  std::shared_ptr<Gateway> gateway;
  httplib::Server server;
  std::thread listener;

  std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<Entry>> sessions;

  std::mutex sets_mu;
  std::map<std::string, PromptSet> prompt_sets;

  std::mutex jobs_mu;
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::vector<std::thread> workers;

  std::atomic<std::size_t> interactive{0};

  std::filesystem::path session_path(const std::string& id) const {
    return config.storage_dir / (id + ".dramaturg.json");
  }

  PromptSet prompt_set(const std::string& name) {
    std::lock_guard lock(sets_mu);
    if (auto it = prompt_sets.find(name); it != prompt_sets.end()) return it->second;
    auto set = load_named_prompt_set(config.prompt_dir, name);
    prompt_sets.emplace(name, set);
    return set;
  }

  Engine engine_for(const StorySession& s) {
    EngineOptions opts;
    opts.clock = clock;
    opts.workers = config.max_concurrent;
    return Engine(prompt_set(s.prompt_set_name()), gateway, opts);
  }

  std::shared_ptr<Entry> entry(const std::string& id) {
    if (!valid_id(id)) throw NotFound{"unknown session '" + id + "'"};
    std::lock_guard lock(sessions_mu);
    if (auto it = sessions.find(id); it != sessions.end()) return it->second;
    const auto path = session_path(id);
    if (!std::filesystem::exists(path)) throw NotFound{"unknown session '" + id + "'"};
    auto e = std::make_shared<Entry>();
    e->session = load_session(path);
    sessions.emplace(id, e);
    return e;
  }

  void persist(const StorySession& s) { save_session(session_path(s.id()), s); }

  // Runs `op` on a copy of the session; the copy replaces the stored session
  // when `op` returns or throws LoopUnresolved (its candidate was committed).
  json mutate(const std::string& id, const std::function<json(Engine&, StorySession&)>& op) {
    auto e = entry(id);
    std::lock_guard lock(e->mu);
    auto engine = engine_for(e->session);
    StorySession next = e->session;
    json body;
    try {
      body = op(engine, next);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::LoopUnresolved) throw;
      body = {{"warning", error_json(err)}};
      const auto& last = std::get<CandidateAdded>(next.history().back());
      body["address"] = last.address.str();
      body["candidate_index"] = next.slot(last.address).candidates.size() - 1;
      body["candidate"] = slot_to_json(next.slot(last.address))["candidates"].back();
      body["slot"] = slot_to_json(next.slot(last.address));
    }
    persist(next);
    e->session = std::move(next);
    return body;
  }

  static json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
      auto j = json::parse(req.body);
      if (!j.is_object()) throw Error(ErrorCode::InvalidInput, "request body must be a JSON object");
      return j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::InvalidInput, std::string("malformed JSON body: ") + e.what());
    }
  }

  template <class F>
  static void guarded(httplib::Response& res, F&& fn) {
    try {
      fn();
    } catch (const NotFound& nf) {
      res.status = 404;
      res.set_content(json{{"error", "NotFound"}, {"message", nf.what}}.dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_json(e).dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", "InvalidInput"}, {"message", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      spdlog::error("request failed: {}", e.what());
      res.status = 500;
      res.set_content(json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
    }
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  // Bounds interactive generations; generate_full jobs queue on the gateway instead.
  struct Admission {
    std::atomic<std::size_t>& n;
    Admission(std::atomic<std::size_t>& counter, std::size_t limit) : n(counter) {
      if (++n > limit) {
        --n;
        throw Error(ErrorCode::Busy, "too many generations in flight");
      }
    }
    ~Admission() { --n; }
  };

  json slot_reply(const StorySession& s, const SlotAddress& a) {
    return {{"address", a.str()}, {"slot", slot_to_json(s.slot(a))}};
  }

  void routes() {
    if (config.auth_token) {
      server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value("Authorization") == "Bearer " + *config.auth_token) {
          return httplib::Server::HandlerResponse::Unhandled;
        }
        reply(res, 401, {{"error", "Unauthorized"}, {"message", "missing or invalid bearer token"}});
        return httplib::Server::HandlerResponse::Handled;
      });
    }

    server.Get("/prompt_sets", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { reply(res, 200, {{"prompt_sets", list_prompt_sets(config.prompt_dir)}}); });
    });

    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = parse_body(req);
        LogLine log_line(body.at("log_line").get<std::string>());
        auto set_name = body.value("prompt_set", std::string("medea"));
        EngineOptions opts;
        opts.clock = clock;
        Engine engine(prompt_set(set_name), gateway, opts);
        auto s = engine.new_session(log_line);
        persist(s);
        auto e = std::make_shared<Entry>();
        e->session = s;
        {
          std::lock_guard lock(sessions_mu);
          sessions.emplace(s.id(), e);
        }
        reply(res, 201, {{"id", s.id()}, {"log_line", s.log_line().text()}, {"prompt_set", s.prompt_set_name()}});
      });
    });

    server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto e = entry(req.matches[1]);
        std::lock_guard lock(e->mu);
        reply(res, 200, session_to_json(e->session));
      });
    });

    server.Post(R"(/sessions/([^/]+)/slots/([^/]+)/generate)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    auto body = parse_body(req);
                    auto address = SlotAddress::parse(req.matches[2].str());
                    Admission admit(interactive, config.max_concurrent);
                    reply(res, 200, mutate(req.matches[1], [&](Engine& engine, StorySession& s) {
                            std::uint64_t seed = 0;
                            if (body.contains("seed") && !body["seed"].is_null()) {
                              seed = body["seed"].get<std::uint64_t>();
                            } else if (const auto* slot = s.find_slot(address)) {
                              seed = slot->candidates.size() + 1;
                            }
                            auto c = engine.generate(s, address, seed);
                            auto out = slot_reply(s, address);
                            out["candidate_index"] = s.slot(address).candidates.size() - 1;
                            out["candidate"] = out["slot"]["candidates"].back();
                            return out;
                          }));
                  });
                });

    server.Post(R"(/sessions/([^/]+)/slots/([^/]+)/continue)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    auto body = parse_body(req);
                    auto address = SlotAddress::parse(req.matches[2].str());
                    std::optional<std::uint64_t> seed;
                    if (body.contains("seed") && !body["seed"].is_null()) seed = body["seed"].get<std::uint64_t>();
                    Admission admit(interactive, config.max_concurrent);
                    reply(res, 200, mutate(req.matches[1], [&](Engine& engine, StorySession& s) {
                            engine.continue_generation(s, address, seed);
                            auto out = slot_reply(s, address);
                            out["candidate_index"] = s.slot(address).candidates.size() - 1;
                            out["candidate"] = out["slot"]["candidates"].back();
                            return out;
                          }));
                  });
                });

    server.Put(R"(/sessions/([^/]+)/slots/([^/]+)/edit)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = parse_body(req);
        auto address = SlotAddress::parse(req.matches[2].str());
        auto text = body.at("text").get<std::string>();
        reply(res, 200, mutate(req.matches[1], [&](Engine& engine, StorySession& s) {
                engine.apply_edit(s, address, text);
                return slot_reply(s, address);
              }));
      });
    });

    server.Put(R"(/sessions/([^/]+)/slots/([^/]+)/accept)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   auto body = parse_body(req);
                   auto address = SlotAddress::parse(req.matches[2].str());
                   auto index = body.at("candidate_index").get<std::size_t>();
                   reply(res, 200, mutate(req.matches[1], [&](Engine& engine, StorySession& s) {
                           engine.accept(s, address, index);
                           return slot_reply(s, address);
                         }));
                 });
               });

    server.Post(R"(/sessions/([^/]+)/generate_full)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto body = parse_body(req);
        auto policy = SeedPolicy::parse(body.value("seed_policy", std::string("1")));
        auto e = entry(req.matches[1]);
        auto job = std::make_shared<Job>();
        job->id = new_session_id();
        job->session_id = req.matches[1];
        {
          std::lock_guard lock(jobs_mu);
          jobs.emplace(job->id, job);
          workers.emplace_back([this, job, e, policy] { run_job(*job, *e, policy); });
        }
        reply(res, 202, {{"job_id", job->id}, {"status", "queued"}});
      });
    });

    server.Get(R"(/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::lock_guard lock(jobs_mu);
        auto it = jobs.find(req.matches[1]);
        if (it == jobs.end()) throw NotFound{"unknown job '" + req.matches[1].str() + "'"};
        const auto& j = *it->second;
        json out = {{"id", j.id}, {"session_id", j.session_id}, {"status", j.status}};
        if (!j.error.is_null()) out["error"] = j.error;
        reply(res, 200, out);
      });
    });

    server.Get(R"(/sessions/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto e = entry(req.matches[1]);
        std::lock_guard lock(e->mu);
        json reports = json::array();
        for (const auto& r : metrics::session_edit_reports(e->session)) reports.push_back(report_json(r));
        reply(res, 200, {{"reports", std::move(reports)}});
      });
    });

    server.Get(R"(/sessions/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto e = entry(req.matches[1]);
        std::lock_guard lock(e->mu);
        res.status = 200;
        res.set_content(export_draft(e->session), "text/plain; charset=utf-8");
      });
    });
  }

  void run_job(Job& job, Entry& e, SeedPolicy policy) {
    std::lock_guard lock(e.mu);
    {
      std::lock_guard jl(jobs_mu);
      job.status = "running";
    }
    StorySession next = e.session;
    json error;
    try {
      engine_for(next).generate_full(next, policy);
    } catch (const Error& err) {
      error = error_json(err);
      error["status"] = http_status(err.code());
    } catch (const std::exception& err) {
      error = {{"error", "Internal"}, {"message", err.what()}};
    }
    try {
      persist(next);
      e.session = std::move(next);
    } catch (const std::exception& err) {
      error = {{"error", "SerializationError"}, {"message", err.what()}};
    }
    std::lock_guard jl(jobs_mu);
    job.error = error;
    job.status = error.is_null() ? "succeeded" : "failed";
  }
};

StudioService::StudioService(ServiceConfig config, std::shared_ptr<Backend> backend, Clock clock)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  if (!backend) backend = make_backend(config.backend);
  gateway_ = std::make_shared<Gateway>(std::move(backend), config.max_concurrent);
  std::filesystem::create_directories(config.storage_dir);
  impl_->config = std::move(config);
  impl_->clock = clock ? std::move(clock) : system_clock();
  impl_->gateway = gateway_;
  impl_->routes();
}

StudioService::~StudioService() { stop(); }

bool StudioService::listen() {
  spdlog::info("listening on {}:{}", impl_->config.host, impl_->config.port);
  return impl_->server.listen(impl_->config.host, impl_->config.port);
}

int StudioService::start_background() {
  const int port = impl_->server.bind_to_any_port(impl_->config.host);
  if (port < 0) throw Error(ErrorCode::InvalidInput, "cannot bind " + impl_->config.host);
  impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void StudioService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->listener.joinable()) impl_->listener.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(impl_->jobs_mu);
    workers.swap(impl_->workers);
  }
  for (auto& t : workers) t.join();
}

}  // namespace dramaturg
