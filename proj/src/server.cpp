#include "agentguard/server.hpp"

#include "agentguard/mdp_json.hpp"
#include "agentguard/wire.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <condition_variable>
#include <deque>
#include <mutex>

#include <httplib.h>

namespace agentguard {

using nlohmann::json;

std::pair<std::string, int> parse_listen(std::string_view address) {
  auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ConfigError("api.listen", "expected host:port, got '" + std::string(address) + "'");
  }
  int port = -1;
  auto digits = address.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw ConfigError("api.listen", "invalid port in '" + std::string(address) + "'");
  }
  return {std::string(address.substr(0, colon)), port};
}

namespace {

struct StreamClient {
  std::mutex mutex;
  std::condition_variable wake;
  std::deque<std::string> frames;
  std::uint64_t last_cycle = 0;
  bool closed = false;
};

std::string sse(std::string_view kind, std::uint64_t cycle, std::uint64_t revision, json payload) {
  json frame = {{"kind", kind}, {"cycle", cycle}, {"revision", revision}, {"payload", std::move(payload)}};
  std::string out = "event: ";
  out += kind;
  out += "\nid: " + std::to_string(cycle) + "\ndata: " + frame.dump() + "\n\n";
  return out;
}

// Shared between the server and the guard listener, which may outlive it.
struct Hub {
  std::mutex mutex;
  std::vector<std::shared_ptr<StreamClient>> clients;
  bool shut = false;

  void broadcast(std::uint64_t cycle, std::vector<std::string> frames) {
    std::lock_guard lock(mutex);
    for (auto& c : clients) {
      std::lock_guard cl(c->mutex);
      if (cycle <= c->last_cycle) continue;  // already covered by its snapshot frame
      c->last_cycle = cycle;
      for (const auto& f : frames) c->frames.push_back(f);
      c->wake.notify_all();
    }
  }

  void close_all() {
    std::lock_guard lock(mutex);
    shut = true;
    for (auto& c : clients) {
      std::lock_guard cl(c->mutex);
      c->closed = true;
      c->wake.notify_all();
    }
  }

  void remove(const std::shared_ptr<StreamClient>& client) {
    std::lock_guard lock(mutex);
    std::erase(clients, client);
  }
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRequest:
    case ErrorCode::SyntaxError:
    case ErrorCode::TraceFormat: return 400;
    case ErrorCode::UnknownCommand:
    case ErrorCode::UnknownAlert: return 404;
    case ErrorCode::UnknownState:
    case ErrorCode::UnknownAction: return 409;
    case ErrorCode::RejectedEvent: return 429;
    case ErrorCode::EngineNotRunning: return 503;
    default: return 500;
  }
}

}  // namespace

struct ApiServer::Impl {
  Guard& guard;
  ServerOptions options;
  httplib::Server http;
  std::shared_ptr<Hub> hub = std::make_shared<Hub>();
  std::thread thread;
  bool bound = false;

  Impl(Guard& g, ServerOptions o) : guard(g), options(o) {
    const std::size_t workers = options.max_clients + 8;
    http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
    std::weak_ptr<Hub> weak = hub;
    guard.add_listener([weak](const CycleReport& report) {
      auto h = weak.lock();
      if (!h) return;
      std::vector<std::string> frames;
      for (const auto& r : report.results) frames.push_back(sse("result", report.cycle, report.revision, result_to_json(r)));
      for (const auto& a : report.alerts) frames.push_back(sse("alert", report.cycle, report.revision, alert_to_json(a)));
      frames.push_back(sse("model_delta", report.cycle, report.revision,
                           {{"revision", report.revision}, {"cycle", report.cycle}}));
      h->broadcast(report.cycle, std::move(frames));
    });
    routes();
  }

  std::optional<std::uint64_t> revision() const {
    auto snap = guard.latest_snapshot();
    if (!snap) return std::nullopt;
    return snap->revision();
  }

  void ok(httplib::Response& res, int status, json data, std::optional<std::uint64_t> rev) {
    json body = {{"ok", true}, {"data", std::move(data)}};
    if (rev) {
      body["revision"] = *rev;
      res.set_header("X-Model-Revision", std::to_string(*rev));
    }
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void fail(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    json body = {{"ok", false}, {"error", {{"code", code}, {"message", message}}}};
    if (auto rev = revision()) body["revision"] = *rev;
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void fail(httplib::Response& res, const Error& e) { fail(res, status_for(e.code()), to_string(e.code()), e.what()); }

  static json parse_body(const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedRequest, std::string("body is not JSON: ") + e.what());
    }
  }

  void routes() {
    http.Post("/api/v1/transitions", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        const json body = parse_body(req);
        std::vector<TransitionEvent> events;
        if (body.is_array()) {
          for (const auto& item : body) events.push_back(transition_from_json(item));
        } else {
          events.push_back(transition_from_json(body));
        }
        for (const auto& ev : events) guard.check_names(ev);
        const std::string session = req.has_param("session") ? req.get_param_value("session") : "default";
        auto accepted = guard.log_batch(events, session);
        ok(res, 202, {{"accepted", accepted}}, revision());
      } catch (const Error& e) {
        fail(res, e);
      }
    });

    http.Get("/api/v1/model", [this](const httplib::Request&, httplib::Response& res) {
      auto snap = guard.latest_snapshot();
      if (!snap) {
        fail(res, 503, "NotReady", "no analysis cycle has completed yet");
        return;
      }
      ok(res, 200, snapshot_to_json(*snap), snap->revision());
    });

    http.Get("/api/v1/results", [this](const httplib::Request&, httplib::Response& res) {
      json results = json::object();
      for (const auto& entry : guard.results()) {
        auto doc = result_to_json(entry.result);
        doc["cycle"] = entry.cycle;
        results[entry.result.property] = std::move(doc);
      }
      ok(res, 200, {{"cycle", guard.cycle()}, {"results", std::move(results)}}, revision());
    });

    http.Get("/api/v1/alerts", [this](const httplib::Request&, httplib::Response& res) {
      json alerts = json::array();
      for (const auto& a : guard.alerts()) alerts.push_back(alert_to_json(a));
      ok(res, 200, std::move(alerts), revision());
    });

    http.Get("/api/v1/audit", [this](const httplib::Request&, httplib::Response& res) {
      json entries = json::array();
      for (const auto& e : guard.audit_log()) entries.push_back(audit_to_json(e));
      ok(res, 200, std::move(entries), revision());
    });

    http.Get("/api/v1/status", [this](const httplib::Request&, httplib::Response& res) {
      ok(res, 200,
         {{"running", guard.running()},
          {"agent", std::string(to_string(guard.agent_state()))},
          {"cycle", guard.cycle()},
          {"counters", counters_to_json(guard.counters())}},
         revision());
    });

    http.Post("/api/v1/control", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        auto cmd = command_from_json(parse_body(req), CommandSource::Human);
        auto entry = guard.dispatch(cmd);
        if (entry.error) {
          fail(res, 500, "ActuatorFailed", *entry.error);
          return;
        }
        ok(res, 200, audit_to_json(entry), revision());
      } catch (const Error& e) {
        fail(res, e);
      }
    });

    http.Get("/api/v1/stream", [this](const httplib::Request&, httplib::Response& res) { stream(res); });

    http.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      fail(res, res.status, res.status == 404 ? "NotFound" : "HttpError",
           "no handler for " + req.method + " " + req.path);
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  void stream(httplib::Response& res) {
    auto client = std::make_shared<StreamClient>();
    {
      std::lock_guard lock(hub->mutex);
      if (hub->shut) {
        fail(res, 503, "ShuttingDown", "server is stopping");
        return;
      }
      if (hub->clients.size() >= options.max_clients) {
        fail(res, 503, "TooManyClients", "stream client limit reached");
        return;
      }
      // Snapshot of the current state first; later deltas start after it.
      const auto cycle = guard.cycle();
      json results = json::array();
      for (const auto& e : guard.results()) results.push_back(result_to_json(e.result));
      json alerts = json::array();
      for (const auto& a : guard.alerts()) alerts.push_back(alert_to_json(a));
      const auto rev = revision().value_or(0);
      client->last_cycle = cycle;
      client->frames.push_back(sse("snapshot", cycle, rev, {{"results", results}, {"alerts", alerts}}));
      hub->clients.push_back(client);
    }
    const auto heartbeat = std::chrono::milliseconds(options.heartbeat_ms);
    std::weak_ptr<Hub> weak = hub;
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [client, heartbeat](std::size_t, httplib::DataSink& sink) {
          std::deque<std::string> out;
          {
            std::unique_lock lock(client->mutex);
            client->wake.wait_for(lock, heartbeat, [&] { return client->closed || !client->frames.empty(); });
            if (client->closed) return false;
            out.swap(client->frames);
            if (out.empty()) out.push_back(sse("heartbeat", client->last_cycle, 0, json::object()));
          }
          for (const auto& f : out) {
            if (!sink.is_writable() || !sink.write(f.data(), f.size())) return false;
          }
          return true;
        },
        [client, weak](bool) {
          if (auto h = weak.lock()) h->remove(client);
        });
  }
};

ApiServer::ApiServer(Guard& guard, ServerOptions options) : impl_(std::make_unique<Impl>(guard, options)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(ErrorCode::ConfigError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->bound = true;
  spdlog::info("serving /api/v1 on {}:{}", host, bound);
  return bound;
}

void ApiServer::start() {
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void ApiServer::run() { impl_->http.listen_after_bind(); }

void ApiServer::stop() {
  if (!impl_) return;
  impl_->hub->close_all();
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace agentguard
