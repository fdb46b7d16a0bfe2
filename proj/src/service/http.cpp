#include "tankxrl/service/http.hpp"

#include <httplib.h>

namespace tankxrl::service {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  const int status = http_status(e.code());
  send_json(res, status, {{"error", e.code()}, {"message", e.what()}, {"stage", "request"}, {"status", status}});
}

// Runs a handler and turns exceptions into JSON error bodies.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const QueryError& e) {
    send_json(res, e.status(), e.body());
  } catch (const Error& e) {
    send_error(res, e);
  } catch (const json::exception& e) {
    send_error(res, ConfigError(std::string("malformed JSON body: ") + e.what()));
  } catch (const std::exception& e) {
    send_error(res, Error("InternalError", e.what()));
  }
}

json body_object(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw ConfigError("request body must be a JSON object");
  return j;
}

}  // namespace

std::string sse_frame(const json& event) {
  return "id: " + std::to_string(event.value("seq", std::size_t{0})) + "\nevent: " + event.value("type", "message") +
         "\ndata: " + event.dump() + "\n\n";
}

HttpServer::HttpServer(Service& service, std::size_t threads)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::routes() {
  httplib::Server& s = *server_;

  s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service_.health()); });
  });

  s.Get("/api/policy/info", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service_.policy_info()); });
  });

  s.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, service_.create_session(body_object(req))); });
  });

  s.Get(R"(/api/sessions/([^/]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service_.get_history(req.matches[1])); });
  });

  s.Post(R"(/api/sessions/([^/]+)/query)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = body_object(req);
      if (!body.contains("text") || !body["text"].is_string()) throw ConfigError("body needs a string 'text'");
      std::string query_id;
      if (body.contains("query_id")) {
        if (!body["query_id"].is_string()) throw ConfigError("query_id must be a string");
        query_id = body["query_id"].get<std::string>();
      }
      send_json(res, 200, service_.handle_query(req.matches[1], body["text"].get<std::string>(), query_id));
    });
  });

  s.Get(R"(/api/sessions/([^/]+)/figures/([^/]+)/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      res.status = 200;
      res.set_content(service_.figure_payload(req.matches[1], req.matches[2], std::stoul(req.matches[3])),
                      "application/json");
    });
  });

  s.Get(R"(/api/sessions/([^/]+)/events/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto ch = service_.channel(req.matches[1], req.matches[2]);
      const auto give_up = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                              std::chrono::duration<double>(service_.config().events_wait_s));
      auto next = std::make_shared<std::size_t>(0);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [ch, next, give_up](std::size_t, httplib::DataSink& sink) {
        const auto events = ch->wait(*next, Clock::now() + std::chrono::seconds(1));
        for (const json& e : events) {
          const std::string frame = sse_frame(e);
          if (!sink.write(frame.data(), frame.size())) return false;
        }
        *next += events.size();
        if (ch->closed() && ch->wait(*next, Clock::now()).empty()) {
          sink.done();
          return true;
        }
        if (events.empty()) {
          if (*next == 0 && Clock::now() > give_up) {
            const std::string frame = sse_frame({{"seq", 0}, {"type", "timeout"}, {"data", nullptr}});
            sink.write(frame.data(), frame.size());
            sink.done();
            return true;
          }
          static const std::string keepalive = ": keepalive\n\n";
          if (!sink.write(keepalive.data(), keepalive.size())) return false;
        }
        return true;
      });
    });
  });

  if (!service_.config().static_dir.empty() && !s.set_mount_point("/", service_.config().static_dir)) {
    throw IoError("static directory " + service_.config().static_dir + " does not exist");
  }
}

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::run(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace tankxrl::service
