#pragma once

// JSON-over-HTTP front of a Service, plus the per-query event stream.
//
//   POST /api/sessions                         create a session (optional settings body)
//   GET  /api/sessions/{id}/history            session and transcripts
//   POST /api/sessions/{id}/query              {"text", "query_id"?} -> QueryResponse
//   GET  /api/sessions/{id}/events/{query_id}  text/event-stream of pipeline events
//   GET  /api/sessions/{id}/figures/{query_id}/{index}
//   GET  /api/policy/info
//   GET  /health

#include <memory>
#include <string>
#include <thread>

#include "tankxrl/service/service.hpp"

namespace httplib {
class Server;
}

namespace tankxrl::service {

/// One server-sent event frame: "id: <seq>\nevent: <type>\ndata: <event json>\n\n".
std::string sse_frame(const nlohmann::json& event);

class HttpServer {
 public:
  explicit HttpServer(Service& service, std::size_t threads = 32);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port. Throws IoError.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  void routes();

  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace tankxrl::service
