#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "support/workbench.hpp"
#include "tankxrl/service/http.hpp"
#include "tankxrl/service/service.hpp"

using namespace tankxrl;
using namespace tankxrl::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<std::string, std::string>> kQueries{
    {"explain_feature_importance", "Which state variable makes great contribution to the agent's decisions at t=4020?"},
    {"explain_expected_outcome", "What is the agent trying to achieve in the long run at t=4000?"},
    {"cf_action", "Why don't we set the value of v1 action to 2.5 and v2 action to 7.5 from 4000 to 4200?"},
    {"cf_behavior", "Why don't we act opposite control from t=4000 to 4200, to constrain the instant inverse response in h1?"},
    {"cf_policy",
     "What would happen if we replaced the current RL policy with an on-off controller between 4000 and 4200 "
     "seconds, such that $v_1 = 8.0$ whenever the error of $h_1 < 0.0$, and $v_1 = 1.0$ otherwise; and similarly, "
     "$v_2 = 8.0$ whenever the error of $h_2 < 0.0$, and $v_2 = 1.0$ otherwise?"},
};

std::shared_ptr<const Workbench> shared_workbench() {
  static const auto wb =
      Workbench::create(EnvParams{}, load_weights(tankxrl::testing::source_path("data/policy.json")));
  return wb;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tankxrl-test-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::unique_ptr<Service> make_service(const std::string& data_dir = "") {
  ServiceConfig c;
  c.data_dir = data_dir;
  c.events_wait_s = 2.0;
  return std::make_unique<Service>(c, shared_workbench(), std::make_shared<agents::HeuristicEndpoint>());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_well_formed(const json& r, const std::string& task) {
  CHECK(r.at("task") == task);
  CHECK(r.at("arguments").is_object());
  REQUIRE(r.at("figures").is_array());
  CHECK_FALSE(r.at("figures").empty());
  CHECK(r.at("explanation").is_string());
  CHECK_FALSE(r.at("explanation").get<std::string>().empty());
  CHECK(r.at("explanation_degraded") == false);
  CHECK(r.at("timing").at("total_ms").is_number());
  CHECK(r.at("timing").at("coordinate_ms").is_number());
  CHECK(r.at("timing").at("explain_ms").is_number());
  CHECK(r.at("query_id").is_string());
  CHECK(r.at("created_at").is_string());
  const std::string kind = r["figures"][0].at("kind").get<std::string>();
  if (task == "explain_feature_importance") CHECK(kind == "shap_bars");
  if (task == "explain_expected_outcome") CHECK(kind == "stacked_rewards");
  if (task.rfind("cf_", 0) == 0) CHECK(kind == "cf_compare");
  if (task == "cf_policy") {
    REQUIRE(r.at("iteration_log").is_object());
    CHECK(r["iteration_log"].at("outcome") == "Success");
    CHECK(r.at("program").is_string());
    CHECK(r.at("timing").contains("generate_ms"));
  } else {
    CHECK(r.at("iteration_log").is_null());
    CHECK(r.at("program").is_null());
    CHECK(r.at("timing").contains("dispatch_ms"));
  }
}

std::vector<json> run_all(Service& s, const std::string& session) {
  std::vector<json> out;
  for (const auto& [task, text] : kQueries) out.push_back(canonical_response(s.handle_query(session, text)));
  return out;
}

std::vector<std::string> event_types(const std::vector<json>& events) {
  std::vector<std::string> t;
  for (const json& e : events) t.push_back(e.at("type").get<std::string>());
  return t;
}

// Parses "event:"/"data:" frames, skipping comments.
std::vector<json> parse_sse(const std::string& body) {
  std::vector<json> out;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("data: ", 0) == 0) out.push_back(json::parse(line.substr(6)));
  }
  return out;
}

}  // namespace

TEST_CASE("sessions start empty and record one transcript per query") {
  auto s = make_service();
  const json sess = s->create_session();
  const std::string id = sess.at("id");
  CHECK(id.size() == 16);
  CHECK(sess.at("env_hash") == shared_workbench()->env_hash());
  CHECK(sess.at("weights_hash") == shared_workbench()->weights_hash());
  CHECK(s->get_history(id).at("transcripts").empty());
  s->handle_query(id, kQueries[0].second);
  const json h = s->get_history(id);
  CHECK(h.at("transcripts").size() == 1);
  CHECK(h.at("session").at("queries") == 1);
  CHECK_THROWS_AS(s->get_history("nope"), SessionNotFound);
  CHECK_THROWS_AS(s->handle_query("nope", "hi"), SessionNotFound);
}

TEST_CASE("session settings") {
  auto s = make_service();
  const json sess = s->create_session({{"few_shot", false}, {"trial_max", 3}, {"max_tokens", 64}, {"seed", 5}});
  CHECK(sess.at("settings") == json{{"few_shot", false}, {"trial_max", 3}, {"max_tokens", 64}, {"seed", 5}});
  CHECK_THROWS_AS(s->create_session({{"colour", "red"}}), ConfigError);
  CHECK_THROWS_AS(s->create_session({{"trial_max", 0}}), ConfigError);
  CHECK_THROWS_AS(s->create_session({{"max_tokens", "many"}}), ConfigError);
  CHECK_THROWS_AS(s->create_session({{"seed", -1}}), ConfigError);
  CHECK_THROWS_AS(s->create_session(json::array()), ConfigError);
}

TEST_CASE("all five tasks end to end in mock mode") {
  auto s = make_service();
  const std::string id = s->create_session().at("id");
  for (const auto& [task, text] : kQueries) {
    CAPTURE(task);
    const json r = s->handle_query(id, text);
    check_well_formed(r, task);
  }
  const json history = s->get_history(id);
  REQUIRE(history.at("transcripts").size() == 5);
  CHECK(history["transcripts"][2].at("arguments") == json{{"t_start", 4000.0}, {"t_end", 4200.0}, {"v1", 2.5}, {"v2", 7.5}});
  CHECK(history["transcripts"][3].at("arguments").at("mode") == "opposite");

  const json cfp = history["transcripts"][4];
  const auto& cf = cfp.at("figures")[0];
  CHECK(cf.at("interval") == json::array({4000.0, 4200.0}));
}

TEST_CASE("out-of-scope and failing queries") {
  auto s = make_service();
  const std::string id = s->create_session().at("id");
  try {
    s->handle_query(id, "asdf qwerty zxcv");
    FAIL("expected QueryError");
  } catch (const QueryError& e) {
    CHECK(std::string(e.code()) == "OutOfScopeQuery");
    CHECK(e.stage() == "coordinate");
    CHECK(e.status() == 422);
  }
  try {
    s->handle_query(id, "What if we used a PID controller from 4000 to 4200?");
    FAIL("expected QueryError");
  } catch (const QueryError& e) {
    CHECK(std::string(e.code()) == "OutOfScopeQuery");
    CHECK(e.stage() == "generate");
  }
  const json h = s->get_history(id);
  REQUIRE(h.at("transcripts").size() == 2);
  CHECK(h["transcripts"][0].at("error").at("error") == "OutOfScopeQuery");
  CHECK(h["transcripts"][1].at("error").at("stage") == "generate");
  CHECK(h["transcripts"][1].at("task") == "cf_policy");
  CHECK_FALSE(h["transcripts"][0].contains("task"));

  CHECK_THROWS_AS(s->handle_query(id, ""), QueryError);
  CHECK_THROWS_AS(s->handle_query(id, kQueries[0].second, "bad id!"), QueryError);
  s->handle_query(id, kQueries[0].second, "mine");
  try {
    s->handle_query(id, kQueries[0].second, "mine");
    FAIL("expected QueryError");
  } catch (const QueryError& e) {
    CHECK(e.status() == 400);
  }
}

TEST_CASE("generation failure carries the iteration log") {
  agents::ScriptedEndpoint ep;
  ep.add_tool(agents::Role::Coordinator, std::nullopt,
              agents::ToolCall{"cf_policy", {{"t_start", 4000}, {"t_end", 4200}, {"description", "anything"}}});
  ep.add_text(agents::Role::Coder, std::nullopt, "policy p { v1 = = 1 }");
  ep.add_text(agents::Role::Debugger, std::nullopt, "fix it");
  Service s(ServiceConfig{}, shared_workbench(), std::make_shared<agents::ScriptedEndpoint>(ep));
  const std::string id = s.create_session({{"trial_max", 2}}).at("id");
  const auto ch = s.channel(id, "g1");
  try {
    s.handle_query(id, "anything", "g1");
    FAIL("expected QueryError");
  } catch (const QueryError& e) {
    CHECK(std::string(e.code()) == "GenerationFailure");
    CHECK(e.status() == 422);
    const json b = e.body();
    CHECK(b.at("iteration_log").at("attempt_count") == 3);
    CHECK(b.at("iteration_log").at("attempts").size() == 4);
  }
  CHECK(event_types(ch->events()) ==
        std::vector<std::string>{"started", "coordinated", "attempt", "attempt", "attempt", "attempt", "failed"});
}

TEST_CASE("repeated identical queries give identical responses") {
  auto s = make_service();
  const std::string id = s->create_session().at("id");
  for (const auto& [task, text] : kQueries) {
    CAPTURE(task);
    const json a = s->handle_query(id, text);
    const json b = s->handle_query(id, text);
    CHECK(a.at("query_id") != b.at("query_id"));
    CHECK(canonical_response(a).dump() == canonical_response(b).dump());
  }
}

TEST_CASE("event stream order for a generated policy") {
  auto s = make_service();
  const std::string id = s->create_session().at("id");
  const json r = s->handle_query(id, kQueries[4].second, "p1");
  const auto events = s->channel(id, "p1")->events();
  CHECK(event_types(events) ==
        std::vector<std::string>{"started", "coordinated", "attempt", "dispatched", "explained", "completed"});
  for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].at("seq") == i);
  CHECK(events[2].at("data") == r.at("iteration_log").at("attempts")[0]);
  CHECK(s->channel(id, "p1")->closed());
}

TEST_CASE("persistence: sessions replay from the log") {
  TempDir dir;
  std::string id;
  json before;
  json live_events;
  {
    auto s = make_service(dir.path.string());
    id = s->create_session({{"seed", 3}}).at("id");
    s->handle_query(id, kQueries[0].second);
    s->handle_query(id, kQueries[4].second);
    CHECK_THROWS_AS(s->handle_query(id, "what is the weather like"), QueryError);
    CHECK_THROWS_AS(s->handle_query(id, "What if we used a PID controller from 4000 to 4200?"), QueryError);
    for (const char* q : {"q0001", "q0002", "q0003", "q0004"}) live_events[q] = s->channel(id, q)->events();
    before = s->get_history(id);
  }
  const fs::path log = dir.path / "sessions" / (id + ".jsonl");
  REQUIRE(fs::exists(log));
  {
    auto s = make_service(dir.path.string());
    CHECK(s->get_history(id).dump() == before.dump());
    for (const char* q : {"q0001", "q0002", "q0003", "q0004"}) {
      CAPTURE(q);
      CHECK(json(s->channel(id, q)->events()) == live_events.at(q));
    }
  }
  {
    // An interrupted write leaves a torn last line.
    std::ofstream out(log, std::ios::app);
    out << R"({"type":"transcript","transcript":{"query_id":"q00)";
  }
  auto s = make_service(dir.path.string());
  CHECK(s->get_history(id).dump() == before.dump());
  const json next = s->handle_query(id, kQueries[1].second);
  CHECK(next.at("query_id") == "q0005");
  CHECK(s->get_history(id).at("transcripts").size() == 5);
  CHECK(s->get_history(id).at("session").at("settings").at("seed") == 3);
}

TEST_CASE("eight concurrent sessions match serial execution") {
  auto s = make_service();
  const std::string serial_id = s->create_session().at("id");
  const std::vector<json> serial = run_all(*s, serial_id);

  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back(s->create_session().at("id"));
  std::vector<std::future<std::vector<json>>> futures;
  for (const std::string& id : ids) {
    futures.push_back(std::async(std::launch::async, [&s, id] { return run_all(*s, id); }));
  }
  for (auto& f : futures) {
    const std::vector<json> got = f.get();
    REQUIRE(got.size() == serial.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CAPTURE(i);
      CHECK(got[i].dump() == serial[i].dump());
    }
  }
}

TEST_CASE("figure export matches the served payload byte for byte") {
  TempDir dir;
  auto s = make_service();
  const std::string id = s->create_session().at("id");
  const json r = s->handle_query(id, kQueries[2].second);
  const std::string qid = r.at("query_id");
  const fs::path out = dir.path / "cf.json";
  s->export_figure(id, qid, 0, out.string());
  CHECK(read_file(out) == r.at("figures")[0].dump());
  CHECK(read_file(out) == s->figure_payload(id, qid, 0));
  CHECK_THROWS_AS(s->figure_payload(id, qid, 5), NotFound);
  CHECK_THROWS_AS(s->figure_payload(id, "zzz", 0), NotFound);
  CHECK_THROWS_AS(s->export_figure(id, qid, 0, (dir.path / "missing" / "x.json").string()), IoError);
}

TEST_CASE("config file parsing") {
  const ServiceConfig c = ServiceConfig::from_json({{"data_dir", "/tmp/x"}, {"port", 9000}, {"trial_max", 4}});
  CHECK(c.data_dir == "/tmp/x");
  CHECK(c.port == 9000);
  CHECK(c.trial_max == 4);
  CHECK(ServiceConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(ServiceConfig::from_json({{"port", "eighty"}}), ConfigError);
  CHECK_THROWS_AS(ServiceConfig::from_json({{"port", 70000}}), ConfigError);
  CHECK_THROWS_AS(ServiceConfig::load("/nonexistent/config.json"), IoError);
  CHECK(http_status("SessionNotFound") == 404);
  CHECK(http_status("EndpointError") == 502);
  CHECK(http_status("NonFiniteState") == 500);
}

// ---- HTTP ------------------------------------------------------------------------------

TEST_CASE("http api round trip") {
  auto s = make_service();
  HttpServer server(*s);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body).at("status") == "ok");

  auto info = cli.Get("/api/policy/info");
  REQUIRE(info);
  CHECK(json::parse(info->body).at("weights_hash") == shared_workbench()->weights_hash());
  CHECK(json::parse(info->body).at("llm").at("mock") == true);

  auto created = cli.Post("/api/sessions", "", "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const std::string id = json::parse(created->body).at("id");

  auto empty = cli.Get("/api/sessions/" + id + "/history");
  REQUIRE(empty);
  CHECK(json::parse(empty->body).at("transcripts").empty());

  // Subscribe before the query starts and watch it live.
  auto live = std::async(std::launch::async, [port, id] {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    auto res = c.Get("/api/sessions/" + id + "/events/live1");
    return res ? res->body : std::string();
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  auto q = cli.Post("/api/sessions/" + id + "/query", json{{"text", kQueries[4].second}, {"query_id", "live1"}}.dump(),
                    "application/json");
  REQUIRE(q);
  CHECK(q->status == 200);
  const json resp = json::parse(q->body);
  check_well_formed(resp, "cf_policy");
  CHECK(q->body == s->get_history(id).at("transcripts")[0].dump());

  const std::vector<json> frames = parse_sse(live.get());
  CHECK(event_types(frames) ==
        std::vector<std::string>{"started", "coordinated", "attempt", "dispatched", "explained", "completed"});

  auto again = cli.Get("/api/sessions/" + id + "/events/live1");
  REQUIRE(again);
  CHECK(again->get_header_value("Content-Type") == "text/event-stream");
  CHECK(parse_sse(again->body) == frames);

  auto fig = cli.Get("/api/sessions/" + id + "/figures/live1/0");
  REQUIRE(fig);
  CHECK(fig->status == 200);
  CHECK(fig->body == resp.at("figures")[0].dump());

  auto hist = cli.Get("/api/sessions/" + id + "/history");
  REQUIRE(hist);
  CHECK(hist->body == s->get_history(id).dump());
  server.stop();
}

TEST_CASE("http api errors") {
  auto s = make_service();
  HttpServer server(*s);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);
  const std::string id = s->create_session().at("id");

  auto missing = cli.Get("/api/sessions/nope/history");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body).at("error") == "SessionNotFound");

  auto bad_json = cli.Post("/api/sessions/" + id + "/query", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);

  auto no_text = cli.Post("/api/sessions/" + id + "/query", R"({"txt": "hi"})", "application/json");
  REQUIRE(no_text);
  CHECK(no_text->status == 400);

  auto gibberish = cli.Post("/api/sessions/" + id + "/query", R"({"text": "blorp glorp"})", "application/json");
  REQUIRE(gibberish);
  CHECK(gibberish->status == 422);
  const json body = json::parse(gibberish->body);
  CHECK(body.at("error") == "OutOfScopeQuery");
  CHECK(body.at("stage") == "coordinate");

  auto bad_settings = cli.Post("/api/sessions", R"({"trial_max": 1000})", "application/json");
  REQUIRE(bad_settings);
  CHECK(bad_settings->status == 400);

  auto no_fig = cli.Get("/api/sessions/" + id + "/figures/q0001/0");
  REQUIRE(no_fig);
  CHECK(no_fig->status == 404);

  auto timeout = cli.Get("/api/sessions/" + id + "/events/never");
  REQUIRE(timeout);
  CHECK(event_types(parse_sse(timeout->body)) == std::vector<std::string>{"timeout"});
  server.stop();
}

TEST_CASE("golden response fixtures") {
  auto s = make_service();
  const std::string id = s->create_session().at("id");
  const char* names[] = {"fi", "eo", "cf_a", "cf_b", "cf_p"};
  for (std::size_t i = 0; i < kQueries.size(); ++i) {
    CAPTURE(names[i]);
    const json r = s->handle_query(id, kQueries[i].second, names[i]);
    const fs::path dir = tankxrl::testing::source_path("data/fixtures");
    const json golden = json::parse(read_file(dir / (std::string("response_") + names[i] + ".json")));
    CHECK(canonical_response(r) == canonical_response(golden));
    std::string frames;
    for (const json& e : s->channel(id, names[i])->events()) frames += sse_frame(e);
    CHECK(frames == read_file(dir / (std::string("events_") + names[i] + ".sse")));
  }
}
