#include "tankxrl/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <list>
#include <sstream>

#include <CLI11.hpp>

#include "tankxrl/agents/agents.hpp"
#include "tankxrl/service/http.hpp"
#include "tankxrl/service/service.hpp"

namespace tankxrl::cli {

using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::string data_dir;
  std::string weights;
  std::string llm_mode;
  bool have_seed = false;
  std::uint64_t seed = 0;
};

service::ServiceConfig load_config(const Common& c) {
  service::ServiceConfig cfg;
  if (!c.config_path.empty()) cfg = service::ServiceConfig::load(c.config_path);
  if (!c.data_dir.empty()) cfg.data_dir = c.data_dir;
  if (cfg.data_dir.empty()) cfg.data_dir = "tankxrl_data";
  if (!c.weights.empty()) cfg.weights_path = c.weights;
  if (!c.llm_mode.empty()) {
    cfg.llm_mode = c.llm_mode;
  } else if (const char* m = std::getenv("LLM_MODE"); m != nullptr && *m != '\0' && c.config_path.empty()) {
    cfg.llm_mode = m;
  }
  if (c.have_seed) cfg.seed = c.seed;
  return cfg;
}

std::string default_weights() {
#ifdef TANKXRL_DEFAULT_WEIGHTS
  return TANKXRL_DEFAULT_WEIGHTS;
#else
  return "data/policy.json";
#endif
}

std::string data_file(const std::string& name) {
#ifdef TANKXRL_DATA_DIR
  return std::string(TANKXRL_DATA_DIR) + "/" + name;
#else
  return "data/" + name;
#endif
}

std::shared_ptr<const Workbench> workbench(const service::ServiceConfig& cfg) {
  return Workbench::create(cfg.env, load_weights(cfg.weights_path.empty() ? default_weights() : cfg.weights_path),
                           cfg.seed);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f.flush()) throw IoError("write to " + path + " failed");
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Writes the first figure of a result and prints a short report.
void report_result(const XrlResult& r, const std::string& fig_path, std::ostream& out) {
  if (!fig_path.empty() && !r.figures.empty()) write_text(fig_path, r.figures.front().dump());
  json j{{"task", tool_name(r.task)},
         {"arguments", r.arguments},
         {"summary", r.summary},
         {"explanation", agents::template_explanation(r)},
         {"figure", fig_path.empty() ? json(nullptr) : json(fig_path)}};
  out << j.dump(2) << "\n";
}

std::optional<ControlInput> action_arg(const std::vector<double>& a) {
  if (a.empty()) return std::nullopt;
  if (a.size() != 2) throw ConfigError("--action takes two voltages");
  return ControlInput{a[0], a[1]};
}

}  // namespace

int exit_code(const char* code) {
  const std::string c = code;
  if (c == "ConfigError" || c == "ArgumentValidationError" || c == "IntervalOutOfRange" || c == "SessionNotFound" ||
      c == "NotFound" || c == "StepPastHorizon" || c == "ShapeMismatch" || c == "WeightFileError" ||
      c == "PolicyEvalError")
    return 3;
  if (c == "IoError") return 4;
  if (c == "EndpointError") return 5;
  if (c == "OutOfScopeQuery" || c == "GenerationFailure" || c == "DecompositionInfidelity") return 6;
  if (c == "NonFiniteState" || c == "NonFiniteLoss" || c == "NonFiniteAttribution") return 7;
  return 1;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Explanations for a quadruple-tank RL controller"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "service config JSON")->check(CLI::ExistingFile);
  app.add_option("--data-dir", common.data_dir, "session store (default ./tankxrl_data)");
  app.add_option("--weights", common.weights, "policy weights JSON");
  app.add_option("--llm-mode", common.llm_mode, "mock or live (default LLM_MODE, then mock)")
      ->check(CLI::IsMember({"mock", "live"}));
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { common.have_seed = true; common.seed = s; }, "setpoint/background seed");

  std::function<int()> action;
  auto on = [&](CLI::App* sub, std::function<int()> f) { sub->callback([&action, f] { action = f; }); };

  // Options shared by name get one variable per subcommand; CLI11 writes defaults at declaration.
  std::list<std::string> string_slots;
  auto path_opt = [&](CLI::App* sub, const std::string& flag, const std::string& help,
                      const std::string& def) -> std::string& {
    std::string& v = string_slots.emplace_back(def);
    auto* o = sub->add_option(flag, v, help);
    if (def.empty()) o->required();
    else o->default_str(def);
    return v;
  };

  // ---- engine commands ----
  auto* rollout = app.add_subcommand("rollout", "reference rollout of the bundled policy");
  std::string& rollout_out = path_opt(rollout, "--out", "trajectory JSON", "rollout.json");
  on(rollout, [&] {
    const auto wb = workbench(load_config(common));
    const Trajectory& t = wb->reference();
    write_text(rollout_out, trajectory_to_json(t).dump());
    double total = 0.0;
    for (double r : t.rewards) total += r;
    out << json{{"steps", t.length()}, {"dt", t.dt}, {"cumulative_reward", total}, {"out", rollout_out}}.dump(2) << "\n";
    return 0;
  });

  double time = 0.0;
  auto* fi = app.add_subcommand("fi", "feature importance at a time");
  fi->add_option("--t,--time", time, "seconds")->required();
  std::string& fi_out = path_opt(fi, "--out", "shap_bars figure JSON", "fi.json");
  on(fi, [&] {
    const auto wb = workbench(load_config(common));
    report_result(run_feature_importance(*wb, time), fi_out, out);
    return 0;
  });

  std::vector<double> eo_action;
  std::size_t horizon = kDefaultEoHorizon;
  auto* eo = app.add_subcommand("eo", "expected-outcome decomposition at a time");
  eo->add_option("--t,--time", time, "seconds")->required();
  eo->add_option("--action", eo_action, "v1 v2 instead of the policy action")->expected(2);
  eo->add_option("--horizon", horizon, "steps")->default_val(kDefaultEoHorizon)->check(CLI::PositiveNumber);
  std::string& eo_out = path_opt(eo, "--out", "stacked_rewards figure JSON", "eo.json");
  on(eo, [&] {
    const auto wb = workbench(load_config(common));
    report_result(run_expected_outcome(*wb, time, action_arg(eo_action), horizon, builtin_decomposition()), eo_out,
                  out);
    return 0;
  });

  double t_from = 0.0, t_to = 0.0;
  std::optional<double> v1, v2;
  auto* cfa = app.add_subcommand("cf-a", "counterfactual constant action over an interval");
  cfa->add_option("--from", t_from, "seconds")->required();
  cfa->add_option("--to", t_to, "seconds")->required();
  cfa->add_option("--v1", v1, "volts for pump 1");
  cfa->add_option("--v2", v2, "volts for pump 2");
  std::string& cfa_out = path_opt(cfa, "--out", "cf_compare figure JSON", "cf_a.json");
  on(cfa, [&] {
    const auto wb = workbench(load_config(common));
    report_result(run_counterfactual(*wb, CfSpec::action_override(t_from, t_to, v1, v2)), cfa_out, out);
    return 0;
  });

  double alpha = 1.0;
  std::string mode_name;
  auto* cfb = app.add_subcommand("cf-b", "counterfactual smoothed or mirrored behavior");
  cfb->add_option("--alpha", alpha, "smoothing factor, or scale when mirroring")->required();
  cfb->add_option("--from", t_from, "seconds")->required();
  cfb->add_option("--to", t_to, "seconds")->required();
  cfb->add_option("--mode", mode_name, "smooth or opposite (default: opposite if alpha < 0)")
      ->check(CLI::IsMember({"smooth", "opposite"}));
  std::string& cfb_out = path_opt(cfb, "--out", "cf_compare figure JSON", "cf_b.json");
  on(cfb, [&] {
    const auto wb = workbench(load_config(common));
    const BehaviorMode m = mode_name.empty() ? (alpha < 0 ? BehaviorMode::Opposite : BehaviorMode::Smooth)
                           : mode_name == "opposite" ? BehaviorMode::Opposite
                                                     : BehaviorMode::Smooth;
    report_result(run_counterfactual(*wb, CfSpec::behavior(t_from, t_to, alpha, m)), cfb_out, out);
    return 0;
  });

  std::string program_path, rule;
  std::string log_path;
  std::size_t trial_max = 10;
  auto* cfp = app.add_subcommand("cf-p", "counterfactual replacement policy");
  cfp->add_option("--from", t_from, "seconds")->required();
  cfp->add_option("--to", t_to, "seconds")->required();
  auto* prog_opt = cfp->add_option("--program", program_path, "policy DSL file")->check(CLI::ExistingFile);
  auto* rule_opt = cfp->add_option("--rule", rule, "plain-language policy, generated by the coder agent");
  prog_opt->excludes(rule_opt);
  cfp->add_option("--trial-max", trial_max, "coder attempts after the first")->default_val(10)->check(
      CLI::Range(1, 50));
  cfp->add_option("--log", log_path, "iteration log JSON");
  std::string& cfp_out = path_opt(cfp, "--out", "cf_compare figure JSON", "cf_p.json");
  on(cfp, [&] {
    const service::ServiceConfig cfg = load_config(common);
    const auto wb = workbench(cfg);
    if (!program_path.empty()) {
      const std::string src = read_text(program_path);
      const auto program = std::make_shared<const dsl::Program>(dsl::compile(src));
      report_result(run_counterfactual(*wb, CfSpec::policy(t_from, t_to, program, src)), cfp_out, out);
      return 0;
    }
    if (rule.empty()) throw ConfigError("cf-p needs --program or --rule");
    const auto endpoint = agents::make_endpoint(cfg.llm_mode);
    agents::GenerationOptions opt;
    opt.trial_max = trial_max;
    opt.seed = cfg.seed;
    opt.on_attempt = [&err](const agents::AttemptRecord& a) {
      err << "attempt " << a.attempt << ": " << agents::to_string(a.category) << "\n";
    };
    try {
      const agents::PolicyGeneration g = agents::generate_policy(*wb, rule, t_from, t_to, *endpoint, opt);
      if (!log_path.empty()) write_text(log_path, g.log.to_json().dump(2));
      out << "program:\n" << g.source << "\n";
      report_result(g.result, cfp_out, out);
    } catch (const agents::GenerationFailure& e) {
      if (!log_path.empty()) write_text(log_path, e.log().to_json().dump(2));
      throw;
    }
    return 0;
  });

  // ---- service twins ----
  std::string text, session_id, query_id, settings_json;
  std::size_t fig_index = 0;
  auto* ask = app.add_subcommand("ask", "run one query through the full pipeline (POST .../query)");
  ask->add_option("text", text, "natural-language query")->required();
  ask->add_option("--session", session_id, "existing session; a new one is created otherwise");
  ask->add_option("--query-id", query_id, "client-chosen query id");
  ask->add_flag("--pretty", "indent the response");
  on(ask, [&] {
    service::Service svc(load_config(common));
    if (session_id.empty()) {
      session_id = svc.create_session().at("id");
      err << "session " << session_id << "\n";
    }
    try {
      const json r = svc.handle_query(session_id, text, query_id);
      out << (ask->count("--pretty") ? r.dump(2) : r.dump()) << "\n";
      return 0;
    } catch (const service::QueryError& e) {
      out << e.body().dump() << "\n";
      err << "error: " << e.code() << " at " << e.stage() << ": " << e.what() << "\n";
      return exit_code(e.code().c_str());
    }
  });

  auto* session = app.add_subcommand("session", "session store (POST /api/sessions, GET .../history)");
  session->require_subcommand(1);
  session->fallthrough();
  auto* s_create = session->add_subcommand("create", "new session; prints it");
  s_create->add_option("--settings", settings_json, "JSON overrides: few_shot, trial_max, max_tokens, seed");
  on(s_create, [&] {
    service::Service svc(load_config(common));
    const json overrides = settings_json.empty() ? json::object() : json::parse(settings_json);
    out << svc.create_session(overrides).dump() << "\n";
    return 0;
  });
  auto* s_history = session->add_subcommand("history", "session and transcripts");
  s_history->add_option("id", session_id)->required();
  on(s_history, [&] {
    service::Service svc(load_config(common));
    out << svc.get_history(session_id).dump() << "\n";
    return 0;
  });
  auto* s_list = session->add_subcommand("list", "session ids");
  on(s_list, [&] {
    service::Service svc(load_config(common));
    out << json(svc.session_ids()).dump() << "\n";
    return 0;
  });

  auto* events = app.add_subcommand("events", "event stream of a finished query (GET .../events/...)");
  events->add_option("session", session_id)->required();
  events->add_option("query", query_id)->required();
  on(events, [&] {
    service::Service svc(load_config(common));
    if (!svc.has_session(session_id)) throw SessionNotFound("no session " + session_id);
    for (const json& e : svc.channel(session_id, query_id)->events()) out << service::sse_frame(e);
    return 0;
  });

  auto* export_fig = app.add_subcommand("export-figure", "write a served figure (GET .../figures/...)");
  export_fig->add_option("session", session_id)->required();
  export_fig->add_option("query", query_id)->required();
  export_fig->add_option("index", fig_index)->default_val(0);
  std::string& export_fig_out = path_opt(export_fig, "--out", "destination", "");
  on(export_fig, [&] {
    service::Service svc(load_config(common));
    svc.export_figure(session_id, query_id, fig_index, export_fig_out);
    return 0;
  });

  auto* info = app.add_subcommand("policy-info", "policy network summary (GET /api/policy/info)");
  on(info, [&] {
    service::Service svc(load_config(common));
    out << svc.policy_info().dump() << "\n";
    return 0;
  });

  auto* health = app.add_subcommand("health", "service status (GET /health)");
  on(health, [&] {
    service::Service svc(load_config(common));
    out << svc.health().dump() << "\n";
    return 0;
  });

  std::string host, static_dir;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "HTTP API and event streams");
  serve->add_option("--host", host, "bind address (default from config)");
  serve->add_option("--port", port, "port (default from config)")->check(CLI::Range(0, 65535));
  serve->add_option("--static", static_dir, "frontend build served at /")->check(CLI::ExistingDirectory);
  on(serve, [&] {
    service::ServiceConfig cfg = load_config(common);
    if (!host.empty()) cfg.host = host;
    if (port >= 0) cfg.port = port;
    if (!static_dir.empty()) cfg.static_dir = static_dir;
    service::Service svc(cfg);
    service::HttpServer server(svc);
    err << "listening on http://" << cfg.host << ":" << cfg.port << " (data " << cfg.data_dir << ", llm "
        << svc.endpoint().name() << ")\n";
    server.run(cfg.host, cfg.port);
    return 0;
  });

  // ---- benches ----
  std::string bench_mode = "mock", corpus_path, campaign_path, expected_path;
  std::size_t class_trials = 1, cfp_trials = 7, n_queries = 0;
  bool no_few_shot = false;
  auto* bclass = app.add_subcommand("bench-classify", "coordinator accuracy on the labeled corpus");
  bclass->add_option("--mode", bench_mode, "mock (lookup table), heuristic or live")
      ->check(CLI::IsMember({"mock", "heuristic", "live"}))
      ->default_val("mock");
  bclass->add_option("--trials", class_trials, "passes over the corpus")->default_val(1)->check(CLI::PositiveNumber);
  bclass->add_option("--corpus", corpus_path, "labeled queries JSON");
  bclass->add_flag("--no-few-shot", no_few_shot, "coordinator prompt without examples");
  std::string& bclass_report = path_opt(bclass, "--report", "JSON report", "bench_classify.json");
  on(bclass, [&] {
    const service::ServiceConfig cfg = load_config(common);
    const auto corpus = agents::load_corpus(corpus_path.empty() ? data_file("queries.json") : corpus_path);
    std::shared_ptr<const agents::LlmEndpoint> ep;
    if (bench_mode == "mock") ep = std::make_shared<agents::LookupEndpoint>(agents::corpus_lookup(corpus));
    else if (bench_mode == "heuristic") ep = std::make_shared<agents::HeuristicEndpoint>();
    else ep = agents::make_endpoint("live");
    const auto t0 = std::chrono::steady_clock::now();
    const agents::ClassificationReport rep =
        agents::classify_corpus(corpus, *ep, cfg.env, class_trials, cfg.seed, {.few_shot = !no_few_shot});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json j = rep.to_json();
    j["mode"] = bench_mode;
    j["endpoint"] = ep->name();
    j["few_shot"] = !no_few_shot;
    j["seconds"] = secs;
    j["reference"] = {{"model", "gpt-4.1"}, {"few_shot", true}, {"mean", 97.5}, {"std", 0.9}};
    write_text(bclass_report, j.dump(2));
    out << rep.table();
    char line[160];
    std::snprintf(line, sizeof line, "accuracy %.1f %% +/- %.1f over %zu trials (reference: 97.5 +/- 0.9, few-shot gpt-4.1)\n",
                  100.0 * rep.mean_accuracy(), 100.0 * rep.stddev_accuracy(), rep.trials);
    out << line << "report " << bclass_report << "\n";
    return 0;
  });

  auto* bcfp = app.add_subcommand("bench-cfp", "CF-P generation campaign and error transition matrix");
  bcfp->add_option("--mode", bench_mode, "mock (scripted campaign) or live")
      ->check(CLI::IsMember({"mock", "live"}))
      ->default_val("mock");
  bcfp->add_option("--queries", n_queries, "first N campaign queries (default all)");
  bcfp->add_option("--trials", cfp_trials, "trials per query")->default_val(7)->check(CLI::PositiveNumber);
  bcfp->add_option("--campaign", campaign_path, "campaign JSON");
  bcfp->add_option("--expected", expected_path, "expected transition matrix JSON");
  std::string& bcfp_report = path_opt(bcfp, "--report", "JSON report", "bench_cfp.json");
  on(bcfp, [&] {
    const service::ServiceConfig cfg = load_config(common);
    const auto wb = workbench(cfg);
    const auto campaign =
        agents::ScriptedCampaign::load(campaign_path.empty() ? data_file("cfp_campaign.json") : campaign_path);
    const std::size_t nq = n_queries == 0 ? campaign.queries.size() : n_queries;
    if (nq > campaign.queries.size()) throw ConfigError("campaign has only " + std::to_string(campaign.queries.size()) + " queries");
    const std::vector<agents::CampaignQuery> queries(campaign.queries.begin(), campaign.queries.begin() + nq);
    agents::EndpointFactory factory;
    if (bench_mode == "mock") {
      if (cfp_trials > campaign.trials()) throw ConfigError("campaign scripts only " + std::to_string(campaign.trials()) + " trials");
      factory = [&campaign](std::size_t q, std::size_t t) { return campaign.endpoint(q, t); };
    } else {
      const auto live = agents::make_endpoint("live");
      factory = [live](std::size_t, std::size_t) { return live; };
    }
    agents::GenerationOptions opt;
    opt.trial_max = cfg.trial_max;
    opt.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const agents::CampaignReport rep = agents::run_cfp_campaign(*wb, queries, cfp_trials, factory, opt);
    json j = rep.to_json();
    j["mode"] = bench_mode;
    j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    int code = 0;
    const bool full = bench_mode == "mock" && nq == campaign.queries.size() && cfp_trials == campaign.trials();
    if (full || !expected_path.empty()) {
      const json expected = json::parse(read_text(expected_path.empty() ? data_file("cfp_expected_matrix.json") : expected_path));
      const bool match = expected.at("counts") == j["transition_matrix"]["counts"];
      j["fixture_match"] = match;
      if (!match) code = 8;
    }
    write_text(bcfp_report, j.dump(2));
    out << rep.table();
    if (j.contains("fixture_match")) out << "fixture " << (j["fixture_match"].get<bool>() ? "match" : "MISMATCH") << "\n";
    out << "report " << bcfp_report << "\n";
    return code;
  });

  // ---- training ----
  CloneOptions clone_opt;
  std::size_t window = 100;
  auto* clone = app.add_subcommand("clone", "behavior-clone the scripted teacher into a policy network");
  std::string& clone_out = path_opt(clone, "--out", "weights JSON", "");
  clone->add_option("--epochs", clone_opt.epochs, "full-batch epochs")->default_val(clone_opt.epochs);
  clone->add_option("--lr", clone_opt.learning_rate, "learning rate")->default_val(clone_opt.learning_rate);
  clone->add_option("--hidden", clone_opt.hidden, "hidden layer widths")->default_str("64 64");
  clone->add_option("--window", window, "final steps scored for tracking error")->default_val(100);
  on(clone, [&] {
    const service::ServiceConfig cfg = load_config(common);
    clone_opt.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const CloneReport rep = behavior_clone(default_teacher(), cfg.env, clone_opt);
    save_weights(rep.weights, clone_out);
    const TankEnv env(cfg.env, cfg.seed);
    const NetworkPolicy pol(rep.weights, env);
    const Vec2 e = tracking_error(env, pol, window);
    out << json{{"samples", rep.samples},
                {"initial_loss", rep.initial_loss},
                {"final_loss", rep.final_loss},
                {"tracking_error", {e[0], e[1]}},
                {"mean_tracking_error", 0.5 * (e[0] + e[1])},
                {"window", window},
                {"weights_hash", weights_hash(rep.weights)},
                {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}}
               .dump(2)
        << "\n";
    return 0;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  try {
    return action ? action() : 0;
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << "\n";
    return exit_code(e.code().c_str());
  } catch (const json::exception& e) {
    err << "error: ConfigError: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tankxrl::cli
