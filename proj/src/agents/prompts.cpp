#include "tankxrl/agents/prompts.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tankxrl/error.hpp"

#ifndef TANKXRL_PROMPTS_DIR
#define TANKXRL_PROMPTS_DIR "prompts"
#endif

namespace tankxrl::agents {

namespace fs = std::filesystem;

std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && (std::isalnum(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        const auto it = values.find(tmpl.substr(i + 1, j - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

PromptLibrary PromptLibrary::load(const std::string& dir) {
  PromptLibrary lib;
  lib.dir_ = dir;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("prompt directory not found: " + dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    lib.templates_[entry.path().stem().string()] = ss.str();
  }
  const fs::path desc = fs::path(dir) / "descriptions.json";
  if (fs::exists(desc)) {
    std::ifstream in(desc);
    try {
      lib.descriptions_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("descriptions.json: " + std::string(e.what()));
    }
  } else {
    lib.descriptions_ = nlohmann::json::object();
  }
  return lib;
}

std::string PromptLibrary::default_dir() {
  const char* env = std::getenv("TANKXRL_PROMPTS_DIR");
  if (env != nullptr && *env != '\0') return env;
  return TANKXRL_PROMPTS_DIR;
}

const PromptLibrary& PromptLibrary::default_library() {
  static const PromptLibrary lib = load(default_dir());
  return lib;
}

const std::string& PromptLibrary::get(const std::string& name) const {
  const auto it = templates_.find(name);
  if (it == templates_.end()) throw ConfigError("prompt template '" + name + "' missing from " + dir_);
  return it->second;
}

std::string PromptLibrary::render(const std::string& name, const std::map<std::string, std::string>& values) const {
  std::map<std::string, std::string> all = values;
  if (has("system_description") && all.count("system_description") == 0) {
    all["system_description"] = get("system_description");
  }
  return render_template(get(name), all);
}

std::string PromptLibrary::fn_description(const std::string& tool) const {
  if (!descriptions_.contains(tool)) return "";
  return descriptions_[tool].value("fn_description", "");
}

std::string PromptLibrary::figure_description(const std::string& tool) const {
  if (!descriptions_.contains(tool)) return "";
  return descriptions_[tool].value("figure_description", "");
}

std::string env_params_text(const EnvParams& p) {
  nlohmann::ordered_json j;
  j["delta_t"] = p.dt;
  j["total_time"] = p.total_time;
  j["n_steps"] = p.n_steps;
  j["x0"] = p.initial_obs;
  j["targets"] = {"h1", "h2"};
  j["states"] = {"h1", "h2", "h3", "h4", "error_h1", "error_h2"};
  j["actions"] = {"v1", "v2"};
  j["o_space"] = {{"low", p.obs_low}, {"high", p.obs_high}};
  j["a_space"] = {{"low", p.action_low}, {"high", p.action_high}};
  j["setpoint_range"] = p.setpoint_range;
  j["gamma"] = p.gamma;
  return j.dump(2);
}

}  // namespace tankxrl::agents
