#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "tankxrl/env.hpp"

namespace tankxrl::agents {

/// Replaces {name} with values.at(name). Placeholders without a value, and
/// braces that do not enclose an identifier, are left untouched.
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& values);

/// Prompt templates read from a directory of UTF-8 files, one per name
/// (<name>.txt), plus descriptions.json with per-tool fn_description and
/// figure_description entries.
class PromptLibrary {
 public:
  static PromptLibrary load(const std::string& dir);
  /// $TANKXRL_PROMPTS_DIR, else the prompts/ directory of the source tree.
  static const PromptLibrary& default_library();
  static std::string default_dir();

  const std::string& get(const std::string& name) const;
  bool has(const std::string& name) const { return templates_.count(name) != 0; }
  std::string render(const std::string& name, const std::map<std::string, std::string>& values) const;

  std::string fn_description(const std::string& tool) const;
  std::string figure_description(const std::string& tool) const;
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::map<std::string, std::string> templates_;
  nlohmann::json descriptions_;
};

/// The environment parameters as shown to the agents.
std::string env_params_text(const EnvParams& params);

}  // namespace tankxrl::agents
