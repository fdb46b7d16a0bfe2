#pragma once

#include <string>

#include "tankxrl/network.hpp"
#include "tankxrl/xrl.hpp"

namespace tankxrl::testing {

inline std::string source_path(const std::string& rel) { return std::string(TANKXRL_SOURCE_DIR) + "/" + rel; }

/// Plant with the bundled policy, built once per test binary.
inline const Workbench& bundled_workbench() {
  static const auto wb = Workbench::create(EnvParams{}, load_weights(source_path("data/policy.json")));
  return *wb;
}

}  // namespace tankxrl::testing
