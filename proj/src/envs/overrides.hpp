#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rtslab/envs/env.hpp"
#include "rtslab/errors.hpp"

namespace rtslab::envs::detail {

using Field = std::pair<const char*, std::variant<double*, int*>>;

inline void apply_overrides(const PhysicsOverrides& overrides, const std::vector<Field>& fields) {
  for (const auto& [key, value] : overrides) {
    bool matched = false;
    for (const auto& [name, slot] : fields) {
      if (key != name) continue;
      matched = true;
      if (auto* d = std::get_if<double*>(&slot)) {
        **d = value;
      } else {
        *std::get<int*>(slot) = static_cast<int>(value);
      }
    }
    if (!matched) throw ConfigError("env.physics." + key, "unknown physics constant");
  }
}

}  // namespace rtslab::envs::detail
