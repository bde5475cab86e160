#pragma once

#include <string>

#include "kinsobol/network.hpp"

namespace testing_models {

inline std::string model_path(const std::string& file) { return std::string(KINSOBOL_MODEL_DIR) + "/" + file; }

/// A -> 0 with rate k, X(0) = n0 copies at V = 1.
inline kinsobol::Model decay(double n0, double k, double horizon) {
  return kinsobol::parse_model("species: A\nx0: " + std::to_string(n0) + "\nvnom: 1\ntfinal: " +
                               std::to_string(horizon) + "\nreaction k: A -> 0\nrate k = " + std::to_string(k) +
                               "\nqoi: timeavg A\n");
}

}  // namespace testing_models
