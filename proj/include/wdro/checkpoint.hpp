#pragma once

#include <string>

#include "json.hpp"
#include "wdro/nn.hpp"

namespace wdro {

/// {m, truncation, layers:[{weight: row-major, bias}]}; the output layer is
/// the last entry and carries an empty bias. Finite values round-trip exactly.
nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

void save_checkpoint(const Mlp& net, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace wdro
