#pragma once
// NetworkSpec <-> JSON:
//   {"input_dim": 60,
//    "layers": [{"kind": "dense", "in": 60, "out": 64, "bias": false},
//               {"kind": "batchnorm", "dim": 64, "momentum": 0.9, "variance_epsilon": 1e-5},
//               {"kind": "relu"},
//               {"kind": "dense", "in": 64, "out": 10, "bias": true},
//               {"kind": "softmax_ce", "classes": 10}]}
// "bias", "momentum" and "variance_epsilon" are optional.

#include <json.hpp>

#include "minima/net.hpp"

namespace minima::net {

NetworkSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json_value(const NetworkSpec& spec);

}  // namespace minima::net
