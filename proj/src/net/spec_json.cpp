#include <json.hpp>

#include "minima/net.hpp"
#include "minima/net_json.hpp"

namespace minima::net {

using nlohmann::json;

namespace {

std::size_t positive(const json& j, const char* key) {
  if (!j.contains(key)) throw SpecError(std::string("layer is missing \"") + key + "\"");
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() <= 0)
    throw SpecError(std::string("\"") + key + "\" must be a positive integer");
  return v.get<std::size_t>();
}

}  // namespace

NetworkSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw SpecError("network spec must be a JSON object");
  NetworkSpec spec;
  spec.input_dim = positive(j, "input_dim");
  if (!j.contains("layers") || !j.at("layers").is_array()) throw SpecError("network spec needs a \"layers\" array");
  for (const json& l : j.at("layers")) {
    const std::string kind = l.value("kind", "");
    if (kind == "dense") {
      spec.layers.emplace_back(Dense{positive(l, "in"), positive(l, "out"), l.value("bias", true)});
    } else if (kind == "relu") {
      spec.layers.emplace_back(Relu{});
    } else if (kind == "batchnorm") {
      spec.layers.emplace_back(
          BatchNorm{positive(l, "dim"), l.value("momentum", 0.9), l.value("variance_epsilon", 1e-5)});
    } else if (kind == "softmax_ce") {
      spec.layers.emplace_back(SoftmaxCrossEntropy{positive(l, "classes")});
    } else {
      throw SpecError("unknown layer kind \"" + kind + "\"");
    }
  }
  spec.validate();
  return spec;
}

json spec_to_json_value(const NetworkSpec& spec) {
  json layers = json::array();
  for (const Layer& layer : spec.layers) {
    if (const auto* d = std::get_if<Dense>(&layer))
      layers.push_back({{"kind", "dense"}, {"in", d->fan_in}, {"out", d->fan_out}, {"bias", d->has_bias}});
    else if (std::holds_alternative<Relu>(layer))
      layers.push_back({{"kind", "relu"}});
    else if (const auto* b = std::get_if<BatchNorm>(&layer))
      layers.push_back({{"kind", "batchnorm"},
                        {"dim", b->dim},
                        {"momentum", b->momentum},
                        {"variance_epsilon", b->variance_epsilon}});
    else
      layers.push_back({{"kind", "softmax_ce"}, {"classes", std::get<SoftmaxCrossEntropy>(layer).num_classes}});
  }
  return {{"input_dim", spec.input_dim}, {"layers", layers}};
}

NetworkSpec parse_spec_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("network spec is not valid JSON: ") + e.what());
  }
  return spec_from_json(j);
}

std::string spec_to_json(const NetworkSpec& spec) { return spec_to_json_value(spec).dump(); }

}  // namespace minima::net
