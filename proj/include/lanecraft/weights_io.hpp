#pragma once

// Weight file: {"<tensor name>": {"shape": [..], "data": [..]}, ...}
// Loading is strict: every parameter must be present with its exact shape and
// the file may not carry names the network does not have.

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lanecraft/perception.hpp"
#include "lanecraft/scene_io.hpp"

namespace lanecraft {

template <class Real>
json weights_to_json(PerceptionNet<Real>& net) {
  json out = json::object();
  net.visit_params([&](const std::string& name, BasicTensor<Real>& t) {
    json data = json::array();
    for (Real v : t.storage()) data.push_back(static_cast<double>(v));
    out[name] = {{"shape", t.shape()}, {"data", std::move(data)}};
  });
  return out;
}

template <class Real>
void weights_from_json(PerceptionNet<Real>& net, const json& j) {
  if (!j.is_object()) throw SchemaError("", "weight file must be an object");
  std::set<std::string> seen;
  net.visit_params([&](const std::string& name, BasicTensor<Real>& t) {
    if (!j.contains(name)) throw SchemaError(name, "missing tensor");
    const json& e = j.at(name);
    detail::expect_keys(e, name, {"shape", "data"});
    if (!e["shape"].is_array() || !e["data"].is_array()) throw SchemaError(name, "shape and data must be arrays");
    Shape shape;
    for (const auto& d : e["shape"]) {
      if (!d.is_number_unsigned()) throw SchemaError(name + ".shape", "expected positive integers");
      shape.push_back(d.get<std::size_t>());
    }
    if (shape != t.shape()) {
      throw SchemaError(name + ".shape", "expected " + shape_string(t.shape()) + ", got " + shape_string(shape));
    }
    if (e["data"].size() != t.size()) throw SchemaError(name + ".data", "length does not match shape");
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<Real>(detail::get_finite(e["data"][i], name + ".data[" + std::to_string(i) + "]"));
    }
    seen.insert(name);
  });
  for (const auto& [k, v] : j.items()) {
    if (!seen.count(k)) throw SchemaError(k, "unknown tensor");
  }
}

template <class Real>
void save_weights(PerceptionNet<Real>& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << weights_to_json(net).dump();
}

template <class Real>
void load_weights(PerceptionNet<Real>& net, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  weights_from_json(net, detail::parse_json(ss.str()));
}

}  // namespace lanecraft
