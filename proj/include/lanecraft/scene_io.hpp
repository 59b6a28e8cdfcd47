#pragma once

// Scene JSON:
//   {"lanes":[{"left":[{"x":f,"y":f,"occ":0|1,"plan":0|1},...],"right":[...],
//              "int":0|1,"dir":0|1}],
//    "speed":f,"signal":"green|red|yellow|none"}
// Field order is free; unknown and missing fields are rejected.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lanecraft/double_edge.hpp"

namespace lanecraft {

using json = nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error("parse error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string field, const std::string& what)
      : std::runtime_error("schema error at '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte, e.what());
  }
}

inline void expect_keys(const json& j, const std::string& path,
                        std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  for (const char* k : keys) {
    if (!j.contains(k)) throw SchemaError(path.empty() ? k : path + "." + k, "missing field");
  }
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* kk : keys) known = known || k == kk;
    if (!known) throw SchemaError(path.empty() ? k : path + "." + k, "unknown field");
  }
}

inline double get_finite(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw SchemaError(path, "expected finite number");
  return v;
}

inline int get_binary(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw SchemaError(path, "expected 0 or 1");
  const auto v = j.get<long long>();
  if (v != 0 && v != 1) throw SchemaError(path, "expected 0 or 1");
  return static_cast<int>(v);
}

inline json edge_to_json(const Edge& edge) {
  json arr = json::array();
  for (const auto& p : edge) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw SchemaError("point", "non-finite coordinate");
    arr.push_back({{"x", p.x}, {"y", p.y}, {"occ", p.occ}, {"plan", p.plan}});
  }
  return arr;
}

inline Edge edge_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected array");
  Edge edge;
  edge.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    expect_keys(j[k], p, {"x", "y", "occ", "plan"});
    edge.push_back({get_finite(j[k]["x"], p + ".x"), get_finite(j[k]["y"], p + ".y"),
                    get_binary(j[k]["occ"], p + ".occ"), get_binary(j[k]["plan"], p + ".plan")});
  }
  return edge;
}

}  // namespace detail

inline json scene_to_json(const SceneAnnotation& scene) {
  json lanes = json::array();
  for (const auto& lane : scene.lanes) {
    lanes.push_back({{"left", detail::edge_to_json(lane.left)},
                     {"right", detail::edge_to_json(lane.right)},
                     {"int", lane.intersection},
                     {"dir", lane.direction}});
  }
  if (!std::isfinite(scene.speed)) throw SchemaError("speed", "non-finite speed");
  return {{"lanes", lanes}, {"speed", scene.speed}, {"signal", to_string(scene.signal)}};
}

inline SceneAnnotation scene_from_json(const json& j) {
  detail::expect_keys(j, "", {"lanes", "speed", "signal"});
  if (!j["lanes"].is_array()) throw SchemaError("lanes", "expected array");
  SceneAnnotation scene;
  for (std::size_t i = 0; i < j["lanes"].size(); ++i) {
    const std::string p = "lanes[" + std::to_string(i) + "]";
    const json& lj = j["lanes"][i];
    detail::expect_keys(lj, p, {"left", "right", "int", "dir"});
    DoubleEdge lane;
    lane.left = detail::edge_from_json(lj["left"], p + ".left");
    lane.right = detail::edge_from_json(lj["right"], p + ".right");
    lane.intersection = detail::get_binary(lj["int"], p + ".int");
    lane.direction = detail::get_binary(lj["dir"], p + ".dir");
    scene.lanes.push_back(std::move(lane));
  }
  scene.speed = detail::get_finite(j["speed"], "speed");
  if (!j["signal"].is_string()) throw SchemaError("signal", "expected string");
  try {
    scene.signal = signal_from_string(j["signal"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError("signal", e.what());
  }
  return scene;
}

inline std::string serialize(const SceneAnnotation& scene) { return scene_to_json(scene).dump(); }

inline SceneAnnotation deserialize(std::string_view bytes) {
  return scene_from_json(detail::parse_json(bytes));
}

}  // namespace lanecraft
