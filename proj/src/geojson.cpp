#include "geopatch/geojson.hpp"

#include <algorithm>
#include <fstream>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geopatch/error.hpp"

namespace geopatch {

namespace {

using nlohmann::json;

Ring parse_ring(const json& coords) {
  Ring ring;
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2) throw DataError("GeoJSON position needs x and y");
    Point p{pos[0].get<double>(), pos[1].get<double>()};
    if (!ring.empty() && ring.back().x == p.x && ring.back().y == p.y) continue;
    ring.push_back(p);
  }
  // Closing vertex is implicit in the scanline rasterizer.
  if (ring.size() > 1 && ring.front().x == ring.back().x && ring.front().y == ring.back().y) {
    ring.pop_back();
  }
  return ring;
}

Polygon parse_polygon(const json& rings) {
  Polygon polygon;
  for (const auto& coords : rings) {
    Ring ring = parse_ring(coords);
    if (ring.size() >= 3) polygon.rings.push_back(std::move(ring));
  }
  return polygon;
}

int parse_code(const json& properties) {
  if (!properties.is_object() || !properties.contains("CODE_18")) {
    throw DataError("GeoJSON feature lacks the CODE_18 property");
  }
  const auto& code = properties.at("CODE_18");
  if (code.is_number_integer()) return code.get<int>();
  if (code.is_string()) {
    const auto text = code.get<std::string>();
    std::size_t pos = 0;
    int value = 0;
    try {
      value = std::stoi(text, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != text.size()) {
      throw DataError(fmt::format("CODE_18 '{}' is not an integer code", text));
    }
    return value;
  }
  throw DataError("CODE_18 must be a string or integer");
}

}  // namespace

LandCoverPolygonSet parse_land_cover_geojson(const json& doc) {
  if (doc.value("type", "") != "FeatureCollection") {
    throw DataError("land-cover input must be a GeoJSON FeatureCollection");
  }
  LandCoverPolygonSet set;
  try {
    set.crs = doc.at("crs").at("properties").at("name").get<std::string>();
  } catch (const json::exception&) {
    throw DataError("GeoJSON FeatureCollection lacks a named crs member");
  }
  for (const auto& feature : doc.at("features")) {
    const int code = parse_code(feature.value("properties", json::object()));
    const auto& geometry = feature.at("geometry");
    const auto type = geometry.at("type").get<std::string>();
    const auto& coords = geometry.at("coordinates");
    if (type == "Polygon") {
      set.polygons.push_back({parse_polygon(coords), code});
    } else if (type == "MultiPolygon") {
      for (const auto& part : coords) set.polygons.push_back({parse_polygon(part), code});
    } else {
      throw DataError(fmt::format("unsupported GeoJSON geometry '{}'", type));
    }
  }
  return set;
}

LandCoverPolygonSet load_land_cover(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".geojson" || ext == ".json")) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw IoError(fmt::format("no GeoJSON files in {}", path.string()));
    }
  } else {
    files.push_back(path);
  }

  LandCoverPolygonSet merged;
  for (std::size_t i = 0; i < files.size(); ++i) {
    std::ifstream in(files[i]);
    if (!in) throw IoError(fmt::format("cannot open {}", files[i].string()));
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError(fmt::format("{}: {}", files[i].string(), e.what()));
    }
    auto set = parse_land_cover_geojson(doc);
    if (i == 0) {
      merged.crs = set.crs;
    } else if (set.crs != merged.crs) {
      throw DataError(fmt::format("{} uses CRS '{}', expected '{}'", files[i].string(), set.crs,
                                  merged.crs));
    }
    std::move(set.polygons.begin(), set.polygons.end(), std::back_inserter(merged.polygons));
  }
  return merged;
}

json to_geojson(const LandCoverPolygonSet& set) {
  json features = json::array();
  for (const auto& polygon : set.polygons) {
    json rings = json::array();
    for (const auto& ring : polygon.geometry.rings) {
      json coords = json::array();
      for (const auto& p : ring) coords.push_back({p.x, p.y});
      if (!ring.empty()) coords.push_back({ring.front().x, ring.front().y});
      rings.push_back(std::move(coords));
    }
    features.push_back({{"type", "Feature"},
                        {"properties", {{"CODE_18", std::to_string(polygon.clc_code)}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", std::move(rings)}}}});
  }
  return {{"type", "FeatureCollection"},
          {"crs", {{"type", "name"}, {"properties", {{"name", set.crs}}}}},
          {"features", std::move(features)}};
}

}  // namespace geopatch
