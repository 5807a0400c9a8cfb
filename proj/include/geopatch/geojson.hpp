#pragma once

#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/labeling.hpp"

namespace geopatch {

/// Land-cover polygon input.
///
/// A FeatureCollection whose features carry Polygon or MultiPolygon
/// geometries in projected coordinates and a "CODE_18" property holding the
/// CORINE level-3 code (string or integer). The CRS is named by the legacy
/// member {"crs": {"type": "name", "properties": {"name": "EPSG:32633"}}};
/// a collection without it is rejected. Rings are kept open (a repeated
/// closing vertex is dropped), as are repeated consecutive vertices.
[[nodiscard]] LandCoverPolygonSet parse_land_cover_geojson(const nlohmann::json& doc);

/// Loads one file, or every *.geojson / *.json file of a directory in
/// lexicographic order. All files must share one CRS.
[[nodiscard]] LandCoverPolygonSet load_land_cover(const std::filesystem::path& path);

/// Inverse of parse_land_cover_geojson, used to write fixtures.
[[nodiscard]] nlohmann::json to_geojson(const LandCoverPolygonSet& set);

}  // namespace geopatch
