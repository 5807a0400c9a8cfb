#pragma once

#include <string>
#include <string_view>

namespace geopatch {

/// Default patch footprint in meters.
inline constexpr double kDefaultPatchSizeM = 1200.0;

/// Axis-aligned square region in projected coordinates.
///
/// The origin is the upper-left (north-west) corner, matching raster
/// conventions: the extent spans [origin_x, origin_x + side] horizontally
/// and [origin_y - side, origin_y] vertically.
struct SquareExtent {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double side = 0.0;
  std::string crs;

  [[nodiscard]] double min_x() const { return origin_x; }
  [[nodiscard]] double max_x() const { return origin_x + side; }
  [[nodiscard]] double min_y() const { return origin_y - side; }
  [[nodiscard]] double max_y() const { return origin_y; }
  [[nodiscard]] double center_x() const { return origin_x + side / 2.0; }
  [[nodiscard]] double center_y() const { return origin_y - side / 2.0; }

  bool operator==(const SquareExtent&) const = default;
};

/// Footprint and identity of one patch cut from a tile.
struct PatchExtent {
  std::string tile_id;
  int col = 0;
  int row = 0;
  double origin_x = 0.0;  // west edge
  double origin_y = 0.0;  // north edge
  double size = kDefaultPatchSizeM;
  std::string crs;

  [[nodiscard]] double center_x() const { return origin_x + size / 2.0; }
  [[nodiscard]] double center_y() const { return origin_y - size / 2.0; }
  [[nodiscard]] SquareExtent extent() const { return {origin_x, origin_y, size, crs}; }

  /// Store key and file stem, "{tile_id}_{col:02d}_{row:02d}".
  [[nodiscard]] std::string id() const;

  bool operator==(const PatchExtent&) const = default;
};

[[nodiscard]] std::string make_patch_id(std::string_view tile_id, int col, int row);

/// True if `inner` lies fully inside `outer` (boundaries inclusive).
[[nodiscard]] bool contains(const SquareExtent& outer, const SquareExtent& inner);

}  // namespace geopatch
