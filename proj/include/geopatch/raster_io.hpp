#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace geopatch {

using PixelBuffer =
    std::variant<std::vector<std::uint16_t>, std::vector<std::int16_t>, std::vector<float>>;

/// Single-band north-up raster with square pixels.
struct GeoRaster {
  std::size_t width = 0;
  std::size_t height = 0;
  double origin_x = 0.0;  // west edge of column 0
  double origin_y = 0.0;  // north edge of row 0
  double pixel_size = 0.0;
  std::string crs;
  std::optional<double> nodata;
  PixelBuffer pixels = std::vector<std::uint16_t>{};

  [[nodiscard]] std::size_t pixel_count() const { return width * height; }
};

/// Reads a single-band GeoTIFF (uint16, int16 or float32; stripped or
/// tiled; uncompressed or any codec libtiff was built with). CRS comes from
/// ProjectedCSTypeGeoKey as "EPSG:<code>", falling back to GTCitationGeoKey.
/// Throws IoError if the file cannot be read and DataError if it is not a
/// supported north-up single-band GeoTIFF.
[[nodiscard]] GeoRaster read_geotiff(const std::filesystem::path& path);

/// Writes an uncompressed single-strip GeoTIFF. A CRS of the form
/// "EPSG:<code>" is stored as ProjectedCSTypeGeoKey, anything else as a
/// citation string. Nodata goes into the GDAL_NODATA tag.
void write_geotiff(const std::filesystem::path& path, const GeoRaster& raster);

}  // namespace geopatch
