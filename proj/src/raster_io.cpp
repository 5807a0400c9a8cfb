#include "geopatch/raster_io.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>
#include <string_view>

#include <fmt/format.h>
#include <tiffio.h>

#include "geopatch/error.hpp"

namespace geopatch {

namespace {

constexpr ttag_t kModelPixelScaleTag = 33550;
constexpr ttag_t kModelTiepointTag = 33922;
constexpr ttag_t kGeoKeyDirectoryTag = 34735;
constexpr ttag_t kGeoAsciiParamsTag = 34737;
constexpr ttag_t kGdalNodataTag = 42113;

constexpr std::uint16_t kGTModelTypeGeoKey = 1024;
constexpr std::uint16_t kGTRasterTypeGeoKey = 1025;
constexpr std::uint16_t kGTCitationGeoKey = 1026;
constexpr std::uint16_t kProjectedCSTypeGeoKey = 3072;

// Field names must outlive every TIFF handle, hence the static array.
const TIFFFieldInfo kGeoFields[] = {
    {kModelPixelScaleTag, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     const_cast<char*>("ModelPixelScaleTag")},
    {kModelTiepointTag, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     const_cast<char*>("ModelTiepointTag")},
    {kGeoKeyDirectoryTag, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1,
     const_cast<char*>("GeoKeyDirectoryTag")},
    {kGeoAsciiParamsTag, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0,
     const_cast<char*>("GeoAsciiParamsTag")},
    {kGdalNodataTag, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDAL_NODATA")},
};

TIFFExtendProc parent_extender = nullptr;

void geo_tag_extender(TIFF* tif) {
  TIFFMergeFieldInfo(tif, kGeoFields, sizeof(kGeoFields) / sizeof(kGeoFields[0]));
  if (parent_extender != nullptr) parent_extender(tif);
}

thread_local std::string last_tiff_error;

void capture_error(const char* module, const char* fmt, va_list ap) {
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  last_tiff_error = module != nullptr ? fmt::format("{}: {}", module, buf) : std::string(buf);
}

void install_handlers() {
  static std::once_flag once;
  std::call_once(once, [] {
    parent_extender = TIFFSetTagExtender(geo_tag_extender);
    TIFFSetErrorHandler(capture_error);
    TIFFSetWarningHandler(nullptr);
  });
}

struct TiffCloser {
  void operator()(TIFF* tif) const { TIFFClose(tif); }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

TiffHandle open_tiff(const std::filesystem::path& path, const char* mode) {
  install_handlers();
  last_tiff_error.clear();
  TIFF* tif = TIFFOpen(path.c_str(), mode);
  if (tif == nullptr) {
    throw IoError(fmt::format("cannot open GeoTIFF {}: {}", path.string(), last_tiff_error));
  }
  return TiffHandle(tif);
}

template <typename T>
void read_pixels(TIFF* tif, const std::filesystem::path& path, std::size_t width,
                 std::size_t height, std::vector<T>& out) {
  out.assign(width * height, T{});
  if (TIFFIsTiled(tif)) {
    std::uint32_t tw = 0;
    std::uint32_t th = 0;
    TIFFGetField(tif, TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(tif, TIFFTAG_TILELENGTH, &th);
    std::vector<T> tile(static_cast<std::size_t>(tw) * th);
    for (std::uint32_t y = 0; y < height; y += th) {
      for (std::uint32_t x = 0; x < width; x += tw) {
        const ttile_t index = TIFFComputeTile(tif, x, y, 0, 0);
        if (TIFFReadEncodedTile(tif, index, tile.data(),
                                static_cast<tmsize_t>(tile.size() * sizeof(T))) < 0) {
          throw DataError(fmt::format("{}: {}", path.string(), last_tiff_error));
        }
        const std::size_t rows = std::min<std::size_t>(th, height - y);
        const std::size_t cols = std::min<std::size_t>(tw, width - x);
        for (std::size_t r = 0; r < rows; ++r) {
          std::memcpy(&out[(y + r) * width + x], &tile[r * tw], cols * sizeof(T));
        }
      }
    }
    return;
  }
  for (std::uint32_t row = 0; row < height; ++row) {
    if (TIFFReadScanline(tif, &out[row * width], row, 0) < 0) {
      throw DataError(fmt::format("{}: {}", path.string(), last_tiff_error));
    }
  }
}

template <typename T>
void write_pixels(TIFF* tif, const std::filesystem::path& path, std::size_t width,
                  std::size_t height, const std::vector<T>& pixels) {
  // Scanline writes take a non-const buffer.
  std::vector<T> row(width);
  for (std::uint32_t r = 0; r < height; ++r) {
    std::memcpy(row.data(), &pixels[r * width], width * sizeof(T));
    if (TIFFWriteScanline(tif, row.data(), r, 0) < 0) {
      throw IoError(fmt::format("{}: {}", path.string(), last_tiff_error));
    }
  }
}

std::optional<int> parse_epsg(std::string_view crs) {
  constexpr std::string_view prefix = "EPSG:";
  if (crs.substr(0, prefix.size()) != prefix) return std::nullopt;
  const std::string digits(crs.substr(prefix.size()));
  if (digits.empty() || digits.size() > 5 ||
      digits.find_first_not_of("0123456789") != std::string::npos) {
    return std::nullopt;
  }
  const int code = std::stoi(digits);
  if (code <= 0 || code > 65535) return std::nullopt;
  return code;
}

std::string read_crs(TIFF* tif) {
  std::uint16_t count = 0;
  std::uint16_t* keys = nullptr;
  if (TIFFGetField(tif, kGeoKeyDirectoryTag, &count, &keys) != 1 || count < 4) return {};
  const std::uint16_t num_keys = keys[3];
  std::string citation;
  for (std::uint16_t k = 0; k < num_keys && 4u + 4u * k + 3u < count; ++k) {
    const std::uint16_t* entry = keys + 4 + 4 * k;
    if (entry[0] == kProjectedCSTypeGeoKey && entry[1] == 0) {
      return fmt::format("EPSG:{}", entry[3]);
    }
    if (entry[0] == kGTCitationGeoKey && entry[1] == kGeoAsciiParamsTag) {
      char* ascii = nullptr;
      if (TIFFGetField(tif, kGeoAsciiParamsTag, &ascii) == 1 && ascii != nullptr) {
        const std::string all(ascii);
        citation = all.substr(entry[3], entry[2]);
        // GeoTIFF terminates each ASCII parameter with '|'.
        if (!citation.empty() && citation.back() == '|') citation.pop_back();
      }
    }
  }
  return citation;
}

}  // namespace

GeoRaster read_geotiff(const std::filesystem::path& path) {
  auto handle = open_tiff(path, "r");
  TIFF* tif = handle.get();

  GeoRaster raster;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint16_t samples = 1;
  std::uint16_t bits = 0;
  std::uint16_t format = SAMPLEFORMAT_UINT;
  std::uint16_t planar = PLANARCONFIG_CONTIG;
  TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &samples);
  TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);
  if (samples != 1) {
    throw DataError(fmt::format("{}: expected one band, found {}", path.string(), samples));
  }
  raster.width = width;
  raster.height = height;

  std::uint16_t n = 0;
  double* scale = nullptr;
  double* tiepoint = nullptr;
  if (TIFFGetField(tif, kModelPixelScaleTag, &n, &scale) != 1 || n < 2) {
    throw DataError(fmt::format("{}: missing ModelPixelScaleTag", path.string()));
  }
  if (scale[0] != scale[1]) {
    throw DataError(fmt::format("{}: non-square pixels ({} x {})", path.string(), scale[0],
                                scale[1]));
  }
  raster.pixel_size = scale[0];
  if (TIFFGetField(tif, kModelTiepointTag, &n, &tiepoint) != 1 || n < 6) {
    throw DataError(fmt::format("{}: missing ModelTiepointTag", path.string()));
  }
  raster.origin_x = tiepoint[3] - tiepoint[0] * raster.pixel_size;
  raster.origin_y = tiepoint[4] + tiepoint[1] * raster.pixel_size;
  raster.crs = read_crs(tif);

  char* nodata = nullptr;
  if (TIFFGetField(tif, kGdalNodataTag, &nodata) == 1 && nodata != nullptr) {
    try {
      raster.nodata = std::stod(nodata);
    } catch (const std::exception&) {
      throw DataError(fmt::format("{}: unparsable GDAL_NODATA '{}'", path.string(), nodata));
    }
  }

  if (bits == 16 && format == SAMPLEFORMAT_UINT) {
    std::vector<std::uint16_t> px;
    read_pixels(tif, path, width, height, px);
    raster.pixels = std::move(px);
  } else if (bits == 16 && format == SAMPLEFORMAT_INT) {
    std::vector<std::int16_t> px;
    read_pixels(tif, path, width, height, px);
    raster.pixels = std::move(px);
  } else if (bits == 32 && format == SAMPLEFORMAT_IEEEFP) {
    std::vector<float> px;
    read_pixels(tif, path, width, height, px);
    raster.pixels = std::move(px);
  } else {
    throw DataError(fmt::format("{}: unsupported sample type ({} bits, format {})", path.string(),
                                bits, format));
  }
  return raster;
}

void write_geotiff(const std::filesystem::path& path, const GeoRaster& raster) {
  const std::size_t expected = raster.pixel_count();
  const std::size_t actual = std::visit([](const auto& v) { return v.size(); }, raster.pixels);
  if (actual != expected) {
    throw DataError(fmt::format("{}: raster holds {} pixels, expected {}", path.string(), actual,
                                expected));
  }
  if (raster.width == 0 || raster.height == 0) {
    throw DataError(fmt::format("{}: empty raster", path.string()));
  }

  auto handle = open_tiff(path, "w");
  TIFF* tif = handle.get();

  const auto [bits, format] = std::visit(
      [](const auto& v) -> std::pair<std::uint16_t, std::uint16_t> {
        using T = typename std::decay_t<decltype(v)>::value_type;
        if constexpr (std::is_same_v<T, float>) return {32, SAMPLEFORMAT_IEEEFP};
        if constexpr (std::is_same_v<T, std::int16_t>) return {16, SAMPLEFORMAT_INT};
        return {16, SAMPLEFORMAT_UINT};
      },
      raster.pixels);

  TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(raster.width));
  TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(raster.height));
  TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, std::uint16_t{1});
  TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, bits);
  TIFFSetField(tif, TIFFTAG_SAMPLEFORMAT, format);
  TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, static_cast<std::uint32_t>(raster.height));

  double scale[3] = {raster.pixel_size, raster.pixel_size, 0.0};
  double tiepoint[6] = {0.0, 0.0, 0.0, raster.origin_x, raster.origin_y, 0.0};
  TIFFSetField(tif, kModelPixelScaleTag, std::uint16_t{3}, scale);
  TIFFSetField(tif, kModelTiepointTag, std::uint16_t{6}, tiepoint);

  std::vector<std::uint16_t> keys = {1, 1, 0, 0};
  std::string ascii;
  keys.insert(keys.end(), {kGTModelTypeGeoKey, 0, 1, 1});   // projected
  keys.insert(keys.end(), {kGTRasterTypeGeoKey, 0, 1, 1});  // pixel is area
  const auto epsg = parse_epsg(raster.crs);
  if (!raster.crs.empty() && !epsg) {
    ascii = raster.crs + "|";
    keys.insert(keys.end(), {kGTCitationGeoKey, static_cast<std::uint16_t>(kGeoAsciiParamsTag),
                             static_cast<std::uint16_t>(ascii.size()), 0});
  }
  if (epsg) {
    keys.insert(keys.end(), {kProjectedCSTypeGeoKey, 0, 1, static_cast<std::uint16_t>(*epsg)});
  }
  keys[3] = static_cast<std::uint16_t>((keys.size() - 4) / 4);
  TIFFSetField(tif, kGeoKeyDirectoryTag, static_cast<std::uint16_t>(keys.size()), keys.data());
  if (!ascii.empty()) TIFFSetField(tif, kGeoAsciiParamsTag, ascii.c_str());

  std::string nodata_text;
  if (raster.nodata) {
    nodata_text = fmt::format("{}", *raster.nodata);
    TIFFSetField(tif, kGdalNodataTag, nodata_text.c_str());
  }

  std::visit([&](const auto& v) { write_pixels(tif, path, raster.width, raster.height, v); },
             raster.pixels);
  if (TIFFWriteDirectory(tif) != 1) {
    throw IoError(fmt::format("{}: {}", path.string(), last_tiff_error));
  }
}

}  // namespace geopatch
