#include "geopatch/dataset_index.hpp"

#include <algorithm>
#include <variant>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geopatch/error.hpp"
#include "geopatch/file_util.hpp"
#include "geopatch/raster_io.hpp"

namespace geopatch {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const IndexEntry& e) {
  j = {
      {"id", e.patch.id()},
      {"tile_id", e.patch.tile_id},
      {"col", e.patch.col},
      {"row", e.patch.row},
      {"origin_x", e.patch.origin_x},
      {"origin_y", e.patch.origin_y},
      {"size", e.patch.size},
      {"crs", e.patch.crs},
      {"tile", {{"origin_x", e.tile.origin_x}, {"origin_y", e.tile.origin_y}, {"side", e.tile.side}}},
      {"flags",
       {{"snow", e.flags.snow},
        {"cloud_or_shadow", e.flags.cloud_or_shadow},
        {"has_invalid", e.flags.has_invalid}}},
      {"disposition", to_string(e.disposition)},
      {"bands", e.bands},
  };
  if (e.coverage) {
    j["coverage"] = {{"labeled", e.coverage->labeled},
                     {"total", e.coverage->total},
                     {"fraction", e.coverage->fraction()}};
  }
  if (e.retention) j["retention"] = to_string(*e.retention);
  if (e.labels) j["labels"] = *e.labels;
  if (e.split) j["split"] = to_string(*e.split);
}

void from_json(const json& j, IndexEntry& e) {
  e = IndexEntry{};
  e.patch.tile_id = j.at("tile_id").get<std::string>();
  e.patch.col = j.at("col").get<int>();
  e.patch.row = j.at("row").get<int>();
  e.patch.origin_x = j.at("origin_x").get<double>();
  e.patch.origin_y = j.at("origin_y").get<double>();
  e.patch.size = j.at("size").get<double>();
  e.patch.crs = j.at("crs").get<std::string>();
  const auto& tile = j.at("tile");
  e.tile = {tile.at("origin_x").get<double>(), tile.at("origin_y").get<double>(),
            tile.at("side").get<double>(), e.patch.crs};
  const auto& flags = j.at("flags");
  e.flags = {flags.at("snow").get<bool>(), flags.at("cloud_or_shadow").get<bool>(),
             flags.at("has_invalid").get<bool>()};
  e.disposition = parse_disposition(j.at("disposition").get<std::string>());
  e.bands = j.at("bands").get<std::vector<std::string>>();
  if (j.contains("coverage")) {
    const auto& c = j.at("coverage");
    e.coverage = Coverage{c.at("labeled").get<std::uint64_t>(), c.at("total").get<std::uint64_t>()};
  }
  if (j.contains("retention")) {
    e.retention = parse_retention_reason(j.at("retention").get<std::string>());
  }
  if (j.contains("labels")) e.labels = j.at("labels").get<std::vector<std::string>>();
  if (j.contains("split")) e.split = parse_split_tag(j.at("split").get<std::string>());
  if (j.contains("id") && j.at("id").get<std::string>() != e.patch.id()) {
    throw DataError(fmt::format("index entry id {} does not match its tile/col/row",
                                j.at("id").get<std::string>()));
  }
}

void to_json(json& j, const DatasetIndex& index) {
  j = {{"tiles_passed", index.tiles_passed},
       {"tiles_failed", index.tiles_failed},
       {"patches", index.entries}};
}

void from_json(const json& j, DatasetIndex& index) {
  index.tiles_passed = j.at("tiles_passed").get<std::vector<std::string>>();
  index.tiles_failed = j.at("tiles_failed").get<std::vector<std::string>>();
  index.entries = j.at("patches").get<std::vector<IndexEntry>>();
}

DatasetIndex DatasetIndex::load(const fs::path& dir) {
  const auto path = path_in(dir);
  if (!fs::is_regular_file(path)) {
    throw IoError(fmt::format("no dataset index at {}; run the tile stage first", path.string()));
  }
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end(), nullptr, true, false).get<DatasetIndex>();
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed dataset index {}: {}", path.string(), e.what()));
  }
}

void DatasetIndex::save(const fs::path& dir) const {
  fs::create_directories(dir);
  write_file_atomic(path_in(dir), json(*this).dump(1) + "\n");
}

void DatasetIndex::write_sidecars(const fs::path& dir) const {
  for (const auto& e : entries) {
    if (e.disposition == Disposition::Dropped) continue;
    json meta = e;
    meta.erase("bands");
    const auto pdir = patch_dir(dir, e.patch.id());
    fs::create_directories(pdir);
    write_file_atomic(pdir / "metadata.json", meta.dump(1) + "\n");
  }
}

fs::path patch_dir(const fs::path& dataset_dir, std::string_view patch_id) {
  return dataset_dir / "patches" / std::string(patch_id);
}

namespace {

Tensor tensor_of(const GeoRaster& raster) {
  const Shape shape{raster.height, raster.width};
  return std::visit(
      [&](const auto& values) {
        return Tensor::from(std::span(values.data(), values.size()), shape);
      },
      raster.pixels);
}

}  // namespace

TensorRecord load_patch_record(const fs::path& dir, std::span<const std::string> bands) {
  TensorRecord record;
  for (const auto& name : bands) {
    const auto file = dir / (name + ".tif");
    if (!fs::is_regular_file(file)) {
      throw DataError(fmt::format("band {} missing in {}", name, dir.string()));
    }
    record.tensors.emplace(name, tensor_of(read_geotiff(file)));
  }
  const auto ref = dir / (std::string(kReferenceMapName) + ".tif");
  if (fs::is_regular_file(ref)) {
    record.tensors.emplace(std::string(kReferenceMapName), tensor_of(read_geotiff(ref)));
  }
  return record;
}

BaselineLoader patch_files_baseline(fs::path dir, std::vector<std::string> bands) {
  return [dir = std::move(dir), bands = std::move(bands)](const std::string& key) {
    return load_patch_record(dir / key, bands);
  };
}

void write_band(const fs::path& path, const Band& band, const PatchExtent& patch) {
  GeoRaster raster;
  raster.width = band.width;
  raster.height = band.height;
  raster.origin_x = patch.origin_x;
  raster.origin_y = patch.origin_y;
  raster.pixel_size = band.resolution_m;
  raster.crs = patch.crs;
  raster.nodata = band.nodata;
  raster.pixels = band.values;
  write_geotiff(path, raster);
}

}  // namespace geopatch
