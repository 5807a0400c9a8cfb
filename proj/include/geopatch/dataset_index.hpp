#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/labeling.hpp"
#include "geopatch/patch.hpp"
#include "geopatch/patch_pipeline.hpp"
#include "geopatch/split_geometry.hpp"
#include "geopatch/tensor_record.hpp"
#include "geopatch/tensor_store.hpp"

namespace geopatch {

/// Everything known about one generated patch. Later pipeline stages fill
/// in the optional fields.
struct IndexEntry {
  PatchExtent patch;
  SquareExtent tile;
  PatchFlags flags;
  Disposition disposition = Disposition::Main;
  std::vector<std::string> bands;  // files written for the patch, sorted

  std::optional<Coverage> coverage;
  std::optional<RetentionReason> retention;
  std::optional<std::vector<std::string>> labels;  // class names
  std::optional<SplitTag> split;

  /// Not dropped for invalid data and not removed by the label stage.
  [[nodiscard]] bool retained() const {
    return disposition != Disposition::Dropped &&
           (!retention || *retention == RetentionReason::Kept);
  }

  bool operator==(const IndexEntry&) const = default;
};

void to_json(nlohmann::json& j, const IndexEntry& entry);
void from_json(const nlohmann::json& j, IndexEntry& entry);

/// Dataset directory layout:
///
///   index.json                  all patches, sorted by id
///   patches/<id>/<BAND>.tif     band windows of every non-dropped patch
///   patches/<id>/reference_map.tif
///   patches/<id>/metadata.json  labels, split, coverage and flags
///   snow_cloud_patches.txt      ids of the auxiliary list
struct DatasetIndex {
  std::vector<std::string> tiles_passed;
  std::vector<std::string> tiles_failed;
  std::vector<IndexEntry> entries;

  [[nodiscard]] static std::filesystem::path path_in(const std::filesystem::path& dir) {
    return dir / "index.json";
  }
  /// Throws IoError if there is no index and DataError if it is malformed.
  [[nodiscard]] static DatasetIndex load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  /// Rewrites metadata.json for every non-dropped patch.
  void write_sidecars(const std::filesystem::path& dir) const;
};

void to_json(nlohmann::json& j, const DatasetIndex& index);
void from_json(const nlohmann::json& j, DatasetIndex& index);

[[nodiscard]] std::filesystem::path patch_dir(const std::filesystem::path& dataset_dir,
                                              std::string_view patch_id);

/// Name of the reference-map tensor and file stem.
inline constexpr std::string_view kReferenceMapName = "reference_map";

/// Reads the GeoTIFFs of one patch directory into a record: one tensor per
/// requested band (shape [height, width], native dtype) plus the reference
/// map when present. Throws DataError if a requested band is missing.
[[nodiscard]] TensorRecord load_patch_record(const std::filesystem::path& dir,
                                             std::span<const std::string> bands);

/// Baseline for bench_random_read that opens and decodes the per-patch
/// GeoTIFF files under `<dir>/<key>/`.
[[nodiscard]] BaselineLoader patch_files_baseline(std::filesystem::path dir,
                                                  std::vector<std::string> bands);

/// Writes a band window as a georeferenced GeoTIFF.
void write_band(const std::filesystem::path& path, const Band& band, const PatchExtent& patch);

}  // namespace geopatch
