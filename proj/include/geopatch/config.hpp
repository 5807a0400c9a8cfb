#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/labeling.hpp"
#include "geopatch/patch_pipeline.hpp"
#include "geopatch/tensor_store.hpp"

namespace geopatch {

enum class SplitMethod { Geographic, Grid };

[[nodiscard]] std::string_view to_string(SplitMethod method);
/// "geographic" or "grid"; throws UsageError otherwise.
[[nodiscard]] SplitMethod parse_split_method(std::string_view text);

/// Every setting of a pipeline run.
///
/// TOML layout (all keys optional, unknown keys rejected):
///
///   patch_size_m = 1200.0
///   resolution_m = 10.0
///   coverage_threshold = 0.75
///   min_label_fraction = 0.0
///   nomenclature_path = "data/nomenclature_19.csv"
///   modality = "S1+S2"
///   seed = 0
///   jobs = 0
///
///   [split]
///   p = 0.25
///   q = 0.25
///   method = "geographic"   # or "grid"
///   grid_cell_m = 1200.0
///
///   [paths]
///   tiles = "tiles"
///   land_cover = "clc"
///   out_dir = "out"
///   store = "out/store"
///   baseline = "out/patches"
///   snow_list = "snow.txt"
///   cloud_list = "cloud.txt"
///
///   [store]
///   batch_size = 1024
///   map_size = 68719476736
///   lookups = 10000
///
/// Relative paths in a file are resolved against the file's directory.
struct RunConfig {
  double patch_size_m = kDefaultPatchSizeM;
  double resolution_m = 10.0;
  double split_p = 0.25;
  double split_q = 0.25;
  SplitMethod split_method = SplitMethod::Geographic;
  std::optional<double> grid_cell_m;  // defaults to the patch size
  double coverage_threshold = kDefaultCoverageThreshold;
  double min_label_fraction = 0.0;
  std::filesystem::path nomenclature_path;  // empty: built-in 19-class table
  Modality modality = Modality::S1S2;

  std::filesystem::path tiles_dir;
  std::filesystem::path land_cover;
  std::filesystem::path out_dir;
  std::filesystem::path store_path;    // defaults to <out_dir>/store
  std::filesystem::path baseline_dir;  // defaults to <out_dir>/patches
  std::filesystem::path snow_list;
  std::filesystem::path cloud_list;

  std::uint64_t seed = 0;
  std::size_t jobs = 0;  // 0: one per hardware thread
  std::size_t batch_size = 1024;
  std::uint64_t map_size = kDefaultMapSize;
  std::size_t lookups = 10000;

  [[nodiscard]] double grid_cell() const { return grid_cell_m.value_or(patch_size_m); }
  [[nodiscard]] std::filesystem::path store() const;
  [[nodiscard]] std::filesystem::path baseline() const;

  /// Throws UsageError if a numeric field is outside its valid range.
  void validate() const;

  [[nodiscard]] ClassNomenclature nomenclature() const;

  bool operator==(const RunConfig&) const = default;
};

/// Applies the settings of a TOML document on top of `base`. Throws
/// UsageError on syntax errors, unknown keys and wrongly typed values.
[[nodiscard]] RunConfig apply_config_text(std::string_view toml_text, RunConfig base,
                                          const std::filesystem::path& base_dir = {});
/// Throws IoError if the file cannot be read.
[[nodiscard]] RunConfig apply_config_file(const std::filesystem::path& path, RunConfig base);

/// Canonical JSON form; the run-specific output directory is left out so
/// equal settings hash equally wherever they are written.
void to_json(nlohmann::json& j, const RunConfig& config);

/// SHA-256 of the canonical JSON form.
[[nodiscard]] std::string config_hash(const RunConfig& config);

}  // namespace geopatch
