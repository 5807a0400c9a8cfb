#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/labeling.hpp"
#include "geopatch/patch.hpp"
#include "geopatch/raster_io.hpp"
#include "geopatch/split_geometry.hpp"

namespace geopatch {

// ---------------------------------------------------------------------------
// Tile quality gate

/// Quality indicators of one optical tile. Radiometric and geometric checks
/// are mandatory; any other indicator is informational.
struct TileQualityReport {
  std::string tile_id;
  std::optional<bool> radiometric_ok;
  std::optional<bool> geometric_ok;
  std::map<std::string, bool> other_flags;
};

/// {"tile_id": ..., "radiometric_ok": bool, "geometric_ok": bool, <other>: bool}
void to_json(nlohmann::json& j, const TileQualityReport& report);
void from_json(const nlohmann::json& j, TileQualityReport& report);

/// True iff every mandatory indicator passed. Throws DataError if one is
/// missing.
[[nodiscard]] bool check_quality(const TileQualityReport& report);

/// Tile ids that pass the gate, in input order.
[[nodiscard]] std::vector<std::string> passing_tiles(std::span<const TileQualityReport> reports);

// ---------------------------------------------------------------------------
// Tiling

/// Origin of grid cell (col, row) of a tile; the single formula used both for
/// cutting and for re-deriving stored extents.
[[nodiscard]] Point patch_origin(const SquareExtent& tile, int col, int row, double patch_size);

/// floor(side / patch_size)^2 patches anchored at the tile's north-west
/// corner, row-major. The margin at the east and south edges stays unpatched.
/// Throws DomainError unless patch_size > 0.
[[nodiscard]] std::vector<PatchExtent> tile_to_patches(const SquareExtent& tile,
                                                       std::string_view tile_id,
                                                       double patch_size = kDefaultPatchSizeM);

// ---------------------------------------------------------------------------
// Patch pixels and screening

struct Band {
  std::string name;
  double resolution_m = 10.0;
  std::size_t width = 0;
  std::size_t height = 0;
  PixelBuffer values = std::vector<std::uint16_t>{};
  std::optional<double> nodata;

  /// Nodata pixels (and NaN for float bands).
  [[nodiscard]] std::size_t invalid_count() const;
};

struct PatchPixels {
  std::vector<Band> bands;

  [[nodiscard]] const Band* find(std::string_view name) const;
  /// Throws DataError unless every band covers the same ground extent.
  void validate() const;
};

struct PatchFlags {
  bool snow = false;
  bool cloud_or_shadow = false;
  bool has_invalid = false;

  bool operator==(const PatchFlags&) const = default;
};

enum class Disposition { Main, AuxiliaryList, Dropped };

[[nodiscard]] std::string_view to_string(Disposition disposition);
[[nodiscard]] Disposition parse_disposition(std::string_view text);

/// Invalid data dominates snow and cloud.
[[nodiscard]] Disposition disposition_of(const PatchFlags& flags);

/// Dropped if the flags or any band's nodata mask report invalid pixels,
/// AuxiliaryList if snow or cloud/shadow is flagged, Main otherwise.
[[nodiscard]] Disposition screen_patch(const PatchPixels& pixels, const PatchFlags& flags);

/// Cuts the window of `patch` out of a tile band. Throws DataError if the
/// band grid is not aligned with the patch or the window leaves the raster.
[[nodiscard]] Band cut_band(const GeoRaster& tile_band, std::string_view name,
                            const PatchExtent& patch);

// ---------------------------------------------------------------------------
// Model input

enum class Modality { S1, S2, S1S2 };

[[nodiscard]] std::string_view to_string(Modality modality);
/// Accepts "S1", "S2" and "S1+S2" (also "S1S2").
[[nodiscard]] Modality parse_modality(std::string_view text);

/// Sentinel-2 channels fed to models, ascending band number. The 60 m
/// bands B01 and B09 are left out.
inline constexpr std::array<std::string_view, 10> kS2Channels = {
    "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B11", "B12"};
inline constexpr std::array<std::string_view, 2> kS1Channels = {"VV", "VH"};
inline constexpr std::array<std::string_view, 12> kS2AllBands = {
    "B01", "B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A", "B09", "B11", "B12"};

/// Channel names in stacking order: S2 channels then S1 channels.
[[nodiscard]] std::vector<std::string> channel_order(Modality modality);

/// Replicates every pixel into a factor x factor block.
[[nodiscard]] Band upsample_nearest(const Band& band, std::size_t factor);

/// Channel-first float32 volume.
struct ModelInput {
  std::vector<std::string> channels;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  [[nodiscard]] float at(std::size_t channel, std::size_t row, std::size_t col) const {
    return data[(channel * height + row) * width + col];
  }
};

/// Stacks the modality's channels on the finest grid among them, upsampling
/// coarser bands by nearest neighbour. Throws DataError if a band is missing
/// or its resolution is not an integer multiple of the target grid.
[[nodiscard]] ModelInput prepare_model_input(const PatchPixels& pixels, Modality modality);

// ---------------------------------------------------------------------------
// Dataset statistics

struct DatasetRecord {
  std::string patch_id;
  SplitTag split = SplitTag::Train;
  MultiLabelSet labels;
  PatchFlags flags;
};

/// Per-class counts of Main-disposition patches in each split.
struct ClassSplitCounts {
  std::array<std::array<std::uint64_t, 3>, kNumClasses> counts{};

  [[nodiscard]] std::uint64_t at(std::size_t cls, SplitTag split) const {
    return counts[cls][static_cast<std::size_t>(split)];
  }
  [[nodiscard]] std::uint64_t total(std::size_t cls) const;

  ClassSplitCounts& operator+=(const ClassSplitCounts& other);
  bool operator==(const ClassSplitCounts&) const = default;

  /// {"classes": [{"name", "train", "validation", "test", "total"}, ...]}
  [[nodiscard]] nlohmann::json to_json(const ClassNomenclature& nomenclature) const;
};

[[nodiscard]] ClassSplitCounts operator+(ClassSplitCounts a, const ClassSplitCounts& b);

[[nodiscard]] ClassSplitCounts dataset_stats(std::span<const DatasetRecord> records);

}  // namespace geopatch
