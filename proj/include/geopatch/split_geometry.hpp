#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/patch.hpp"

namespace geopatch {

enum class SplitTag : unsigned char { Train = 0, Validation = 1, Test = 2 };

inline constexpr std::array<SplitTag, 3> kAllSplitTags = {SplitTag::Train, SplitTag::Validation,
                                                         SplitTag::Test};

[[nodiscard]] std::string_view to_string(SplitTag tag);
/// Accepts "train", "validation" (or "val") and "test".
[[nodiscard]] SplitTag parse_split_tag(std::string_view text);

struct FrameWidths {
  double outer = 0.0;
  double inner = 0.0;
};

/// Outer and inner frame widths of the nested-frame split of a square tile
/// of side `side`.
///
/// `inner_fraction` is the area share of the central (test) square and
/// `frame_fraction` the area share of the surrounding (validation) frame; the
/// remaining 1 - inner - frame share is the outer (train) frame. Widths are
/// chosen so the three regions have exactly those areas:
///
///   outer = (1 - sqrt(p + q)) / 2 * side
///   inner = (sqrt(p + q) - sqrt(p)) / 2 * side
///
/// Throws DomainError unless side > 0, p >= 0, q >= 0 and p + q <= 1.
[[nodiscard]] FrameWidths frame_widths(double side, double inner_fraction, double frame_fraction);

struct RegionAreas {
  double outer_frame = 0.0;
  double inner_frame = 0.0;
  double inner_square = 0.0;
};

/// Nested-frame split parameters for one tile size.
class SplitGeometry {
 public:
  SplitGeometry(double side, double inner_fraction, double frame_fraction);

  [[nodiscard]] double side() const { return side_; }
  [[nodiscard]] double inner_fraction() const { return p_; }
  [[nodiscard]] double frame_fraction() const { return q_; }
  [[nodiscard]] double outer_width() const { return widths_.outer; }
  [[nodiscard]] double inner_width() const { return widths_.inner; }

  /// Half-side of the square bounded by the outer frame.
  [[nodiscard]] double middle_half_side() const { return side_ / 2.0 - widths_.outer; }
  /// Half-side of the central test square.
  [[nodiscard]] double inner_half_side() const {
    return side_ / 2.0 - widths_.outer - widths_.inner;
  }

  /// Region areas reconstructed from the frame widths.
  [[nodiscard]] RegionAreas region_areas() const;

  /// Region of a point given by its offset from the tile center. Points on a
  /// boundary go to the outer region.
  [[nodiscard]] SplitTag classify_offset(double dx, double dy) const;

 private:
  double side_;
  double p_;
  double q_;
  FrameWidths widths_;
};

/// Assigns a patch by its center point. Throws DomainError if the patch is
/// not inside the tile or the tile side differs from the geometry side.
[[nodiscard]] SplitTag assign_split(const PatchExtent& patch, const SquareExtent& tile,
                                    const SplitGeometry& geometry);

/// Interleaved baseline: a fixed 4x4 repeating pattern of grid cells (8 train,
/// 4 validation, 4 test) keyed on the cell containing the patch center.
/// Cells that share an edge may carry train and test tags.
[[nodiscard]] SplitTag assign_split_grid_baseline(const PatchExtent& patch, double cell_size);

/// Baseline pattern lookup for a cell index; exposed for tests and plotting.
[[nodiscard]] SplitTag grid_baseline_cell_tag(long long cell_x, long long cell_y);

struct PairSeparation {
  SplitTag from = SplitTag::Train;
  SplitTag to = SplitTag::Train;
  double min_m = 0.0;
  double mean_m = 0.0;
};

/// Center-to-center distance statistics for every ordered pair of distinct
/// tags, in the order (T,V) (T,S) (V,T) (V,S) (S,T) (S,V).
struct SeparationReport {
  std::vector<PairSeparation> pairs;

  [[nodiscard]] const PairSeparation& between(SplitTag from, SplitTag to) const;
};

void to_json(nlohmann::json& j, const SeparationReport& report);
void from_json(const nlohmann::json& j, SeparationReport& report);

using TaggedPatch = std::pair<PatchExtent, SplitTag>;

/// Accumulates separation statistics over independent groups (tiles): pairs
/// are only formed within a group, so patches of different CRSs are never
/// compared.
class SeparationAccumulator {
 public:
  void add_group(std::span<const TaggedPatch> group);
  /// Throws DataError if some tag never appeared.
  [[nodiscard]] SeparationReport report() const;

 private:
  struct Cell {
    double min = 0.0;
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::array<std::array<Cell, 3>, 3> cells_{};
  std::array<std::size_t, 3> tag_counts_{};
};

/// Throws DataError if any tag has no patches.
[[nodiscard]] SeparationReport separation_stats(std::span<const TaggedPatch> assignments);

}  // namespace geopatch
