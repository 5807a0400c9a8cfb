#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/patch.hpp"

namespace geopatch {

inline constexpr std::size_t kNumClasses = 19;

/// Reference-map value for pixels without a mapped class.
inline constexpr std::uint16_t kUnlabeled = 65535;

/// The 44 CORINE Land Cover level-3 codes.
[[nodiscard]] const std::array<int, 44>& clc_level3_codes();

/// Mapping from CORINE level-3 codes onto a 19-class nomenclature.
///
/// The mapping is total over the level-3 code list; codes that have no class
/// are stored as explicitly unmapped.
class ClassNomenclature {
 public:
  using Mapping = std::map<int, std::optional<std::uint8_t>>;

  /// Throws DataError unless every level-3 code is present, no other codes
  /// appear, and every class index is the image of at least one code.
  ClassNomenclature(Mapping mapping, std::array<std::string, kNumClasses> class_names);

  /// The 19-class land-cover nomenclature commonly used for Sentinel
  /// multi-label benchmarks.
  static ClassNomenclature standard19();

  /// Two-column CSV: level-3 code, class index or "-". An optional
  /// "code,class_index" header line and '#' comments are skipped.
  static ClassNomenclature from_csv(std::istream& in);
  static ClassNomenclature load(const std::filesystem::path& path);

  void write_csv(std::ostream& out) const;

  /// Class index for a code; nullopt for unmapped or unknown codes.
  [[nodiscard]] std::optional<std::uint8_t> class_of(int clc_code) const;

  [[nodiscard]] const Mapping& mapping() const { return mapping_; }
  [[nodiscard]] const std::array<std::string, kNumClasses>& class_names() const { return names_; }
  [[nodiscard]] const std::string& class_name(std::size_t index) const { return names_.at(index); }
  /// Throws DataError for unknown names.
  [[nodiscard]] std::size_t class_index(std::string_view name) const;

 private:
  Mapping mapping_;
  std::array<std::string, kNumClasses> names_;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Ring = std::vector<Point>;

/// A polygon as a list of closed rings, first the exterior then holes.
/// Interior is determined by the even-odd rule over all rings.
struct Polygon {
  std::vector<Ring> rings;
};

struct LandCoverPolygon {
  Polygon geometry;
  int clc_code = 0;
};

struct LandCoverPolygonSet {
  std::string crs;
  std::vector<LandCoverPolygon> polygons;
};

/// Per-pixel class raster of one patch, row-major with row 0 at the north edge.
class ReferenceMap {
 public:
  ReferenceMap() = default;
  ReferenceMap(std::size_t width, std::size_t height, std::uint16_t fill = kUnlabeled);
  /// Throws DataError if `values` has the wrong size or holds invalid indices.
  ReferenceMap(std::size_t width, std::size_t height, std::vector<std::uint16_t> values);

  [[nodiscard]] std::size_t width() const { return width_; }
  [[nodiscard]] std::size_t height() const { return height_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }

  [[nodiscard]] std::uint16_t at(std::size_t col, std::size_t row) const {
    return values_[row * width_ + col];
  }
  void set(std::size_t col, std::size_t row, std::uint16_t value) {
    values_[row * width_ + col] = value;
  }
  [[nodiscard]] const std::vector<std::uint16_t>& values() const { return values_; }

  bool operator==(const ReferenceMap&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint16_t> values_;
};

struct RasterizeDiagnostics {
  /// Pixels claimed by more than one polygon; the later polygon wins.
  std::size_t overlap_pixels = 0;
};

/// Burns polygons into the pixel grid of `patch`: each pixel takes the mapped
/// class of the last polygon containing its center. Pixels outside every
/// polygon, or under an unmapped code, are kUnlabeled.
///
/// Throws DataError on CRS mismatch and DomainError if `resolution_m` does not
/// divide the patch size exactly.
[[nodiscard]] ReferenceMap rasterize_reference_map(const LandCoverPolygonSet& polygons,
                                                   const PatchExtent& patch, double resolution_m,
                                                   const ClassNomenclature& nomenclature,
                                                   RasterizeDiagnostics* diagnostics = nullptr);

/// Pixel counts per class; index kNumClasses holds the unlabeled count.
using ClassHistogram = std::array<std::uint64_t, kNumClasses + 1>;

[[nodiscard]] ClassHistogram class_histogram(const ReferenceMap& map);

/// Labeled share of a map kept as an exact ratio.
struct Coverage {
  std::uint64_t labeled = 0;
  std::uint64_t total = 0;

  [[nodiscard]] double fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(labeled) / static_cast<double>(total);
  }
};

[[nodiscard]] Coverage coverage_fraction(const ReferenceMap& map);

/// Sign of num/den - threshold, computed exactly (the threshold is taken as
/// the exact binary value of the double). Requires den > 0.
[[nodiscard]] int compare_ratio(std::uint64_t num, std::uint64_t den, double threshold);

struct MultiLabelSet {
  std::bitset<kNumClasses> bits;

  [[nodiscard]] bool test(std::size_t index) const { return bits.test(index); }
  [[nodiscard]] std::size_t count() const { return bits.count(); }
  [[nodiscard]] std::vector<std::string> names(const ClassNomenclature& nomenclature) const;
  static MultiLabelSet from_names(const std::vector<std::string>& names,
                                  const ClassNomenclature& nomenclature);

  bool operator==(const MultiLabelSet&) const = default;
};

/// Bit c is set iff count(c) / labeled > min_fraction.
/// Throws DomainError unless 0 <= min_fraction < 1 and DataError if the map
/// has no labeled pixels.
[[nodiscard]] MultiLabelSet extract_multilabels(const ReferenceMap& map, double min_fraction = 0.0);

enum class RetentionReason { Kept, NoLabels, LowCoverage };

[[nodiscard]] std::string_view to_string(RetentionReason reason);
[[nodiscard]] RetentionReason parse_retention_reason(std::string_view text);

struct RetentionDecision {
  bool keep = false;
  Coverage coverage;
  RetentionReason reason = RetentionReason::NoLabels;
};

inline constexpr double kDefaultCoverageThreshold = 0.75;

/// Keeps a patch iff it has at least one labeled pixel and its coverage is
/// not below `threshold`. NoLabels takes precedence over LowCoverage.
/// Throws DomainError unless 0 < threshold <= 1.
[[nodiscard]] RetentionDecision retention_decision(const ReferenceMap& map,
                                                   double threshold = kDefaultCoverageThreshold);

}  // namespace geopatch
