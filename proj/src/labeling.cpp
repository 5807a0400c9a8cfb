#include "geopatch/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <limits>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "geopatch/error.hpp"

namespace geopatch {

namespace {

constexpr std::array<int, 44> kLevel3Codes = {
    111, 112, 121, 122, 123, 124, 131, 132, 133, 141, 142, 211, 212, 213, 221,
    222, 223, 231, 241, 242, 243, 244, 311, 312, 313, 321, 322, 323, 324, 331,
    332, 333, 334, 335, 411, 412, 421, 422, 423, 511, 512, 521, 522, 523};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

int parse_int(const std::string& text, std::string_view what, std::size_t line_no) {
  std::size_t pos = 0;
  int value = 0;
  try {
    value = std::stoi(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) {
    throw DataError(fmt::format("nomenclature line {}: invalid {} '{}'", line_no, what, text));
  }
  return value;
}

struct BBox {
  double min_x, min_y, max_x, max_y;
};

BBox bounding_box(const Polygon& polygon) {
  BBox box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& ring : polygon.rings) {
    for (const auto& p : ring) {
      box.min_x = std::min(box.min_x, p.x);
      box.min_y = std::min(box.min_y, p.y);
      box.max_x = std::max(box.max_x, p.x);
      box.max_y = std::max(box.max_y, p.y);
    }
  }
  return box;
}

// Calls fill(row, col_begin, col_end) for each run of pixel centers inside
// the polygon. Crossings use the half-open rule so that polygons sharing an
// edge never both claim a pixel.
template <typename Fill>
void scan_polygon(const Polygon& polygon, double origin_x, double origin_y, double resolution,
                  std::size_t width, std::size_t height, Fill&& fill) {
  const BBox box = bounding_box(polygon);
  if (!(box.min_x <= box.max_x)) return;

  // Rows whose centers fall inside [min_y, max_y].
  const double row_lo = std::floor((origin_y - box.max_y) / resolution - 0.5);
  const double row_hi = std::ceil((origin_y - box.min_y) / resolution - 0.5);
  const auto first_row = static_cast<long long>(std::max(0.0, row_lo));
  const auto last_row =
      static_cast<long long>(std::min(static_cast<double>(height) - 1.0, row_hi));

  std::vector<double> crossings;
  for (long long row = first_row; row <= last_row; ++row) {
    const double yc = origin_y - (static_cast<double>(row) + 0.5) * resolution;
    crossings.clear();
    for (const auto& ring : polygon.rings) {
      const std::size_t n = ring.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % n];
        if ((a.y > yc) != (b.y > yc)) {
          crossings.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
        }
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      // Columns whose center xc satisfies crossings[k] <= xc < crossings[k+1].
      const double c0 = std::ceil((crossings[k] - origin_x) / resolution - 0.5);
      const double c1 = std::ceil((crossings[k + 1] - origin_x) / resolution - 0.5);
      const double lo = std::max(0.0, c0);
      const double hi = std::min(static_cast<double>(width), c1);
      if (lo < hi) {
        fill(static_cast<std::size_t>(row), static_cast<std::size_t>(lo),
             static_cast<std::size_t>(hi));
      }
    }
  }
}

int bit_length(unsigned __int128 v) {
  int n = 0;
  while (v != 0) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

const std::array<int, 44>& clc_level3_codes() { return kLevel3Codes; }

ClassNomenclature::ClassNomenclature(Mapping mapping, std::array<std::string, kNumClasses> names)
    : mapping_(std::move(mapping)), names_(std::move(names)) {
  const std::set<int> known(kLevel3Codes.begin(), kLevel3Codes.end());
  for (const auto& [code, index] : mapping_) {
    if (!known.contains(code)) {
      throw DataError(fmt::format("nomenclature: {} is not a CORINE level-3 code", code));
    }
    if (index && *index >= kNumClasses) {
      throw DataError(fmt::format("nomenclature: class index {} out of range for code {}",
                                  static_cast<int>(*index), code));
    }
  }
  for (int code : kLevel3Codes) {
    if (!mapping_.contains(code)) {
      throw DataError(fmt::format("nomenclature: level-3 code {} is missing", code));
    }
  }
  std::bitset<kNumClasses> hit;
  for (const auto& [code, index] : mapping_) {
    if (index) hit.set(*index);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (!hit.test(c)) {
      throw DataError(fmt::format("nomenclature: class {} has no level-3 code", c));
    }
  }
}

ClassNomenclature ClassNomenclature::standard19() {
  std::array<std::string, kNumClasses> names = {
      "Urban fabric",
      "Industrial or commercial units",
      "Arable land",
      "Permanent crops",
      "Pastures",
      "Complex cultivation patterns",
      "Land principally occupied by agriculture, with significant areas of natural vegetation",
      "Agro-forestry areas",
      "Broad-leaved forest",
      "Coniferous forest",
      "Mixed forest",
      "Natural grassland and sparsely vegetated areas",
      "Moors, heathland and sclerophyllous vegetation",
      "Transitional woodland, shrub",
      "Beaches, dunes, sands",
      "Inland wetlands",
      "Coastal wetlands",
      "Inland waters",
      "Marine waters",
  };
  const std::array<std::pair<int, int>, 32> mapped = {{
      {111, 0},  {112, 0},  {121, 1},  {211, 2},  {212, 2},  {213, 2},  {221, 3},  {222, 3},
      {223, 3},  {241, 3},  {231, 4},  {242, 5},  {243, 6},  {244, 7},  {311, 8},  {312, 9},
      {313, 10}, {321, 11}, {333, 11}, {322, 12}, {323, 12}, {324, 13}, {331, 14}, {411, 15},
      {412, 15}, {421, 16}, {422, 16}, {511, 17}, {512, 17}, {521, 18}, {522, 18}, {523, 18},
  }};
  Mapping mapping;
  for (int code : kLevel3Codes) mapping[code] = std::nullopt;
  for (const auto& [code, index] : mapped) mapping[code] = static_cast<std::uint8_t>(index);
  return ClassNomenclature(std::move(mapping), std::move(names));
}

ClassNomenclature ClassNomenclature::from_csv(std::istream& in) {
  Mapping mapping;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto comma = stripped.find(',');
    if (comma == std::string::npos) {
      throw DataError(fmt::format("nomenclature line {}: expected two columns", line_no));
    }
    const std::string code_text = trim(std::string_view(stripped).substr(0, comma));
    const std::string index_text = trim(std::string_view(stripped).substr(comma + 1));
    if (index_text.find(',') != std::string::npos) {
      throw DataError(fmt::format("nomenclature line {}: expected two columns", line_no));
    }
    if (line_no == 1 && code_text == "code") continue;

    const int code = parse_int(code_text, "code", line_no);
    if (mapping.contains(code)) {
      throw DataError(fmt::format("nomenclature line {}: duplicate code {}", line_no, code));
    }
    if (index_text == "-") {
      mapping[code] = std::nullopt;
    } else {
      const int index = parse_int(index_text, "class index", line_no);
      if (index < 0 || index >= static_cast<int>(kNumClasses)) {
        throw DataError(
            fmt::format("nomenclature line {}: class index {} out of range", line_no, index));
      }
      mapping[code] = static_cast<std::uint8_t>(index);
    }
  }
  return ClassNomenclature(std::move(mapping), standard19().class_names());
}

ClassNomenclature ClassNomenclature::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open nomenclature file {}", path.string()));
  return from_csv(in);
}

void ClassNomenclature::write_csv(std::ostream& out) const {
  out << "code,class_index\n";
  for (const auto& [code, index] : mapping_) {
    out << code << ',';
    if (index) {
      out << static_cast<int>(*index);
    } else {
      out << '-';
    }
    out << '\n';
  }
}

std::optional<std::uint8_t> ClassNomenclature::class_of(int clc_code) const {
  const auto it = mapping_.find(clc_code);
  if (it == mapping_.end()) return std::nullopt;
  return it->second;
}

std::size_t ClassNomenclature::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw DataError(fmt::format("unknown class name '{}'", name));
}

ReferenceMap::ReferenceMap(std::size_t width, std::size_t height, std::uint16_t fill)
    : width_(width), height_(height), values_(width * height, fill) {}

ReferenceMap::ReferenceMap(std::size_t width, std::size_t height, std::vector<std::uint16_t> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (values_.size() != width_ * height_) {
    throw DataError(fmt::format("reference map holds {} values, expected {}x{}", values_.size(),
                                width_, height_));
  }
  for (auto v : values_) {
    if (v != kUnlabeled && v >= kNumClasses) {
      throw DataError(fmt::format("reference map value {} is not a class index", v));
    }
  }
}

ReferenceMap rasterize_reference_map(const LandCoverPolygonSet& polygons, const PatchExtent& patch,
                                     double resolution_m, const ClassNomenclature& nomenclature,
                                     RasterizeDiagnostics* diagnostics) {
  if (polygons.crs != patch.crs) {
    throw DataError(fmt::format("CRS mismatch: polygons in '{}', patch {} in '{}'", polygons.crs,
                                patch.id(), patch.crs));
  }
  if (!(resolution_m > 0.0)) {
    throw DomainError(fmt::format("resolution must be positive, got {}", resolution_m));
  }
  const double cells = patch.size / resolution_m;
  if (cells != std::round(cells) || cells < 1.0) {
    throw DomainError(fmt::format("resolution {} m does not divide patch size {} m", resolution_m,
                                  patch.size));
  }
  const auto n = static_cast<std::size_t>(cells);
  ReferenceMap map(n, n);
  std::vector<bool> claimed(n * n, false);
  std::size_t overlaps = 0;

  for (const auto& polygon : polygons.polygons) {
    const auto cls = nomenclature.class_of(polygon.clc_code);
    const std::uint16_t value = cls ? *cls : kUnlabeled;
    scan_polygon(polygon.geometry, patch.origin_x, patch.origin_y, resolution_m, n, n,
                 [&](std::size_t row, std::size_t begin, std::size_t end) {
                   for (std::size_t col = begin; col < end; ++col) {
                     const std::size_t idx = row * n + col;
                     if (claimed[idx]) ++overlaps;
                     claimed[idx] = true;
                     map.set(col, row, value);
                   }
                 });
  }
  if (overlaps > 0) {
    spdlog::warn("patch {}: {} pixels covered by overlapping polygons; last polygon wins",
                 patch.id(), overlaps);
  }
  if (diagnostics != nullptr) diagnostics->overlap_pixels = overlaps;
  return map;
}

ClassHistogram class_histogram(const ReferenceMap& map) {
  ClassHistogram hist{};
  for (auto v : map.values()) {
    if (v == kUnlabeled) {
      ++hist[kNumClasses];
    } else {
      ++hist[v];
    }
  }
  return hist;
}

Coverage coverage_fraction(const ReferenceMap& map) {
  const auto hist = class_histogram(map);
  return {map.size() - hist[kNumClasses], map.size()};
}

int compare_ratio(std::uint64_t num, std::uint64_t den, double threshold) {
  if (den == 0) throw DomainError("ratio with zero denominator");
  if (std::isnan(threshold)) throw DomainError("threshold is NaN");
  if (threshold < 0.0) return 1;
  if (threshold == 0.0) return num > 0 ? 1 : 0;
  if (std::isinf(threshold)) return -1;

  // threshold = mantissa * 2^exponent with an integral 53-bit mantissa.
  int exp = 0;
  const double frac = std::frexp(threshold, &exp);
  const auto mantissa = static_cast<std::uint64_t>(std::ldexp(frac, 53));
  const int exponent = exp - 53;

  using u128 = unsigned __int128;
  u128 lhs = num;
  u128 rhs = static_cast<u128>(mantissa) * den;  // < 2^117
  if (exponent <= 0) {
    const int shift = -exponent;
    if (num != 0 && bit_length(lhs) + shift > 120) return 1;
    lhs <<= shift;
  } else {
    if (bit_length(rhs) + exponent > 120) return -1;
    rhs <<= exponent;
  }
  return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
}

std::vector<std::string> MultiLabelSet::names(const ClassNomenclature& nomenclature) const {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (bits.test(c)) out.push_back(nomenclature.class_name(c));
  }
  return out;
}

MultiLabelSet MultiLabelSet::from_names(const std::vector<std::string>& names,
                                        const ClassNomenclature& nomenclature) {
  MultiLabelSet set;
  for (const auto& name : names) set.bits.set(nomenclature.class_index(name));
  return set;
}

MultiLabelSet extract_multilabels(const ReferenceMap& map, double min_fraction) {
  if (!(min_fraction >= 0.0 && min_fraction < 1.0)) {
    throw DomainError(fmt::format("min_fraction must lie in [0, 1), got {}", min_fraction));
  }
  const auto hist = class_histogram(map);
  const std::uint64_t labeled = map.size() - hist[kNumClasses];
  if (labeled == 0) throw DataError("multi-labels are undefined for a map without labeled pixels");
  MultiLabelSet set;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (compare_ratio(hist[c], labeled, min_fraction) > 0) set.bits.set(c);
  }
  return set;
}

std::string_view to_string(RetentionReason reason) {
  switch (reason) {
    case RetentionReason::Kept:
      return "kept";
    case RetentionReason::NoLabels:
      return "no_labels";
    case RetentionReason::LowCoverage:
      return "low_coverage";
  }
  return "unknown";
}

RetentionReason parse_retention_reason(std::string_view text) {
  if (text == "kept") return RetentionReason::Kept;
  if (text == "no_labels") return RetentionReason::NoLabels;
  if (text == "low_coverage") return RetentionReason::LowCoverage;
  throw DataError(fmt::format("unknown retention reason '{}'", text));
}

RetentionDecision retention_decision(const ReferenceMap& map, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw DomainError(fmt::format("coverage threshold must lie in (0, 1], got {}", threshold));
  }
  RetentionDecision decision;
  decision.coverage = coverage_fraction(map);
  if (decision.coverage.labeled == 0) {
    decision.reason = RetentionReason::NoLabels;
  } else if (compare_ratio(decision.coverage.labeled, decision.coverage.total, threshold) < 0) {
    decision.reason = RetentionReason::LowCoverage;
  } else {
    decision.reason = RetentionReason::Kept;
    decision.keep = true;
  }
  return decision;
}

}  // namespace geopatch
