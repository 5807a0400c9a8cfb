#include "geopatch/split_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geopatch/error.hpp"

namespace geopatch {

namespace {

std::size_t index_of(SplitTag tag) { return static_cast<std::size_t>(tag); }

double center_distance(const PatchExtent& a, const PatchExtent& b) {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

}  // namespace

std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train:
      return "train";
    case SplitTag::Validation:
      return "validation";
    case SplitTag::Test:
      return "test";
  }
  return "unknown";
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "train") return SplitTag::Train;
  if (text == "validation" || text == "val") return SplitTag::Validation;
  if (text == "test") return SplitTag::Test;
  throw DataError(fmt::format("unknown split tag '{}'", text));
}

FrameWidths frame_widths(double side, double inner_fraction, double frame_fraction) {
  if (!(side > 0.0) || !std::isfinite(side)) {
    throw DomainError(fmt::format("tile side must be positive, got {}", side));
  }
  if (!(inner_fraction >= 0.0) || !(frame_fraction >= 0.0) ||
      !(inner_fraction + frame_fraction <= 1.0)) {
    throw DomainError(fmt::format("split fractions need p >= 0, q >= 0, p + q <= 1 (p={}, q={})",
                                  inner_fraction, frame_fraction));
  }
  const double root_pq = std::sqrt(inner_fraction + frame_fraction);
  const double root_p = std::sqrt(inner_fraction);
  return {(1.0 - root_pq) / 2.0 * side, (root_pq - root_p) / 2.0 * side};
}

SplitGeometry::SplitGeometry(double side, double inner_fraction, double frame_fraction)
    : side_(side),
      p_(inner_fraction),
      q_(frame_fraction),
      widths_(frame_widths(side, inner_fraction, frame_fraction)) {}

RegionAreas SplitGeometry::region_areas() const {
  const double total = side_ * side_;
  const double middle = side_ - 2.0 * widths_.outer;
  const double inner = middle - 2.0 * widths_.inner;
  const double middle_area = middle * middle;
  const double inner_area = inner * inner;
  return {total - middle_area, middle_area - inner_area, inner_area};
}

SplitTag SplitGeometry::classify_offset(double dx, double dy) const {
  // Chebyshev distance: the regions are concentric axis-aligned squares.
  const double d = std::max(std::abs(dx), std::abs(dy));
  if (d >= middle_half_side()) return SplitTag::Train;
  if (d >= inner_half_side()) return SplitTag::Validation;
  return SplitTag::Test;
}

SplitTag assign_split(const PatchExtent& patch, const SquareExtent& tile,
                      const SplitGeometry& geometry) {
  if (tile.side != geometry.side()) {
    throw DomainError(fmt::format("tile side {} does not match split geometry side {}", tile.side,
                                  geometry.side()));
  }
  if (!contains(tile, patch.extent())) {
    throw DomainError(fmt::format("patch {} exceeds its tile extent", patch.id()));
  }
  return geometry.classify_offset(patch.center_x() - tile.center_x(),
                                  patch.center_y() - tile.center_y());
}

SplitTag grid_baseline_cell_tag(long long cell_x, long long cell_y) {
  const auto mod4 = [](long long v) { return ((v % 4) + 4) % 4; };
  const long long i = mod4(cell_x);
  const long long j = mod4(cell_y);
  // Checkerboard of train cells; the odd cells alternate validation/test by row.
  if ((i + j) % 2 == 0) return SplitTag::Train;
  return j % 2 == 0 ? SplitTag::Validation : SplitTag::Test;
}

SplitTag assign_split_grid_baseline(const PatchExtent& patch, double cell_size) {
  if (!(cell_size > 0.0)) {
    throw DomainError(fmt::format("cell size must be positive, got {}", cell_size));
  }
  const auto cell_x = static_cast<long long>(std::floor(patch.center_x() / cell_size));
  const auto cell_y = static_cast<long long>(std::floor(patch.center_y() / cell_size));
  return grid_baseline_cell_tag(cell_x, cell_y);
}

const PairSeparation& SeparationReport::between(SplitTag from, SplitTag to) const {
  for (const auto& pair : pairs) {
    if (pair.from == from && pair.to == to) return pair;
  }
  throw DataError(
      fmt::format("no separation entry for ({}, {})", to_string(from), to_string(to)));
}

void to_json(nlohmann::json& j, const SeparationReport& report) {
  auto pairs = nlohmann::json::array();
  for (const auto& pair : report.pairs) {
    pairs.push_back({{"from", to_string(pair.from)},
                     {"to", to_string(pair.to)},
                     {"min_m", pair.min_m},
                     {"mean_m", pair.mean_m}});
  }
  j = nlohmann::json{{"pairs", std::move(pairs)}};
}

void from_json(const nlohmann::json& j, SeparationReport& report) {
  report.pairs.clear();
  for (const auto& entry : j.at("pairs")) {
    report.pairs.push_back({parse_split_tag(entry.at("from").get<std::string>()),
                            parse_split_tag(entry.at("to").get<std::string>()),
                            entry.at("min_m").get<double>(), entry.at("mean_m").get<double>()});
  }
}

void SeparationAccumulator::add_group(std::span<const TaggedPatch> group) {
  std::array<std::vector<const PatchExtent*>, 3> by_tag;
  for (const auto& [patch, tag] : group) by_tag[index_of(tag)].push_back(&patch);
  for (std::size_t t = 0; t < 3; ++t) tag_counts_[t] += by_tag[t].size();

  // Distances are symmetric, so only the upper triangle is computed.
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      auto& cell = cells_[a][b];
      for (const auto* pa : by_tag[a]) {
        for (const auto* pb : by_tag[b]) {
          const double d = center_distance(*pa, *pb);
          cell.min = cell.count == 0 ? d : std::min(cell.min, d);
          cell.sum += d;
          ++cell.count;
        }
      }
    }
  }
}

SeparationReport SeparationAccumulator::report() const {
  for (auto tag : kAllSplitTags) {
    if (tag_counts_[index_of(tag)] == 0) {
      throw DataError(fmt::format("no patches tagged '{}'", to_string(tag)));
    }
  }
  SeparationReport report;
  for (auto from : kAllSplitTags) {
    for (auto to : kAllSplitTags) {
      if (from == to) continue;
      const auto a = std::min(index_of(from), index_of(to));
      const auto b = std::max(index_of(from), index_of(to));
      const auto& cell = cells_[a][b];
      // Tags may be present overall yet never share a group.
      const double nan = std::numeric_limits<double>::quiet_NaN();
      report.pairs.push_back({from, to, cell.count ? cell.min : nan,
                              cell.count ? cell.sum / static_cast<double>(cell.count) : nan});
    }
  }
  return report;
}

SeparationReport separation_stats(std::span<const TaggedPatch> assignments) {
  SeparationAccumulator acc;
  acc.add_group(assignments);
  return acc.report();
}

}  // namespace geopatch
