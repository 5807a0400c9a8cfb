#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geopatch/error.hpp"
#include "geopatch/geojson.hpp"
#include "geopatch/labeling.hpp"
#include "test_support.hpp"

namespace geopatch {
namespace {

using testing::rectangle;

const std::string kCrs = "EPSG:32633";

PatchExtent patch_1200() { return PatchExtent{"T", 0, 0, 400000.0, 5000000.0, 1200.0, kCrs}; }

LandCoverPolygonSet one_polygon(const Polygon& poly, int code) {
  return LandCoverPolygonSet{kCrs, {LandCoverPolygon{poly, code}}};
}

std::size_t index_of(const ClassNomenclature& nom, std::string_view name) {
  return nom.class_index(name);
}

// ---------------------------------------------------------------------------
// Nomenclature

TEST(Nomenclature, StandardTableIsTotalAndSurjective) {
  const auto nom = ClassNomenclature::standard19();
  EXPECT_EQ(nom.mapping().size(), 44u);
  std::array<int, kNumClasses> hits{};
  for (const auto& [code, cls] : nom.mapping()) {
    if (cls) ++hits.at(*cls);
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) EXPECT_GT(hits[c], 0) << c;
  EXPECT_EQ(nom.class_name(*nom.class_of(231)), "Pastures");
  EXPECT_EQ(nom.class_name(*nom.class_of(112)), "Urban fabric");
  EXPECT_EQ(nom.class_name(*nom.class_of(244)), "Agro-forestry areas");
  EXPECT_FALSE(nom.class_of(131).has_value());  // mineral extraction sites
  EXPECT_FALSE(nom.class_of(999).has_value());
}

TEST(Nomenclature, ShippedFileMatchesBuiltInTable) {
  const auto file = ClassNomenclature::load(GEOPATCH_SOURCE_DIR "/data/nomenclature_19.csv");
  EXPECT_EQ(file.mapping(), ClassNomenclature::standard19().mapping());
}

TEST(Nomenclature, CsvRoundTrip) {
  const auto nom = ClassNomenclature::standard19();
  std::stringstream ss;
  nom.write_csv(ss);
  const auto back = ClassNomenclature::from_csv(ss);
  EXPECT_EQ(back.mapping(), nom.mapping());
}

TEST(Nomenclature, RejectsIncompleteOrUnknownCodes) {
  auto mapping = ClassNomenclature::standard19().mapping();
  const auto names = ClassNomenclature::standard19().class_names();
  auto missing = mapping;
  missing.erase(111);
  EXPECT_THROW(ClassNomenclature(missing, names), DataError);
  auto extra = mapping;
  extra[999] = std::uint8_t{3};
  EXPECT_THROW(ClassNomenclature(extra, names), DataError);
  auto unused = mapping;
  unused[244] = std::nullopt;  // only code of agro-forestry
  EXPECT_THROW(ClassNomenclature(unused, names), DataError);
}

// ---------------------------------------------------------------------------
// Rasterization

TEST(Rasterize, FullCoverGivesOneClass) {
  const auto nom = ClassNomenclature::standard19();
  const auto patch = patch_1200();
  const auto polys =
      one_polygon(rectangle(patch.origin_x - 5, patch.origin_y - 1300, patch.origin_x + 1300,
                            patch.origin_y + 5),
                  231);
  const auto map = rasterize_reference_map(polys, patch, 10.0, nom);
  ASSERT_EQ(map.width(), 120u);
  ASSERT_EQ(map.height(), 120u);
  const auto pastures = static_cast<std::uint16_t>(index_of(nom, "Pastures"));
  for (auto v : map.values()) ASSERT_EQ(v, pastures);
  const auto cov = coverage_fraction(map);
  EXPECT_EQ(cov.labeled, cov.total);
  EXPECT_EQ(cov.fraction(), 1.0);
}

TEST(Rasterize, NoPolygonsIsUnlabeled) {
  const auto map = rasterize_reference_map(LandCoverPolygonSet{kCrs, {}}, patch_1200(), 10.0,
                                           ClassNomenclature::standard19());
  for (auto v : map.values()) ASSERT_EQ(v, kUnlabeled);
  EXPECT_EQ(coverage_fraction(map).fraction(), 0.0);
}

TEST(Rasterize, TwoHalvesGiveTwoLabels) {
  const auto nom = ClassNomenclature::standard19();
  const auto p = patch_1200();
  LandCoverPolygonSet polys{kCrs, {}};
  polys.polygons.push_back(
      {rectangle(p.origin_x, p.origin_y - 1200, p.origin_x + 600, p.origin_y), 231});
  polys.polygons.push_back(
      {rectangle(p.origin_x + 600, p.origin_y - 1200, p.origin_x + 1200, p.origin_y), 111});
  RasterizeDiagnostics diag;
  const auto map = rasterize_reference_map(polys, p, 10.0, nom, &diag);
  EXPECT_EQ(diag.overlap_pixels, 0u);
  const auto pastures = index_of(nom, "Pastures");
  const auto urban = index_of(nom, "Urban fabric");
  for (std::size_t r = 0; r < 120; ++r) {
    for (std::size_t c = 0; c < 120; ++c) {
      ASSERT_EQ(map.at(c, r), c < 60 ? pastures : urban) << c << "," << r;
    }
  }
  const auto labels = extract_multilabels(map);
  EXPECT_EQ(labels.count(), 2u);
  EXPECT_TRUE(labels.test(pastures));
  EXPECT_TRUE(labels.test(urban));
  const auto names = labels.names(nom);
  EXPECT_EQ(names, (std::vector<std::string>{"Urban fabric", "Pastures"}));
  EXPECT_EQ(MultiLabelSet::from_names(names, nom), labels);
}

TEST(Rasterize, UnmappedCodeStaysUnlabeled) {
  const auto p = patch_1200();
  const auto polys = one_polygon(
      rectangle(p.origin_x, p.origin_y - 1200, p.origin_x + 1200, p.origin_y), 131);
  const auto map = rasterize_reference_map(polys, p, 10.0, ClassNomenclature::standard19());
  for (auto v : map.values()) ASSERT_EQ(v, kUnlabeled);
}

TEST(Rasterize, HolesAreExcluded) {
  const auto nom = ClassNomenclature::standard19();
  const auto p = patch_1200();
  Polygon poly = rectangle(p.origin_x, p.origin_y - 1200, p.origin_x + 1200, p.origin_y);
  poly.rings.push_back(
      rectangle(p.origin_x + 300, p.origin_y - 900, p.origin_x + 900, p.origin_y - 300).rings[0]);
  const auto map = rasterize_reference_map(one_polygon(poly, 311), p, 10.0, nom);
  const auto cov = coverage_fraction(map);
  EXPECT_EQ(cov.total - cov.labeled, 60u * 60u);
  EXPECT_EQ(map.at(60, 60), kUnlabeled);
  EXPECT_EQ(map.at(0, 0), index_of(nom, "Broad-leaved forest"));
}

TEST(Rasterize, LastPolygonWinsAndOverlapIsReported) {
  const auto nom = ClassNomenclature::standard19();
  const auto p = patch_1200();
  LandCoverPolygonSet polys{kCrs, {}};
  polys.polygons.push_back(
      {rectangle(p.origin_x, p.origin_y - 1200, p.origin_x + 1200, p.origin_y), 231});
  polys.polygons.push_back(
      {rectangle(p.origin_x, p.origin_y - 100, p.origin_x + 100, p.origin_y), 512});
  RasterizeDiagnostics diag;
  const auto map = rasterize_reference_map(polys, p, 10.0, nom, &diag);
  EXPECT_EQ(diag.overlap_pixels, 100u);
  EXPECT_EQ(map.at(0, 0), index_of(nom, "Inland waters"));
  EXPECT_EQ(map.at(10, 10), index_of(nom, "Pastures"));
}

TEST(Rasterize, Errors) {
  const auto nom = ClassNomenclature::standard19();
  EXPECT_THROW((void)rasterize_reference_map(LandCoverPolygonSet{"EPSG:4326", {}}, patch_1200(),
                                             10.0, nom),
               DataError);
  EXPECT_THROW((void)rasterize_reference_map(LandCoverPolygonSet{kCrs, {}}, patch_1200(), 7.0, nom),
               DomainError);
}

TEST(Rasterize, CoarseGridAgreesWithUniformFineBlocks) {
  const auto nom = ClassNomenclature::standard19();
  const auto p = patch_1200();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(-200.0, 1200.0);
  std::uniform_real_distribution<double> extent(100.0, 700.0);
  const auto& codes = clc_level3_codes();
  std::uniform_int_distribution<std::size_t> pick(0, codes.size() - 1);
  for (int trial = 0; trial < 30; ++trial) {
    LandCoverPolygonSet polys{kCrs, {}};
    for (int k = 0; k < 8; ++k) {
      const double x = pos(rng), y = pos(rng);
      polys.polygons.push_back({rectangle(p.origin_x + x, p.origin_y - y - extent(rng),
                                          p.origin_x + x + extent(rng), p.origin_y - y),
                                codes[pick(rng)]});
    }
    const auto fine = rasterize_reference_map(polys, p, 10.0, nom);
    const auto coarse = rasterize_reference_map(polys, p, 20.0, nom);
    std::size_t compared = 0;
    for (std::size_t r = 0; r < 60; ++r) {
      for (std::size_t c = 0; c < 60; ++c) {
        const auto v = fine.at(2 * c, 2 * r);
        if (fine.at(2 * c + 1, 2 * r) != v || fine.at(2 * c, 2 * r + 1) != v ||
            fine.at(2 * c + 1, 2 * r + 1) != v) {
          continue;
        }
        ++compared;
        ASSERT_EQ(coarse.at(c, r), v) << "trial " << trial << " at " << c << "," << r;
      }
    }
    EXPECT_GT(compared, 0u);
  }
}

TEST(Rasterize, ArbitraryCodesStayInRange) {
  const auto nom = ClassNomenclature::standard19();
  const auto p = patch_1200();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> code(100, 999);
  std::uniform_real_distribution<double> u(-100.0, 1300.0);
  LandCoverPolygonSet polys{kCrs, {}};
  for (int k = 0; k < 40; ++k) {
    const double x = u(rng), y = u(rng);
    polys.polygons.push_back({rectangle(p.origin_x + x, p.origin_y - y - 300, p.origin_x + x + 300,
                                        p.origin_y - y),
                              code(rng)});
  }
  const auto map = rasterize_reference_map(polys, p, 10.0, nom);
  for (auto v : map.values()) ASSERT_TRUE(v < kNumClasses || v == kUnlabeled);
}

// ---------------------------------------------------------------------------
// Coverage, labels, retention

ReferenceMap map_with_labeled(std::size_t labeled, std::uint16_t cls = 4) {
  std::vector<std::uint16_t> values(14400, kUnlabeled);
  std::fill_n(values.begin(), labeled, cls);
  return ReferenceMap(120, 120, std::move(values));
}

TEST(Coverage, ExactThreeQuarters) {
  const auto cov = coverage_fraction(map_with_labeled(10800));
  EXPECT_EQ(cov.labeled, 10800u);
  EXPECT_EQ(cov.total, 14400u);
  EXPECT_EQ(cov.fraction(), 0.75);
  EXPECT_EQ(compare_ratio(10800, 14400, 0.75), 0);
  EXPECT_LT(compare_ratio(10799, 14400, 0.75), 0);
  EXPECT_GT(compare_ratio(10801, 14400, 0.75), 0);
}

TEST(Coverage, CompareRatioIsExact) {
  // 0.1 is slightly above 1/10 in binary.
  EXPECT_LT(compare_ratio(1, 10, 0.1), 0);
  EXPECT_GT(compare_ratio(1, 3, 1.0 / 3.0), 0);
  EXPECT_EQ(compare_ratio(0, 5, 0.0), 0);
  EXPECT_EQ(compare_ratio(7, 7, 1.0), 0);
}

TEST(MultiLabels, MinimumFraction) {
  std::vector<std::uint16_t> values(14400, 2);
  values[0] = 9;
  const ReferenceMap map(120, 120, values);
  const auto any = extract_multilabels(map, 0.0);
  EXPECT_EQ(any.count(), 2u);
  EXPECT_TRUE(any.test(2));
  EXPECT_TRUE(any.test(9));
  const auto strict = extract_multilabels(map, 0.001);
  EXPECT_EQ(strict.count(), 1u);
  EXPECT_TRUE(strict.test(2));
}

TEST(MultiLabels, Errors) {
  EXPECT_THROW((void)extract_multilabels(map_with_labeled(0)), DataError);
  EXPECT_THROW((void)extract_multilabels(map_with_labeled(5), 1.0), DomainError);
  EXPECT_THROW((void)extract_multilabels(map_with_labeled(5), -0.1), DomainError);
}

TEST(MultiLabels, RandomMapsMatchPixelScan) {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t w = 1 + rng() % 64, h = 1 + rng() % 64;
    const int active = 1 + static_cast<int>(rng() % 6);
    std::vector<std::uint16_t> values(w * h);
    const double unlabeled_share = unit(rng) * 0.5;
    for (auto& v : values) {
      v = unit(rng) < unlabeled_share ? kUnlabeled
                                      : static_cast<std::uint16_t>((rng() % active) * 3 % 19);
    }
    if (std::all_of(values.begin(), values.end(), [](auto v) { return v == kUnlabeled; })) {
      values[0] = 0;
    }
    const ReferenceMap map(w, h, values);
    const double min_fraction = trial % 3 == 0 ? 0.0 : unit(rng) * 0.5;
    const auto labels = extract_multilabels(map, min_fraction);
    const auto oracle = testing::label_scan_oracle(values, min_fraction);
    const auto hist = class_histogram(map);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      ASSERT_EQ(labels.test(c), oracle[c]) << "trial " << trial << " class " << c;
      if (min_fraction == 0.0) {
        ASSERT_EQ(labels.test(c), hist[c] >= 1);
      }
    }
    std::uint64_t sum = 0;
    for (auto n : hist) sum += n;
    ASSERT_EQ(sum, w * h);
  }
}

TEST(Retention, CoverageBoundary) {
  const auto at = retention_decision(map_with_labeled(10800), 0.75);
  EXPECT_TRUE(at.keep);
  EXPECT_EQ(at.reason, RetentionReason::Kept);

  const auto below = retention_decision(map_with_labeled(10799), 0.75);
  EXPECT_FALSE(below.keep);
  EXPECT_EQ(below.reason, RetentionReason::LowCoverage);
  EXPECT_EQ(below.coverage.labeled, 10799u);

  const auto none = retention_decision(map_with_labeled(0), 0.75);
  EXPECT_FALSE(none.keep);
  EXPECT_EQ(none.reason, RetentionReason::NoLabels);
}

TEST(Retention, NoLabelsTakesPrecedence) {
  const auto none = retention_decision(map_with_labeled(0), 1.0);
  EXPECT_EQ(none.reason, RetentionReason::NoLabels);
}

TEST(Retention, ThresholdMonotonicity) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto map = map_with_labeled(rng() % 14401);
    const double t = std::max(unit(rng), 1e-9);
    if (!retention_decision(map, t).keep) continue;
    for (int k = 0; k < 10; ++k) {
      const double lower = std::max(t * unit(rng), 1e-12);
      ASSERT_TRUE(retention_decision(map, lower).keep);
    }
  }
}

TEST(Retention, RejectsBadThreshold) {
  EXPECT_THROW((void)retention_decision(map_with_labeled(1), 0.0), DomainError);
  EXPECT_THROW((void)retention_decision(map_with_labeled(1), 1.5), DomainError);
}

TEST(ReferenceMap, RejectsInvalidValues) {
  EXPECT_THROW(ReferenceMap(2, 2, std::vector<std::uint16_t>{0, 1, 19, 2}), DataError);
  EXPECT_THROW(ReferenceMap(2, 2, std::vector<std::uint16_t>{0, 1, 2}), DataError);
  EXPECT_NO_THROW(ReferenceMap(2, 2, std::vector<std::uint16_t>{0, 18, kUnlabeled, 2}));
}

// ---------------------------------------------------------------------------
// GeoJSON input

TEST(GeoJson, ParsesPolygonsAndMultiPolygons) {
  const auto doc = nlohmann::json::parse(R"({
    "type": "FeatureCollection",
    "crs": {"type": "name", "properties": {"name": "EPSG:32633"}},
    "features": [
      {"type": "Feature", "properties": {"CODE_18": "231"},
       "geometry": {"type": "Polygon", "coordinates": [[[0,0],[10,0],[10,10],[0,10]]]}},
      {"type": "Feature", "properties": {"CODE_18": 112},
       "geometry": {"type": "MultiPolygon", "coordinates": [
         [[[20,0],[30,0],[30,10],[20,0]]],
         [[[40,0],[50,0],[50,10],[40,10],[40,0]], [[42,2],[44,2],[44,4],[42,2]]]
       ]}}
    ]})");
  const auto set = parse_land_cover_geojson(doc);
  EXPECT_EQ(set.crs, "EPSG:32633");
  ASSERT_EQ(set.polygons.size(), 3u);
  EXPECT_EQ(set.polygons[0].clc_code, 231);
  EXPECT_EQ(set.polygons[0].geometry.rings[0].size(), 4u);  // closing vertex not repeated
  EXPECT_EQ(set.polygons[2].clc_code, 112);
  EXPECT_EQ(set.polygons[2].geometry.rings.size(), 2u);

  const auto again = parse_land_cover_geojson(to_geojson(set));
  ASSERT_EQ(again.polygons.size(), set.polygons.size());
  EXPECT_EQ(again.polygons[1].geometry.rings[0].size(),
            set.polygons[1].geometry.rings[0].size());
}

TEST(GeoJson, RejectsMissingCrsOrCode) {
  auto doc = nlohmann::json::parse(R"({"type": "FeatureCollection", "features": []})");
  EXPECT_THROW((void)parse_land_cover_geojson(doc), DataError);
  doc = nlohmann::json::parse(R"({
    "type": "FeatureCollection",
    "crs": {"type": "name", "properties": {"name": "EPSG:32633"}},
    "features": [{"type": "Feature", "properties": {},
      "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1]]]}}]})");
  EXPECT_THROW((void)parse_land_cover_geojson(doc), DataError);
}

TEST(GeoJson, DirectoryWithMixedCrsIsRejected) {
  testing::TempDir dir;
  auto a = to_geojson(one_polygon(rectangle(0, 0, 1, 1), 231));
  auto b = to_geojson(LandCoverPolygonSet{"EPSG:4326", {LandCoverPolygon{rectangle(0, 0, 1, 1), 231}}});
  testing::write_text(dir / "a.geojson", a.dump());
  testing::write_text(dir / "b.geojson", b.dump());
  EXPECT_THROW((void)load_land_cover(dir.path()), DataError);
  std::filesystem::remove(dir / "b.geojson");
  testing::write_text(dir / "c.geojson", a.dump());
  EXPECT_EQ(load_land_cover(dir.path()).polygons.size(), 2u);
}

}  // namespace
}  // namespace geopatch
