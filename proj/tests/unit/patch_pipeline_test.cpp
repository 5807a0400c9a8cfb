#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geopatch/error.hpp"
#include "geopatch/patch_pipeline.hpp"
#include "geopatch/raster_io.hpp"
#include "test_support.hpp"

namespace geopatch {
namespace {

// ---------------------------------------------------------------------------
// Quality gate

TEST(QualityGate, MandatoryIndicators) {
  TileQualityReport r{"T1", true, true, {{"cloud_cover_ok", false}}};
  EXPECT_TRUE(check_quality(r));
  r.radiometric_ok = false;
  EXPECT_FALSE(check_quality(r));
  r.radiometric_ok = true;
  r.geometric_ok = false;
  EXPECT_FALSE(check_quality(r));
  r.geometric_ok.reset();
  EXPECT_THROW((void)check_quality(r), DataError);
}

TEST(QualityGate, HundredTwentyFiveReportsSixFailing) {
  std::vector<TileQualityReport> reports;
  for (int i = 0; i < 125; ++i) {
    TileQualityReport r{fmt::format("T{:03d}", i), true, true, {}};
    if (i % 21 == 4) r.radiometric_ok = false;
    if (i % 42 == 4) r.geometric_ok = false;
    reports.push_back(r);
  }
  EXPECT_EQ(passing_tiles(reports).size(), 119u);
}

TEST(QualityGate, JsonRoundTrip) {
  const auto j = nlohmann::json::parse(
      R"({"tile_id": "T32TQM", "radiometric_ok": true, "geometric_ok": false, "format_ok": true})");
  const auto r = j.get<TileQualityReport>();
  EXPECT_EQ(r.tile_id, "T32TQM");
  EXPECT_FALSE(check_quality(r));
  EXPECT_EQ(r.other_flags.at("format_ok"), true);
  EXPECT_EQ(nlohmann::json(r), j);
  EXPECT_THROW((void)nlohmann::json::parse(R"({"tile_id": "X", "radiometric_ok": 1})")
                   .get<TileQualityReport>(),
               DataError);
}

// ---------------------------------------------------------------------------
// Tiling

TEST(Tiling, ExactDivision) {
  const SquareExtent tile{300000.0, 5000040.0, 6000.0, "EPSG:32632"};
  const auto patches = tile_to_patches(tile, "T", 1200.0);
  ASSERT_EQ(patches.size(), 25u);
  EXPECT_EQ(patches.front().col, 0);
  EXPECT_EQ(patches.back().col, 4);
  EXPECT_EQ(patches.back().row, 4);
  EXPECT_EQ(patches[7].id(), "T_02_01");
}

TEST(Tiling, MarginStaysUnpatched) {
  const SquareExtent tile{300000.0, 5000040.0, 6100.0, "EPSG:32632"};
  const auto patches = tile_to_patches(tile, "T", 1200.0);
  ASSERT_EQ(patches.size(), 25u);
  for (const auto& p : patches) EXPECT_TRUE(contains(tile, p.extent()));
  EXPECT_DOUBLE_EQ(tile.max_x() - patches.back().extent().max_x(), 100.0);
}

TEST(Tiling, SmallTileHasNoPatches) {
  EXPECT_TRUE(tile_to_patches(SquareExtent{0, 0, 1000.0, "X"}, "T", 1200.0).empty());
  EXPECT_THROW((void)tile_to_patches(SquareExtent{0, 0, 1000.0, "X"}, "T", 0.0), DomainError);
}

TEST(Tiling, PartitionAndGeometricIdentity) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double patch = 10.0 * (1 + rng() % 200);
    const SquareExtent tile{std::round(u(rng) * 8e5), std::round(4e6 + u(rng) * 4e6),
                            patch * (1 + rng() % 40) + std::round(u(rng) * patch), "X"};
    const auto patches = tile_to_patches(tile, "T", patch);
    const auto n = static_cast<std::size_t>(std::floor(tile.side / patch));
    ASSERT_EQ(patches.size(), n * n);
    std::set<std::pair<int, int>> cells;
    for (const auto& p : patches) {
      ASSERT_TRUE(contains(tile, p.extent()));
      cells.insert({p.col, p.row});
      const Point o = patch_origin(tile, p.col, p.row, patch);
      ASSERT_EQ(o.x, p.origin_x);  // bit-exact
      ASSERT_EQ(o.y, p.origin_y);
    }
    ASSERT_EQ(cells.size(), patches.size());
  }
}

// ---------------------------------------------------------------------------
// Screening

TEST(Screening, TruthTable) {
  for (int bits = 0; bits < 8; ++bits) {
    const PatchFlags f{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0};
    const Disposition expected = f.has_invalid                  ? Disposition::Dropped
                                 : (f.snow || f.cloud_or_shadow) ? Disposition::AuxiliaryList
                                                                 : Disposition::Main;
    EXPECT_EQ(disposition_of(f), expected) << bits;
    EXPECT_EQ(screen_patch(PatchPixels{}, f), expected) << bits;
  }
  EXPECT_EQ(disposition_of({true, false, true}), Disposition::Dropped);
  EXPECT_EQ(disposition_of({false, true, false}), Disposition::AuxiliaryList);
}

Band constant_band(const std::string& name, double res, std::size_t n, std::uint16_t value) {
  return Band{name, res, n, n, std::vector<std::uint16_t>(n * n, value), std::nullopt};
}

TEST(Screening, NodataMaskDropsPatch) {
  PatchPixels px;
  px.bands.push_back(constant_band("B02", 10.0, 120, 500));
  px.bands.push_back(constant_band("B05", 20.0, 60, 700));
  EXPECT_EQ(screen_patch(px, {}), Disposition::Main);
  px.bands[1].nodata = 0.0;
  std::get<std::vector<std::uint16_t>>(px.bands[1].values)[17] = 0;
  EXPECT_EQ(px.bands[1].invalid_count(), 1u);
  EXPECT_EQ(screen_patch(px, {true, false, false}), Disposition::Dropped);

  Band vv{"VV", 10.0, 2, 2, std::vector<float>{1.0f, NAN, 2.0f, 3.0f}, std::nullopt};
  EXPECT_EQ(vv.invalid_count(), 1u);
}

TEST(Screening, PartitionCountsMatchGrid) {
  std::mt19937_64 rng(4);
  std::map<Disposition, int> counts;
  const int n = 400;
  for (int i = 0; i < n; ++i) {
    ++counts[disposition_of({rng() % 5 == 0, rng() % 7 == 0, rng() % 11 == 0})];
  }
  EXPECT_EQ(counts[Disposition::Main] + counts[Disposition::AuxiliaryList] +
                counts[Disposition::Dropped],
            n);
}

TEST(CutBand, WindowAndAlignment) {
  const auto raster = testing::make_raster<std::uint16_t>(
      48, 20.0, 1000.0, 2000.0, "X", [](std::size_t c, std::size_t r) {
        return static_cast<std::uint16_t>(r * 100 + c);
      });
  const PatchExtent patch{"T", 1, 1, 1240.0, 1760.0, 240.0, "X"};
  const auto band = cut_band(raster, "B05", patch);
  EXPECT_EQ(band.width, 12u);
  EXPECT_EQ(band.resolution_m, 20.0);
  const auto& v = std::get<std::vector<std::uint16_t>>(band.values);
  EXPECT_EQ(v[0], 12 * 100 + 12);
  EXPECT_EQ(v[13], 13 * 100 + 13);

  PatchExtent misaligned = patch;
  misaligned.origin_x += 10.0;
  EXPECT_THROW((void)cut_band(raster, "B05", misaligned), DataError);
  PatchExtent outside = patch;
  outside.origin_x = 1000.0 + 40 * 20.0;
  EXPECT_THROW((void)cut_band(raster, "B05", outside), DataError);
}

// ---------------------------------------------------------------------------
// Model input

PatchPixels full_patch() {
  PatchPixels px;
  std::uint16_t v = 1;
  for (auto name : kS2AllBands) {
    const bool is60 = name == "B01" || name == "B09";
    const bool is20 = name == "B05" || name == "B06" || name == "B07" || name == "B8A" ||
                      name == "B11" || name == "B12";
    const double res = is60 ? 60.0 : is20 ? 20.0 : 10.0;
    const auto n = static_cast<std::size_t>(1200.0 / res);
    Band b{std::string(name), res, n, n, std::vector<std::uint16_t>(n * n), std::nullopt};
    auto& values = std::get<std::vector<std::uint16_t>>(b.values);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<std::uint16_t>(v * 1000 + i % 997);
    ++v;
    px.bands.push_back(std::move(b));
  }
  for (auto name : kS1Channels) {
    Band b{std::string(name), 10.0, 120, 120, std::vector<float>(14400, name == "VV" ? -12.5f : -19.0f),
           std::nullopt};
    px.bands.push_back(std::move(b));
  }
  return px;
}

TEST(ModelInput, StackedShapesPerModality) {
  const auto px = full_patch();
  px.validate();
  const auto both = prepare_model_input(px, Modality::S1S2);
  EXPECT_EQ(both.channels.size(), 12u);
  EXPECT_EQ(both.height, 120u);
  EXPECT_EQ(both.width, 120u);
  EXPECT_EQ(both.data.size(), 12u * 120u * 120u);
  EXPECT_EQ(prepare_model_input(px, Modality::S2).channels.size(), 10u);
  EXPECT_EQ(prepare_model_input(px, Modality::S1).channels,
            (std::vector<std::string>{"VV", "VH"}));
  EXPECT_EQ(both.channels,
            (std::vector<std::string>{"B02", "B03", "B04", "B05", "B06", "B07", "B08", "B8A",
                                      "B11", "B12", "VV", "VH"}));
  EXPECT_EQ(both.at(10, 5, 5), -12.5f);
  EXPECT_EQ(both.at(11, 119, 0), -19.0f);
  // B05 is the 4th channel and a 20 m band: pixel (r, c) comes from (r/2, c/2).
  const auto* b05 = px.find("B05");
  const auto& src = std::get<std::vector<std::uint16_t>>(b05->values);
  for (std::size_t r = 0; r < 120; r += 7) {
    for (std::size_t c = 0; c < 120; c += 5) {
      ASSERT_EQ(both.at(3, r, c), static_cast<float>(src[(r / 2) * 60 + c / 2]));
    }
  }
}

TEST(ModelInput, ChannelOrderIsStable) {
  auto px = full_patch();
  std::reverse(px.bands.begin(), px.bands.end());
  EXPECT_EQ(prepare_model_input(px, Modality::S1S2).channels, channel_order(Modality::S1S2));
}

TEST(ModelInput, MissingBand) {
  auto px = full_patch();
  px.bands.erase(std::remove_if(px.bands.begin(), px.bands.end(),
                                [](const Band& b) { return b.name == "B8A"; }),
                 px.bands.end());
  EXPECT_THROW((void)prepare_model_input(px, Modality::S2), DataError);
  EXPECT_NO_THROW((void)prepare_model_input(px, Modality::S1));
}

TEST(Upsample, ReplicatesBlocksAndPreservesMultiset) {
  std::mt19937_64 rng(2);
  Band b{"B11", 20.0, 60, 60, std::vector<std::uint16_t>(3600), std::nullopt};
  auto& v = std::get<std::vector<std::uint16_t>>(b.values);
  for (auto& x : v) x = static_cast<std::uint16_t>(rng() % 50);
  const auto up = upsample_nearest(b, 2);
  EXPECT_EQ(up.width, 120u);
  EXPECT_EQ(up.height, 120u);
  EXPECT_EQ(up.resolution_m, 10.0);
  const auto& u = std::get<std::vector<std::uint16_t>>(up.values);
  for (std::size_t r = 0; r < 120; ++r) {
    for (std::size_t c = 0; c < 120; ++c) ASSERT_EQ(u[r * 120 + c], v[(r / 2) * 60 + c / 2]);
  }
  std::map<std::uint16_t, std::size_t> src_counts, up_counts;
  for (auto x : v) ++src_counts[x];
  for (auto x : u) ++up_counts[x];
  for (auto& [k, n] : src_counts) n *= 4;
  EXPECT_EQ(src_counts, up_counts);

  const auto flat = upsample_nearest(constant_band("B05", 20.0, 60, 321), 2);
  const auto& f = std::get<std::vector<std::uint16_t>>(flat.values);
  EXPECT_TRUE(std::all_of(f.begin(), f.end(), [](auto x) { return x == 321; }));
}

// ---------------------------------------------------------------------------
// Dataset statistics

MultiLabelSet labels_of(std::initializer_list<std::size_t> classes) {
  MultiLabelSet s;
  for (auto c : classes) s.bits.set(c);
  return s;
}

TEST(DatasetStats, SinglePatch) {
  const auto nom = ClassNomenclature::standard19();
  const auto pastures = nom.class_index("Pastures");
  const std::vector<DatasetRecord> records = {{"a", SplitTag::Train, labels_of({pastures}), {}}};
  const auto stats = dataset_stats(records);
  EXPECT_EQ(stats.at(pastures, SplitTag::Train), 1u);
  EXPECT_EQ(stats.at(pastures, SplitTag::Validation), 0u);
  EXPECT_EQ(stats.total(pastures), 1u);
  const auto j = stats.to_json(nom);
  EXPECT_EQ(j["classes"][pastures]["name"], "Pastures");
  EXPECT_EQ(j["classes"][pastures]["total"], 1);
}

TEST(DatasetStats, SnowAndCloudExcluded) {
  const std::vector<DatasetRecord> records = {
      {"a", SplitTag::Test, labels_of({1, 2}), {true, false, false}},
      {"b", SplitTag::Test, labels_of({1}), {false, true, false}},
      {"c", SplitTag::Test, labels_of({1}), {false, false, true}},
      {"d", SplitTag::Test, labels_of({1}), {}},
  };
  const auto stats = dataset_stats(records);
  EXPECT_EQ(stats.at(1, SplitTag::Test), 1u);
  EXPECT_EQ(stats.total(2), 0u);
}

TEST(DatasetStats, ConcatenationIsElementwiseSum) {
  std::mt19937_64 rng(6);
  auto random_records = [&](std::size_t n) {
    std::vector<DatasetRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
      DatasetRecord r;
      r.patch_id = std::to_string(i);
      r.split = kAllSplitTags[rng() % 3];
      for (std::size_t c = 0; c < kNumClasses; ++c) r.labels.bits[c] = rng() % 4 == 0;
      r.flags = {rng() % 6 == 0, rng() % 6 == 0, false};
      out.push_back(r);
    }
    return out;
  };
  const auto a = random_records(300);
  const auto b = random_records(500);
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto whole = dataset_stats(ab);
  EXPECT_EQ(whole, dataset_stats(a) + dataset_stats(b));
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    EXPECT_EQ(whole.total(c), whole.at(c, SplitTag::Train) + whole.at(c, SplitTag::Validation) +
                                  whole.at(c, SplitTag::Test));
  }
}

TEST(DatasetStats, RowArithmetic) {
  ClassSplitCounts counts;
  counts.counts[7] = {15082, 8157, 9942};
  EXPECT_EQ(counts.total(7), 33181u);
}

// ---------------------------------------------------------------------------
// GeoTIFF I/O

TEST(GeoTiff, RoundTripAllPixelTypes) {
  testing::TempDir dir;
  auto u16 = testing::make_raster<std::uint16_t>(
      37, 10.0, 399960.0, 5000040.0, "EPSG:32633",
      [](std::size_t c, std::size_t r) { return static_cast<std::uint16_t>(c * 1000 + r); });
  u16.nodata = 0.0;
  write_geotiff(dir / "u16.tif", u16);
  const auto back = read_geotiff(dir / "u16.tif");
  EXPECT_EQ(back.width, 37u);
  EXPECT_EQ(back.origin_x, 399960.0);
  EXPECT_EQ(back.origin_y, 5000040.0);
  EXPECT_EQ(back.pixel_size, 10.0);
  EXPECT_EQ(back.crs, "EPSG:32633");
  EXPECT_EQ(back.nodata, 0.0);
  EXPECT_EQ(back.pixels, u16.pixels);

  auto f32 = testing::make_raster<float>(5, 10.0, 0.0, 50.0, "local grid",
                                         [](std::size_t c, std::size_t r) {
                                           return static_cast<float>(c) - 0.5f * r;
                                         });
  std::get<std::vector<float>>(f32.pixels)[3] = NAN;
  write_geotiff(dir / "f32.tif", f32);
  const auto fb = read_geotiff(dir / "f32.tif");
  EXPECT_EQ(fb.crs, "local grid");
  EXPECT_FALSE(fb.nodata.has_value());
  const auto& fv = std::get<std::vector<float>>(fb.pixels);
  EXPECT_TRUE(std::isnan(fv[3]));
  EXPECT_EQ(fv[4], 4.0f);

  auto i16 = testing::make_raster<std::int16_t>(
      3, 20.0, 100.0, 200.0, "EPSG:3035",
      [](std::size_t c, std::size_t r) { return static_cast<std::int16_t>(-100 * c + r); });
  write_geotiff(dir / "i16.tif", i16);
  EXPECT_EQ(read_geotiff(dir / "i16.tif").pixels, i16.pixels);
}

TEST(GeoTiff, Errors) {
  testing::TempDir dir;
  EXPECT_THROW((void)read_geotiff(dir / "missing.tif"), IoError);
  testing::write_text(dir / "junk.tif", "not a tiff at all");
  EXPECT_THROW((void)read_geotiff(dir / "junk.tif"), Error);
}

}  // namespace
}  // namespace geopatch
