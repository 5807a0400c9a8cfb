// Runs every release criterion and prints one PASS/FAIL line for each.
// Exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "geopatch/labeling.hpp"
#include "geopatch/patch_pipeline.hpp"
#include "geopatch/split_geometry.hpp"
#include "geopatch/tensor_record.hpp"
#include "geopatch/tensor_store.hpp"
#include "test_support.hpp"

using namespace geopatch;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

bool near_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

Outcome split_geometry() {
  Outcome o;
  for (double s : {1.0, 1200.0 * 256, 109800.0}) {
    const auto areas = SplitGeometry(s, 0.25, 0.25).region_areas();
    const double s2 = s * s;
    if (!near_rel(areas.outer_frame, 0.5 * s2, 1e-12) ||
        !near_rel(areas.inner_frame, 0.25 * s2, 1e-12) ||
        !near_rel(areas.inner_square, 0.25 * s2, 1e-12)) {
      o.fail(fmt::format("areas for s={} are ({}, {}, {})", s, areas.outer_frame / s2,
                         areas.inner_frame / s2, areas.inner_square / s2));
    }
  }
  const double patch = 1200.0;
  const SquareExtent tile{0.0, 256 * patch, 256 * patch, "X"};
  const SplitGeometry geom(tile.side, 0.25, 0.25);
  std::array<std::size_t, 3> counts{};
  for (const auto& p : tile_to_patches(tile, "T", patch)) {
    ++counts[static_cast<std::size_t>(assign_split(p, tile, geom))];
  }
  const double n = 256.0 * 256.0;
  const double f[3] = {counts[0] / n, counts[1] / n, counts[2] / n};
  const double want[3] = {0.5, 0.25, 0.25};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(f[i] - want[i]) > 0.02) o.fail(fmt::format("grid fraction {} is {}", i, f[i]));
  }
  if (o.ok) o.detail = fmt::format("grid fractions {:.4f}/{:.4f}/{:.4f}", f[0], f[1], f[2]);
  return o;
}

Outcome split_oracle() {
  Outcome o;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t checked = 0;
  for (int pair = 0; pair < 50; ++pair) {
    const double p = u(rng) * 0.6;
    const double q = u(rng) * (1.0 - p);
    const double side = 1000.0 + u(rng) * 200000.0;
    const SquareExtent tile{u(rng) * 1e6, 1e6 + u(rng) * 5e6, side, "X"};
    const SplitGeometry geom(side, p, q);
    for (int i = 0; i < 10000; ++i) {
      const double size = side * (0.001 + 0.05 * u(rng));
      PatchExtent patch{"T", 0, 0, tile.origin_x + u(rng) * (side - size),
                        tile.origin_y - u(rng) * (side - size), size, "X"};
      const auto got = assign_split(patch, tile, geom);
      const auto want = testing::nested_square_oracle(side, p, q, patch.center_x() - tile.center_x(),
                                                      patch.center_y() - tile.center_y());
      ++checked;
      if (got != want) {
        o.fail(fmt::format("disagreement at p={} q={}", p, q));
        return o;
      }
    }
  }
  o.detail = fmt::format("{} patches agree", checked);
  return o;
}

Outcome overlap_to_training() {
  Outcome o;
  const double s = 109800.0;
  const SplitGeometry geom(s, 0.25, 0.25);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t checked = 0;
  for (int k = 0; k < 20; ++k) {
    const double m = geom.outer_width() * (0.001 + 0.999 * u(rng));
    const SquareExtent a{400000.0, 5200000.0, s, "X"};
    const SquareExtent b = k % 2 == 0 ? SquareExtent{a.origin_x + s - m, a.origin_y, s, "X"}
                                      : SquareExtent{a.origin_x, a.origin_y - s + m, s, "X"};
    for (const auto* own : {&a, &b}) {
      for (const auto& patch : tile_to_patches(*own, "T", 1200.0)) {
        const double cx = patch.center_x(), cy = patch.center_y();
        const bool in_overlap = cx >= std::max(a.min_x(), b.min_x()) &&
                                cx <= std::min(a.max_x(), b.max_x()) &&
                                cy >= std::max(a.min_y(), b.min_y()) &&
                                cy <= std::min(a.max_y(), b.max_y());
        if (!in_overlap) continue;
        ++checked;
        // A point in the overlap is Train relative to either tile.
        const auto in_a = testing::nested_square_oracle(s, 0.25, 0.25, cx - a.center_x(),
                                                        cy - a.center_y());
        const auto in_b = testing::nested_square_oracle(s, 0.25, 0.25, cx - b.center_x(),
                                                        cy - b.center_y());
        if (assign_split(patch, *own, geom) != SplitTag::Train || in_a != SplitTag::Train ||
            in_b != SplitTag::Train) {
          o.fail(fmt::format("patch {} in a {} m overlap is not Train", patch.id(), m));
        }
      }
    }
  }
  if (checked == 0) o.fail("no patch centered in any overlap");
  if (o.ok) o.detail = fmt::format("{} overlap patches over 20 widths", checked);
  return o;
}

ReferenceMap map_with_labeled(std::size_t labeled) {
  std::vector<std::uint16_t> v(14400, kUnlabeled);
  for (std::size_t i = 0; i < labeled; ++i) v[i] = static_cast<std::uint16_t>(i % 5);
  return ReferenceMap(120, 120, std::move(v));
}

Outcome coverage_boundary() {
  Outcome o;
  const auto at = retention_decision(map_with_labeled(10800));
  const auto below = retention_decision(map_with_labeled(10799));
  const auto none = retention_decision(map_with_labeled(0));
  if (!at.keep || at.reason != RetentionReason::Kept) o.fail("10800/14400 not retained");
  if (below.keep || below.reason != RetentionReason::LowCoverage) o.fail("10799/14400 retained");
  if (none.keep || none.reason != RetentionReason::NoLabels) o.fail("empty map not NoLabels");
  if (o.ok) o.detail = "10800 kept, 10799 low_coverage, 0 no_labels";
  return o;
}

Outcome label_oracle() {
  Outcome o;
  std::mt19937_64 rng(13);
  const double fractions[] = {0.0, 0.001, 0.01, 0.05, 0.2};
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint16_t> values(120 * 120);
    const auto classes = 1 + rng() % kNumClasses;
    const auto unlabeled_rate = rng() % 4 == 0 ? 0 : rng() % 60;
    std::vector<std::uint16_t> palette(classes);
    for (auto& c : palette) c = static_cast<std::uint16_t>(rng() % kNumClasses);
    // Skewed class frequencies so small classes straddle the thresholds.
    for (auto& v : values) {
      if (rng() % 100 < unlabeled_rate) {
        v = kUnlabeled;
      } else {
        const auto r = rng() % (classes * classes);
        v = palette[static_cast<std::size_t>(std::sqrt(static_cast<double>(r)))];
      }
    }
    if (i % 100 == 0) {
      std::fill(values.begin(), values.end(), kUnlabeled);
      values[i % values.size()] = static_cast<std::uint16_t>(i % kNumClasses);
    }
    const double min_fraction = fractions[i % 5];
    const auto got = extract_multilabels(ReferenceMap(120, 120, values), min_fraction);
    const auto want = testing::label_scan_oracle(values, min_fraction);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (got.test(c) != want[c]) {
        o.fail(fmt::format("map {} class {} differs", i, c));
        return o;
      }
    }
  }
  o.detail = "1000 maps agree";
  return o;
}

Outcome quality_gate() {
  Outcome o;
  std::vector<TileQualityReport> reports;
  for (int i = 0; i < 125; ++i) {
    TileQualityReport r{fmt::format("T{:03d}", i), true, true, {{"cloud_cover_ok", i % 2 == 0}}};
    if (i % 21 == 4) (i % 2 ? r.radiometric_ok : r.geometric_ok) = false;
    reports.push_back(r);
  }
  const auto failing = std::count_if(reports.begin(), reports.end(),
                                     [](const auto& r) { return !check_quality(r); });
  const auto passed = passing_tiles(reports).size();
  if (failing != 6) o.fail(fmt::format("fixture has {} failures", failing));
  if (passed != 119) o.fail(fmt::format("{} tiles processed", passed));
  if (o.ok) o.detail = "125 reports, 119 processed";
  return o;
}

Outcome preprocessing_shapes() {
  Outcome o;
  std::mt19937_64 rng(17);
  PatchPixels px;
  for (auto name : kS2AllBands) {
    const bool is60 = name == "B01" || name == "B09";
    const bool is20 = name == "B05" || name == "B06" || name == "B07" || name == "B8A" ||
                      name == "B11" || name == "B12";
    const double res = is60 ? 60.0 : is20 ? 20.0 : 10.0;
    const auto n = static_cast<std::size_t>(1200.0 / res);
    std::vector<std::uint16_t> v(n * n);
    for (auto& x : v) x = static_cast<std::uint16_t>(rng() % 4000);
    px.bands.push_back(Band{std::string(name), res, n, n, std::move(v), std::nullopt});
  }
  for (auto name : kS1Channels) {
    std::vector<float> v(14400);
    for (auto& x : v) x = -30.0f + static_cast<float>(rng() % 3000) / 100.0f;
    px.bands.push_back(Band{std::string(name), 10.0, 120, 120, std::move(v), std::nullopt});
  }
  const auto input = prepare_model_input(px, Modality::S1S2);
  if (input.channels.size() != 12 || input.height != 120 || input.width != 120 ||
      input.data.size() != 12u * 120u * 120u) {
    o.fail(fmt::format("stacked {}x{}x{}", input.channels.size(), input.height, input.width));
  }
  for (const auto& band : px.bands) {
    if (band.resolution_m != 20.0) continue;
    const auto up = upsample_nearest(band, 2);
    std::map<std::uint16_t, std::size_t> a, b;
    for (auto x : std::get<std::vector<std::uint16_t>>(band.values)) a[x] += 4;
    for (auto x : std::get<std::vector<std::uint16_t>>(up.values)) ++b[x];
    if (a != b || up.width != 120) o.fail("multiset of " + band.name + " not preserved x4");
  }
  if (o.ok) o.detail = "12x120x120, six 20 m bands preserve multisets";
  return o;
}

Outcome serialization() {
  Outcome o;
  std::mt19937_64 rng(19);
  std::size_t zero_sized = 0, nan_bearing = 0;
  for (int i = 0; i < 1000; ++i) {
    auto r = testing::random_record(rng);
    if (i % 10 == 0) r.tensors["empty"] = Tensor{DType::F32, {0, 3}, {}};
    if (i % 10 == 1) {
      const std::vector<float> v = {NAN, -NAN, 1.0f};
      r.tensors["nan"] = Tensor::from<float>(v, {3});
    }
    for (const auto& [name, t] : r.tensors) {
      zero_sized += t.data.empty() ? 1 : 0;
      if (t.dtype == DType::F32) {
        const auto v = t.to_vector<float>();
        nan_bearing += std::any_of(v.begin(), v.end(), [](float x) { return std::isnan(x); });
      }
    }
    const auto bytes = encode_record(r);
    const auto ref = testing::reference_encode(r);
    if (decode_record(bytes) != r || encode_record(decode_record(bytes)) != bytes ||
        bytes.size() != ref.size() || std::memcmp(bytes.data(), ref.data(), ref.size()) != 0) {
      o.fail(fmt::format("record {} does not round-trip", i));
      return o;
    }
  }
  if (zero_sized == 0 || nan_bearing == 0) o.fail("generator missed zero-sized or NaN tensors");

  TensorRecord single;
  const std::vector<std::uint16_t> v = {1, 2, 3, 4};
  single.tensors["B02"] = Tensor::from<std::uint16_t>(v, {2, 2});
  const auto bytes = encode_record(single);
  const std::string header = R"({"B02":{"dtype":"U16","shape":[2,2],"data_offsets":[0,8]}})";
  std::vector<std::uint8_t> expected = {0x40, 0, 0, 0, 0, 0, 0, 0};
  expected.insert(expected.end(), header.begin(), header.end());
  expected.insert(expected.end(), 6, ' ');
  for (std::uint8_t b : {1, 0, 2, 0, 3, 0, 4, 0}) expected.push_back(b);
  if (testing::reference_encode(single) != expected || bytes.size() != expected.size() ||
      std::memcmp(bytes.data(), expected.data(), expected.size()) != 0) {
    o.fail("single-tensor layout differs from the reference bytes");
  }
  if (o.ok) {
    o.detail = fmt::format("1000 records ({} zero-sized, {} NaN tensors), 80-byte example", zero_sized,
                           nan_bearing);
  }
  return o;
}

TensorRecord synthetic_patch(std::size_t i) {
  std::mt19937_64 rng(i);
  TensorRecord r;
  std::vector<std::uint16_t> b(120 * 120);
  for (auto& x : b) x = static_cast<std::uint16_t>(rng() % 10000);
  std::vector<std::uint16_t> ref(120 * 120, static_cast<std::uint16_t>(i % kNumClasses));
  r.tensors["B02"] = Tensor::from<std::uint16_t>(b, {120, 120});
  r.tensors["reference_map"] = Tensor::from<std::uint16_t>(ref, {120, 120});
  return r;
}

TensorRecord tiny_record(std::size_t i) {
  std::vector<float> v(64, static_cast<float>(i));
  TensorRecord r;
  r.tensors["x"] = Tensor::from<float>(v, {8, 8});
  return r;
}

void fill_store(const std::filesystem::path& path, std::size_t n,
                TensorRecord (*make)(std::size_t), const std::filesystem::path& files = {}) {
  StoreWriter writer(StoreHandle{path, StoreMode::WriteOnce, std::size_t{8} << 30}, 4096);
  for (std::size_t i = 0; i < n; ++i) {
    const auto key = fmt::format("T{:02d}_{:03d}_{:03d}", i / 10000, (i / 100) % 100, i % 100);
    const auto record = make(i);
    writer.put(key, record);
    if (!files.empty()) write_safetensors_file(files / (key + ".safetensors"), record);
  }
  (void)writer.finish();
}

Outcome store_scaling() {
  Outcome o;
  testing::TempDir dir;
  std::filesystem::create_directories(dir / "files");
  fill_store(dir / "store", 10000, synthetic_patch, dir / "files");
  const StoreReader reader(dir / "store");
  if (reader.size() != 10000) o.fail(fmt::format("store holds {} entries", reader.size()));

  // Full parity on every key, then the randomized benchmark.
  const auto baseline = safetensors_file_baseline(dir / "files");
  const auto snap = reader.snapshot();
  for (const auto& key : snap.keys()) {
    if (snap.read_record(key) != baseline(key)) {
      o.fail("content differs for " + key);
      return o;
    }
  }
  BenchmarkReport bench;
  try {
    bench = bench_random_read(reader, baseline, 10000, 1);
  } catch (const ContentMismatchError& e) {
    o.fail(e.what());
    return o;
  }
  if (!(bench.speedup > 1.0)) o.fail(fmt::format("speedup {:.2f}", bench.speedup));

  std::vector<double> xs, ys;
  std::string latencies;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    const auto path = dir / fmt::format("scale{}", n);
    fill_store(path, n, tiny_record);
    const StoreReader r(path);
    const double mean = mean_lookup_latency_us(r, 20000, 2);
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(mean));
    latencies += fmt::format("{}{:.2f}", latencies.empty() ? "" : "/", mean);
  }
  const double mx = (xs[0] + xs[1] + xs[2]) / 3, my = (ys[0] + ys[1] + ys[2]) / 3;
  double num = 0, den = 0;
  for (int i = 0; i < 3; ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = num / den;
  if (!(slope < 1.0)) o.fail(fmt::format("latency slope {:.3f} is not sublinear", slope));
  if (o.ok) {
    o.detail = fmt::format("10000/10000 parity, speedup {:.2f}x, mean latency {} us, slope {:.3f}",
                           bench.speedup, latencies, slope);
  }
  return o;
}

struct Criterion {
  const char* name;
  double budget_s;
  Outcome (*run)();
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"split geometry", 1.0, split_geometry},
      {"split oracle equivalence", 5.0, split_oracle},
      {"overlap to training", 5.0, overlap_to_training},
      {"coverage boundary", 0.0, coverage_boundary},
      {"label extraction oracle", 10.0, label_oracle},
      {"quality gate", 0.0, quality_gate},
      {"preprocessing shapes", 0.0, preprocessing_shapes},
      {"serialization conformance", 0.0, serialization},
      {"store correctness and scaling", 300.0, store_scaling},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome.fail(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && seconds >= c.budget_s) {
      outcome.fail(fmt::format("took {:.2f} s, budget {:.0f} s", seconds, c.budget_s));
    }
    std::cout << fmt::format("{} {}: {} ({:.2f} s)\n", outcome.ok ? "PASS" : "FAIL", c.name,
                             outcome.detail, seconds)
              << std::flush;
    failures += outcome.ok ? 0 : 1;
  }
  std::cout << fmt::format("{} of {} criteria passed\n", std::size(criteria) - failures,
                           std::size(criteria));
  return failures == 0 ? 0 : 1;
}
