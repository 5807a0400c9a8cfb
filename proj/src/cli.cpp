#include "geopatch/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "geopatch/config.hpp"
#include "geopatch/dataset_index.hpp"
#include "geopatch/error.hpp"
#include "geopatch/file_util.hpp"
#include "geopatch/geojson.hpp"
#include "geopatch/raster_io.hpp"
#include "geopatch/worker_pool.hpp"

namespace geopatch {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::string_view kVersion = "0.1.0";
constexpr std::string_view kAuxListName = "snow_cloud_patches.txt";

// ---------------------------------------------------------------------------
// Flags

/// Config-mirroring flags of one subcommand. Only flags given on the command
/// line are applied over the file and default values.
struct Flags {
  std::string config_file;
  double patch_size = 0, resolution = 0, p = 0, q = 0, grid_cell = 0, coverage = 0,
         min_fraction = 0;
  std::string split_method, nomenclature, modality, tiles, land_cover, out_dir, store, baseline,
      snow_list, cloud_list;
  std::uint64_t seed = 0, map_size = 0;
  std::size_t jobs = 0, lookups = 0, batch_size = 0;

  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;

  template <typename T, typename Apply>
  void add(CLI::App* app, const std::string& name, T& slot, const std::string& help,
           Apply apply) {
    auto* opt = app->add_option(name, slot, help);
    setters.emplace_back(opt, [&slot, apply](RunConfig& c) { apply(c, slot); });
  }
};

void add_config_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "TOML run configuration")->check(CLI::ExistingFile);
  f.add(app, "--out-dir", f.out_dir, "Dataset directory for artifacts and manifests",
        [](RunConfig& c, const std::string& v) { c.out_dir = v; });
  f.add(app, "--patch-size", f.patch_size, "Patch side in meters (1200)",
        [](RunConfig& c, double v) { c.patch_size_m = v; });
  f.add(app, "--resolution", f.resolution, "Reference-map pixel size in meters (10)",
        [](RunConfig& c, double v) { c.resolution_m = v; });
  f.add(app, "--p", f.p, "Area fraction of the central test square (0.25)",
        [](RunConfig& c, double v) { c.split_p = v; });
  f.add(app, "--q", f.q, "Area fraction of the validation frame (0.25)",
        [](RunConfig& c, double v) { c.split_q = v; });
  f.add(app, "--split-method", f.split_method, "geographic or grid",
        [](RunConfig& c, const std::string& v) { c.split_method = parse_split_method(v); });
  f.add(app, "--grid-cell", f.grid_cell, "Cell size of the grid baseline in meters",
        [](RunConfig& c, double v) { c.grid_cell_m = v; });
  f.add(app, "--coverage-threshold", f.coverage, "Minimum labeled share of a patch (0.75)",
        [](RunConfig& c, double v) { c.coverage_threshold = v; });
  f.add(app, "--min-label-fraction", f.min_fraction, "Share a class needs to become a label (0)",
        [](RunConfig& c, double v) { c.min_label_fraction = v; });
  f.add(app, "--nomenclature", f.nomenclature, "Class mapping CSV (built-in 19 classes)",
        [](RunConfig& c, const std::string& v) { c.nomenclature_path = v; });
  f.add(app, "--modality", f.modality, "S1, S2 or S1+S2",
        [](RunConfig& c, const std::string& v) { c.modality = parse_modality(v); });
  f.add(app, "--tiles", f.tiles, "Directory of tile directories",
        [](RunConfig& c, const std::string& v) { c.tiles_dir = v; });
  f.add(app, "--land-cover", f.land_cover, "GeoJSON file or directory of land-cover polygons",
        [](RunConfig& c, const std::string& v) { c.land_cover = v; });
  f.add(app, "--store", f.store, "Store directory (<out-dir>/store)",
        [](RunConfig& c, const std::string& v) { c.store_path = v; });
  f.add(app, "--baseline-dir", f.baseline, "Per-patch files for bench (<out-dir>/patches)",
        [](RunConfig& c, const std::string& v) { c.baseline_dir = v; });
  f.add(app, "--snow-list", f.snow_list, "Patch ids covered by seasonal snow",
        [](RunConfig& c, const std::string& v) { c.snow_list = v; });
  f.add(app, "--cloud-list", f.cloud_list, "Patch ids covered by cloud or shadow",
        [](RunConfig& c, const std::string& v) { c.cloud_list = v; });
  f.add(app, "--seed", f.seed, "Seed for benchmark key sampling (0)",
        [](RunConfig& c, std::uint64_t v) { c.seed = v; });
  f.add(app, "--jobs", f.jobs, "Worker threads (number of processors)",
        [](RunConfig& c, std::size_t v) { c.jobs = v; });
  f.add(app, "--lookups", f.lookups, "Random reads per benchmark side (10000)",
        [](RunConfig& c, std::size_t v) { c.lookups = v; });
  f.add(app, "--batch-size", f.batch_size, "Puts per store transaction (1024)",
        [](RunConfig& c, std::size_t v) { c.batch_size = v; });
  f.add(app, "--map-size", f.map_size, "Store map size in bytes",
        [](RunConfig& c, std::uint64_t v) { c.map_size = v; });
}

RunConfig effective_config(const Flags& f) {
  RunConfig config;
  if (!f.config_file.empty()) config = apply_config_file(f.config_file, config);
  for (const auto& [opt, apply] : f.setters) {
    if (opt->count() > 0) apply(config);
  }
  config.validate();
  if (config.out_dir.empty()) throw UsageError("an output directory is required (--out-dir)");
  return config;
}

// ---------------------------------------------------------------------------
// Manifests

json file_digest(const fs::path& file, const std::string& label) {
  return {{"path", label}, {"sha256", sha256_file(file)}};
}

/// Digests of a file, or of every regular file below a directory in sorted
/// order, labelled relative to `label_root` (or as given when empty).
void digest_into(json& list, const fs::path& path, const fs::path& label_root = {}) {
  auto label = [&](const fs::path& p) {
    return label_root.empty() ? p.generic_string() : p.lexically_relative(label_root).generic_string();
  };
  if (fs::is_regular_file(path)) {
    list.push_back(file_digest(path, label(path)));
    return;
  }
  if (!fs::is_directory(path)) throw IoError(fmt::format("{} does not exist", path.string()));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) list.push_back(file_digest(file, label(file)));
}

struct Manifest {
  std::string subcommand;
  json inputs = json::array();
  json counts = json::object();
  json outputs = json::array();
  json extra = json::object();

  void write(const RunConfig& config) const {
    json doc = {{"tool", "geopatch"},
                {"version", kVersion},
                {"subcommand", subcommand},
                {"config", config},
                {"config_sha256", config_hash(config)},
                {"inputs", inputs},
                {"counts", counts},
                {"outputs", outputs}};
    for (const auto& [key, value] : extra.items()) doc[key] = value;
    fs::create_directories(config.out_dir);
    write_file_atomic(config.out_dir / fmt::format("manifest_{}.json", subcommand),
                      doc.dump(1) + "\n");
  }
};

void add_nomenclature_input(Manifest& m, const RunConfig& config) {
  if (!config.nomenclature_path.empty()) digest_into(m.inputs, config.nomenclature_path);
}

void add_index_output(Manifest& m, const RunConfig& config) {
  digest_into(m.outputs, DatasetIndex::path_in(config.out_dir), config.out_dir);
}

void add_sidecar_outputs(Manifest& m, const RunConfig& config, const DatasetIndex& index) {
  for (const auto& e : index.entries) {
    if (e.disposition == Disposition::Dropped) continue;
    digest_into(m.outputs, patch_dir(config.out_dir, e.patch.id()) / "metadata.json",
                config.out_dir);
  }
}

// ---------------------------------------------------------------------------
// tile

std::set<std::string> read_id_list(const fs::path& path) {
  std::set<std::string> ids;
  if (path.empty()) return ids;
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read patch list {}", path.string()));
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') ids.insert(line);
  }
  return ids;
}

struct TileBands {
  std::map<std::string, GeoRaster> rasters;
  SquareExtent extent;
};

TileBands load_tile_bands(const fs::path& dir) {
  TileBands tile;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tif") {
      tile.rasters.emplace(entry.path().stem().string(), read_geotiff(entry.path()));
    }
  }
  if (tile.rasters.empty()) throw DataError(fmt::format("no band rasters in {}", dir.string()));

  const GeoRaster* finest = nullptr;
  for (const auto& [name, raster] : tile.rasters) {
    if (finest == nullptr || raster.pixel_size < finest->pixel_size) finest = &raster;
  }
  if (finest->width != finest->height) {
    throw DomainError(fmt::format("tile {} is not square ({}x{} pixels)", dir.string(),
                                  finest->width, finest->height));
  }
  tile.extent = {finest->origin_x, finest->origin_y,
                 static_cast<double>(finest->width) * finest->pixel_size, finest->crs};
  for (const auto& [name, raster] : tile.rasters) {
    const SquareExtent e{raster.origin_x, raster.origin_y,
                         static_cast<double>(raster.width) * raster.pixel_size, raster.crs};
    if (raster.width != raster.height || e != tile.extent) {
      throw DataError(fmt::format("band {} of {} does not cover the tile extent", name,
                                  dir.string()));
    }
  }
  return tile;
}

int cmd_tile(const RunConfig& config) {
  if (config.tiles_dir.empty()) throw UsageError("the tile stage needs --tiles");
  if (!fs::is_directory(config.tiles_dir)) {
    throw IoError(fmt::format("tiles directory {} does not exist", config.tiles_dir.string()));
  }
  const auto snow = read_id_list(config.snow_list);
  const auto cloud = read_id_list(config.cloud_list);

  std::vector<fs::path> tile_dirs;
  for (const auto& entry : fs::directory_iterator(config.tiles_dir)) {
    if (entry.is_directory()) tile_dirs.push_back(entry.path());
  }
  std::sort(tile_dirs.begin(), tile_dirs.end());

  const auto patches_root = config.out_dir / "patches";
  fs::remove_all(patches_root);
  fs::create_directories(patches_root);

  DatasetIndex index;
  for (const auto& dir : tile_dirs) {
    const auto quality_file = dir / "quality.json";
    if (!fs::is_regular_file(quality_file)) {
      throw DataError(fmt::format("tile {} has no quality.json", dir.string()));
    }
    const auto bytes = read_file_bytes(quality_file);
    TileQualityReport report;
    try {
      report = json::parse(bytes.begin(), bytes.end()).get<TileQualityReport>();
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}: {}", quality_file.string(), e.what()));
    }
    if (!check_quality(report)) {
      spdlog::info("tile {} fails the quality gate", report.tile_id);
      index.tiles_failed.push_back(report.tile_id);
      continue;
    }
    index.tiles_passed.push_back(report.tile_id);

    const auto tile = load_tile_bands(dir);
    const auto patches = tile_to_patches(tile.extent, report.tile_id, config.patch_size_m);
    std::vector<IndexEntry> entries(patches.size());
    parallel_for(patches.size(), config.jobs, [&](std::size_t i) {
      const auto& patch = patches[i];
      const auto id = patch.id();
      PatchPixels pixels;
      for (const auto& [name, raster] : tile.rasters) {
        pixels.bands.push_back(cut_band(raster, name, patch));
      }
      PatchFlags flags;
      flags.snow = snow.contains(id);
      flags.cloud_or_shadow = cloud.contains(id);
      flags.has_invalid = std::any_of(pixels.bands.begin(), pixels.bands.end(),
                                      [](const Band& b) { return b.invalid_count() > 0; });

      IndexEntry& e = entries[i];
      e.patch = patch;
      e.tile = tile.extent;
      e.flags = flags;
      e.disposition = screen_patch(pixels, flags);
      if (e.disposition == Disposition::Dropped) return;
      const auto pdir = patch_dir(config.out_dir, id);
      fs::create_directories(pdir);
      for (const auto& band : pixels.bands) {
        write_band(pdir / (band.name + ".tif"), band, patch);
        e.bands.push_back(band.name);
      }
    });
    for (auto& e : entries) index.entries.push_back(std::move(e));
  }

  std::sort(index.entries.begin(), index.entries.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.patch.id() < b.patch.id(); });
  for (std::size_t i = 1; i < index.entries.size(); ++i) {
    if (index.entries[i].patch.id() == index.entries[i - 1].patch.id()) {
      throw DataError("duplicate patch id " + index.entries[i].patch.id());
    }
  }

  std::set<std::string> known;
  std::string aux_list;
  std::size_t main = 0, aux = 0, dropped = 0;
  for (const auto& e : index.entries) {
    known.insert(e.patch.id());
    switch (e.disposition) {
      case Disposition::Main: ++main; break;
      case Disposition::AuxiliaryList:
        ++aux;
        aux_list += e.patch.id() + "\n";
        break;
      case Disposition::Dropped: ++dropped; break;
    }
  }
  for (const auto* list : {&snow, &cloud}) {
    for (const auto& id : *list) {
      if (!known.contains(id)) spdlog::warn("flagged patch {} is not part of any tile", id);
    }
  }

  index.save(config.out_dir);
  index.write_sidecars(config.out_dir);
  write_file_atomic(config.out_dir / kAuxListName, aux_list);

  Manifest m{"tile"};
  digest_into(m.inputs, config.tiles_dir);
  if (!config.snow_list.empty()) digest_into(m.inputs, config.snow_list);
  if (!config.cloud_list.empty()) digest_into(m.inputs, config.cloud_list);
  m.counts = {{"tiles", tile_dirs.size()},
              {"tiles_passed", index.tiles_passed.size()},
              {"tiles_failed", index.tiles_failed.size()},
              {"patches", index.entries.size()},
              {"main", main},
              {"auxiliary", aux},
              {"dropped", dropped}};
  add_index_output(m, config);
  digest_into(m.outputs, config.out_dir / kAuxListName, config.out_dir);
  digest_into(m.outputs, patches_root, config.out_dir);
  m.write(config);
  std::cout << fmt::format("{} tiles ({} failed the quality gate), {} patches: {} main, {} "
                           "auxiliary, {} dropped\n",
                           tile_dirs.size(), index.tiles_failed.size(), index.entries.size(), main,
                           aux, dropped);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// label

int cmd_label(const RunConfig& config) {
  if (config.land_cover.empty()) throw UsageError("the label stage needs --land-cover");
  auto index = DatasetIndex::load(config.out_dir);
  const auto nomenclature = config.nomenclature();
  const auto polygons = load_land_cover(config.land_cover);
  Manifest m{"label"};
  digest_into(m.inputs, DatasetIndex::path_in(config.out_dir), config.out_dir);
  digest_into(m.inputs, config.land_cover);
  add_nomenclature_input(m, config);

  std::mutex overlap_mutex;
  std::size_t overlap_pixels = 0;
  parallel_for(index.entries.size(), config.jobs, [&](std::size_t i) {
    IndexEntry& e = index.entries[i];
    e.coverage.reset();
    e.retention.reset();
    e.labels.reset();
    if (e.disposition == Disposition::Dropped) return;

    RasterizeDiagnostics diag;
    const auto map =
        rasterize_reference_map(polygons, e.patch, config.resolution_m, nomenclature, &diag);
    if (diag.overlap_pixels > 0) {
      spdlog::warn("patch {}: {} pixels covered by overlapping polygons", e.patch.id(),
                   diag.overlap_pixels);
      std::lock_guard lock(overlap_mutex);
      overlap_pixels += diag.overlap_pixels;
    }

    GeoRaster raster;
    raster.width = map.width();
    raster.height = map.height();
    raster.origin_x = e.patch.origin_x;
    raster.origin_y = e.patch.origin_y;
    raster.pixel_size = config.resolution_m;
    raster.crs = e.patch.crs;
    raster.nodata = kUnlabeled;
    raster.pixels = map.values();
    const auto pdir = patch_dir(config.out_dir, e.patch.id());
    fs::create_directories(pdir);
    write_geotiff(pdir / (std::string(kReferenceMapName) + ".tif"), raster);

    const auto decision = retention_decision(map, config.coverage_threshold);
    e.coverage = decision.coverage;
    e.retention = decision.reason;
    if (decision.keep) {
      e.labels = extract_multilabels(map, config.min_label_fraction).names(nomenclature);
    }
  });

  std::map<RetentionReason, std::size_t> reasons;
  for (const auto& e : index.entries) {
    if (e.retention) ++reasons[*e.retention];
  }
  index.save(config.out_dir);
  index.write_sidecars(config.out_dir);

  m.counts = {{"labeled", reasons[RetentionReason::Kept]},
              {"no_labels", reasons[RetentionReason::NoLabels]},
              {"low_coverage", reasons[RetentionReason::LowCoverage]},
              {"overlap_pixels", overlap_pixels}};
  add_index_output(m, config);
  for (const auto& e : index.entries) {
    if (e.disposition == Disposition::Dropped) continue;
    digest_into(m.outputs,
                patch_dir(config.out_dir, e.patch.id()) / (std::string(kReferenceMapName) + ".tif"),
                config.out_dir);
  }
  add_sidecar_outputs(m, config, index);
  m.write(config);
  std::cout << fmt::format("labeled {} patches: {} kept, {} without labels, {} below coverage\n",
                           reasons[RetentionReason::Kept] + reasons[RetentionReason::NoLabels] +
                               reasons[RetentionReason::LowCoverage],
                           reasons[RetentionReason::Kept], reasons[RetentionReason::NoLabels],
                           reasons[RetentionReason::LowCoverage]);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// split

int cmd_split(const RunConfig& config) {
  auto index = DatasetIndex::load(config.out_dir);
  Manifest m{"split"};
  digest_into(m.inputs, DatasetIndex::path_in(config.out_dir), config.out_dir);

  std::map<double, SplitGeometry> geometries;
  std::map<std::string, std::vector<TaggedPatch>> by_tile;
  std::array<std::size_t, 3> counts{};
  for (auto& e : index.entries) {
    e.split.reset();
    if (!e.retained()) continue;
    SplitTag tag;
    if (config.split_method == SplitMethod::Geographic) {
      auto it = geometries.find(e.tile.side);
      if (it == geometries.end()) {
        it = geometries
                 .emplace(e.tile.side, SplitGeometry(e.tile.side, config.split_p, config.split_q))
                 .first;
      }
      tag = assign_split(e.patch, e.tile, it->second);
    } else {
      tag = assign_split_grid_baseline(e.patch, config.grid_cell());
    }
    e.split = tag;
    ++counts[static_cast<std::size_t>(tag)];
    by_tile[e.patch.tile_id].emplace_back(e.patch, tag);
  }

  index.save(config.out_dir);
  index.write_sidecars(config.out_dir);

  SeparationAccumulator separation;
  for (const auto& [tile, group] : by_tile) separation.add_group(group);
  const bool all_tags = std::all_of(counts.begin(), counts.end(), [](auto n) { return n > 0; });
  if (all_tags) {
    write_file_atomic(config.out_dir / "separation.json",
                      json(separation.report()).dump(1) + "\n");
  } else {
    fs::remove(config.out_dir / "separation.json");
    spdlog::warn("some split is empty; separation statistics not written");
  }

  m.counts = {{"train", counts[0]}, {"validation", counts[1]}, {"test", counts[2]}};
  m.extra["method"] = to_string(config.split_method);
  add_index_output(m, config);
  if (all_tags) digest_into(m.outputs, config.out_dir / "separation.json", config.out_dir);
  add_sidecar_outputs(m, config, index);
  m.write(config);
  std::cout << fmt::format("{} split: {} train, {} validation, {} test\n",
                           to_string(config.split_method), counts[0], counts[1], counts[2]);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// encode

int cmd_encode(const RunConfig& config) {
  const auto index = DatasetIndex::load(config.out_dir);
  const auto channels = channel_order(config.modality);

  std::vector<const IndexEntry*> selected;
  for (const auto& e : index.entries) {
    if (e.retained()) selected.push_back(&e);
  }

  StoreWriter writer(StoreHandle{config.store(), StoreMode::WriteOnce, config.map_size},
                     config.batch_size);
  std::vector<TensorRecord> chunk;
  for (std::size_t begin = 0; begin < selected.size(); begin += config.batch_size) {
    const std::size_t n = std::min(config.batch_size, selected.size() - begin);
    chunk.assign(n, {});
    parallel_for(n, config.jobs, [&](std::size_t i) {
      chunk[i] = load_patch_record(patch_dir(config.out_dir, selected[begin + i]->patch.id()),
                                   channels);
    });
    for (std::size_t i = 0; i < n; ++i) writer.put(selected[begin + i]->patch.id(), chunk[i]);
  }
  const auto report = writer.finish();

  Manifest m{"encode"};
  digest_into(m.inputs, DatasetIndex::path_in(config.out_dir), config.out_dir);
  m.counts = json(report);
  m.extra["channels"] = channels;
  digest_into(m.outputs, config.store() / "data.mdb");
  m.outputs.back()["path"] = "store/data.mdb";
  m.write(config);
  std::cout << fmt::format("stored {} records ({} bytes) in {} transactions\n", report.entries,
                           report.value_bytes, report.batches);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// stats

int cmd_stats(const RunConfig& config) {
  const auto index = DatasetIndex::load(config.out_dir);
  const auto nomenclature = config.nomenclature();

  std::vector<DatasetRecord> records;
  for (const auto& e : index.entries) {
    if (!e.retained() || !e.split || !e.labels) continue;
    records.push_back({e.patch.id(), *e.split, MultiLabelSet::from_names(*e.labels, nomenclature),
                       e.flags});
  }
  const auto counts = dataset_stats(records);
  json doc = counts.to_json(nomenclature);
  std::size_t main = 0;
  for (const auto& r : records) main += disposition_of(r.flags) == Disposition::Main ? 1 : 0;
  doc["patches"] = main;

  Manifest m{"stats"};
  digest_into(m.inputs, DatasetIndex::path_in(config.out_dir), config.out_dir);
  add_nomenclature_input(m, config);
  if (fs::is_regular_file(config.store() / "data.mdb")) {
    const StoreReader reader(config.store());
    const auto keys = reader.keys();
    doc["store"] = {{"entries", keys.size()}, {"keys", keys}};
    m.counts["store_entries"] = keys.size();
  }
  write_file_atomic(config.out_dir / "stats.json", doc.dump(1) + "\n");
  m.counts["patches"] = main;
  digest_into(m.outputs, config.out_dir / "stats.json", config.out_dir);
  m.write(config);
  std::cout << fmt::format("{} labeled patches counted\n", main);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const RunConfig& config) {
  const StoreReader reader(config.store());
  const auto baseline = patch_files_baseline(config.baseline(), channel_order(config.modality));
  const auto report = bench_random_read(reader, baseline, config.lookups, config.seed);

  const json doc = report;
  write_file_atomic(config.out_dir / "bench_report.json", doc.dump(1) + "\n");

  Manifest m{"bench"};
  m.counts = {{"lookups", report.lookups}, {"store_entries", reader.size()}};
  m.outputs.push_back({{"path", "bench_report.json"}});
  m.write(config);
  std::cout << doc.dump(1) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("geopatch");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::warn;
  if (const char* env = std::getenv("REBEN_PIPELINE_LOG"); env != nullptr && *env != '\0') {
    level = spdlog::level::from_str(env);
  }
  spdlog::set_level(level);
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Usage: return kExitUsage;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Io: return kExitIo;
  }
  return kExitInternal;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  static std::once_flag logging_once;
  std::call_once(logging_once, setup_logging);

  CLI::App app{"Builds multi-modal patch datasets from raster tiles and land-cover polygons.",
               "geopatch"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  static constexpr Command kCommands[] = {
      {"tile", "Quality-gate tiles and cut them into patches", cmd_tile},
      {"label", "Rasterize reference maps, extract labels, apply the coverage rule", cmd_label},
      {"split", "Assign retained patches to train/validation/test", cmd_split},
      {"encode", "Write retained patches into the tensor store", cmd_encode},
      {"stats", "Per-class per-split counts of the main set", cmd_stats},
      {"bench", "Random-read throughput of the store against per-patch files", cmd_bench},
  };
  std::vector<std::unique_ptr<Flags>> flags;
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& command : kCommands) {
    auto* sub = app.add_subcommand(command.name, command.help);
    flags.push_back(std::make_unique<Flags>());
    add_config_flags(sub, *flags.back());
    subs.emplace_back(sub, &command);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, std::cerr);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i].first->parsed()) return subs[i].second->run(effective_config(*flags[i]));
    }
    return kExitUsage;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e.category());
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitIo;
  } catch (const json::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kExitInternal;
  }
}

}  // namespace geopatch
