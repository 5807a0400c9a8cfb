#include "geopatch/config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "geopatch/error.hpp"
#include "geopatch/file_util.hpp"

namespace geopatch {

namespace fs = std::filesystem;

std::string_view to_string(SplitMethod method) {
  return method == SplitMethod::Grid ? "grid" : "geographic";
}

SplitMethod parse_split_method(std::string_view text) {
  if (text == "geographic") return SplitMethod::Geographic;
  if (text == "grid") return SplitMethod::Grid;
  throw UsageError(fmt::format("unknown split method '{}' (expected geographic or grid)", text));
}

fs::path RunConfig::store() const { return store_path.empty() ? out_dir / "store" : store_path; }

fs::path RunConfig::baseline() const {
  return baseline_dir.empty() ? out_dir / "patches" : baseline_dir;
}

void RunConfig::validate() const {
  auto require = [](bool ok, std::string_view what) {
    if (!ok) throw UsageError(std::string(what));
  };
  require(std::isfinite(patch_size_m) && patch_size_m > 0, "patch_size_m must be > 0");
  require(std::isfinite(resolution_m) && resolution_m > 0, "resolution_m must be > 0");
  require(split_p >= 0 && split_q >= 0 && split_p + split_q <= 1,
          "split fractions need p >= 0, q >= 0 and p + q <= 1");
  require(!grid_cell_m || (std::isfinite(*grid_cell_m) && *grid_cell_m > 0),
          "grid_cell_m must be > 0");
  require(coverage_threshold > 0 && coverage_threshold <= 1,
          "coverage_threshold must be in (0, 1]");
  require(min_label_fraction >= 0 && min_label_fraction < 1,
          "min_label_fraction must be in [0, 1)");
  require(batch_size > 0, "batch_size must be > 0");
  require(map_size > 0, "map_size must be > 0");
}

ClassNomenclature RunConfig::nomenclature() const {
  if (nomenclature_path.empty()) return ClassNomenclature::standard19();
  return ClassNomenclature::load(nomenclature_path);
}

namespace {

using Setter = std::function<void(RunConfig&, const toml::node&, const fs::path&)>;

[[noreturn]] void bad_type(std::string_view key, std::string_view expected) {
  throw UsageError(fmt::format("config key '{}' must be {}", key, expected));
}

double number_of(const toml::node& n, std::string_view key) {
  if (auto v = n.as_floating_point()) return v->get();
  if (auto i = n.as_integer()) return static_cast<double>(i->get());
  bad_type(key, "a number");
}

Setter real(double RunConfig::*field, std::string key) {
  return [field, key](RunConfig& c, const toml::node& n, const fs::path&) {
    c.*field = number_of(n, key);
  };
}

template <typename T>
Setter integer(T RunConfig::*field, std::string key) {
  return [field, key](RunConfig& c, const toml::node& n, const fs::path&) {
    auto i = n.as_integer();
    if (!i || i->get() < 0) bad_type(key, "a non-negative integer");
    c.*field = static_cast<T>(i->get());
  };
}

std::string text_of(const toml::node& n, std::string_view key) {
  auto s = n.as_string();
  if (!s) bad_type(key, "a string");
  return s->get();
}

Setter path(fs::path RunConfig::*field, std::string key) {
  return [field, key](RunConfig& c, const toml::node& n, const fs::path& base) {
    const fs::path p = text_of(n, key);
    c.*field = (p.is_relative() && !base.empty()) ? base / p : p;
  };
}

const std::map<std::string, Setter>& top_level() {
  static const std::map<std::string, Setter> setters = {
      {"patch_size_m", real(&RunConfig::patch_size_m, "patch_size_m")},
      {"resolution_m", real(&RunConfig::resolution_m, "resolution_m")},
      {"coverage_threshold", real(&RunConfig::coverage_threshold, "coverage_threshold")},
      {"min_label_fraction", real(&RunConfig::min_label_fraction, "min_label_fraction")},
      {"nomenclature_path", path(&RunConfig::nomenclature_path, "nomenclature_path")},
      {"modality",
       [](RunConfig& c, const toml::node& n, const fs::path&) {
         c.modality = parse_modality(text_of(n, "modality"));
       }},
      {"seed", integer(&RunConfig::seed, "seed")},
      {"jobs", integer(&RunConfig::jobs, "jobs")},
  };
  return setters;
}

const std::map<std::string, std::map<std::string, Setter>>& sections() {
  static const std::map<std::string, std::map<std::string, Setter>> tables = {
      {"split",
       {
           {"p", real(&RunConfig::split_p, "split.p")},
           {"q", real(&RunConfig::split_q, "split.q")},
           {"method",
            [](RunConfig& c, const toml::node& n, const fs::path&) {
              c.split_method = parse_split_method(text_of(n, "split.method"));
            }},
           {"grid_cell_m",
            [](RunConfig& c, const toml::node& n, const fs::path&) {
              c.grid_cell_m = number_of(n, "split.grid_cell_m");
            }},
       }},
      {"paths",
       {
           {"tiles", path(&RunConfig::tiles_dir, "paths.tiles")},
           {"land_cover", path(&RunConfig::land_cover, "paths.land_cover")},
           {"out_dir", path(&RunConfig::out_dir, "paths.out_dir")},
           {"store", path(&RunConfig::store_path, "paths.store")},
           {"baseline", path(&RunConfig::baseline_dir, "paths.baseline")},
           {"snow_list", path(&RunConfig::snow_list, "paths.snow_list")},
           {"cloud_list", path(&RunConfig::cloud_list, "paths.cloud_list")},
       }},
      {"store",
       {
           {"batch_size", integer(&RunConfig::batch_size, "store.batch_size")},
           {"map_size", integer(&RunConfig::map_size, "store.map_size")},
           {"lookups", integer(&RunConfig::lookups, "store.lookups")},
       }},
  };
  return tables;
}

}  // namespace

RunConfig apply_config_text(std::string_view toml_text, RunConfig base, const fs::path& base_dir) {
  toml::table doc;
  try {
    doc = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream where;
    where << e.source().begin;
    throw UsageError(fmt::format("invalid config at {}: {}", where.str(), e.description()));
  }

  for (auto&& [key, node] : doc) {
    const std::string name(key.str());
    if (auto it = top_level().find(name); it != top_level().end()) {
      it->second(base, node, base_dir);
      continue;
    }
    auto section = sections().find(name);
    if (section == sections().end()) throw UsageError("unknown config key '" + name + "'");
    const auto* table = node.as_table();
    if (table == nullptr) bad_type(name, "a table");
    for (auto&& [sub_key, sub_node] : *table) {
      const std::string sub(sub_key.str());
      auto it = section->second.find(sub);
      if (it == section->second.end()) {
        throw UsageError("unknown config key '" + name + "." + sub + "'");
      }
      it->second(base, sub_node, base_dir);
    }
  }
  return base;
}

RunConfig apply_config_file(const fs::path& path, RunConfig base) {
  const auto bytes = read_file_bytes(path);
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return apply_config_text(text, std::move(base), path.parent_path());
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {
      {"patch_size_m", c.patch_size_m},
      {"resolution_m", c.resolution_m},
      {"coverage_threshold", c.coverage_threshold},
      {"min_label_fraction", c.min_label_fraction},
      {"nomenclature_path", c.nomenclature_path.string()},
      {"modality", to_string(c.modality)},
      {"seed", c.seed},
      {"split",
       {{"p", c.split_p},
        {"q", c.split_q},
        {"method", to_string(c.split_method)},
        {"grid_cell_m", c.grid_cell()}}},
      {"paths",
       {{"tiles", c.tiles_dir.string()},
        {"land_cover", c.land_cover.string()},
        {"snow_list", c.snow_list.string()},
        {"cloud_list", c.cloud_list.string()}}},
      {"store", {{"batch_size", c.batch_size}, {"map_size", c.map_size}, {"lookups", c.lookups}}},
  };
}

std::string config_hash(const RunConfig& config) {
  return sha256_hex(nlohmann::json(config).dump());
}

}  // namespace geopatch
