#include "geopatch/patch_pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "geopatch/error.hpp"

namespace geopatch {

namespace {

// Integral value of x if it is within a tiny tolerance of one.
std::optional<long long> as_integer(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x))) return std::nullopt;
  return static_cast<long long>(r);
}

template <typename T>
std::vector<T> replicate(const std::vector<T>& src, std::size_t width, std::size_t height,
                         std::size_t factor) {
  const std::size_t out_w = width * factor;
  std::vector<T> out(out_w * height * factor);
  for (std::size_t r = 0; r < height * factor; ++r) {
    const T* src_row = &src[(r / factor) * width];
    T* dst_row = &out[r * out_w];
    for (std::size_t c = 0; c < out_w; ++c) dst_row[c] = src_row[c / factor];
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const TileQualityReport& report) {
  j = nlohmann::json::object();
  j["tile_id"] = report.tile_id;
  if (report.radiometric_ok) j["radiometric_ok"] = *report.radiometric_ok;
  if (report.geometric_ok) j["geometric_ok"] = *report.geometric_ok;
  for (const auto& [name, ok] : report.other_flags) j[name] = ok;
}

void from_json(const nlohmann::json& j, TileQualityReport& report) {
  if (!j.is_object() || !j.contains("tile_id") || !j.at("tile_id").is_string()) {
    throw DataError("quality report needs a string tile_id");
  }
  report = TileQualityReport{};
  report.tile_id = j.at("tile_id").get<std::string>();
  for (const auto& [key, value] : j.items()) {
    if (key == "tile_id") continue;
    if (!value.is_boolean()) {
      throw DataError(fmt::format("quality report {}: indicator '{}' is not a boolean",
                                  report.tile_id, key));
    }
    const bool ok = value.get<bool>();
    if (key == "radiometric_ok") {
      report.radiometric_ok = ok;
    } else if (key == "geometric_ok") {
      report.geometric_ok = ok;
    } else {
      report.other_flags[key] = ok;
    }
  }
}

bool check_quality(const TileQualityReport& report) {
  if (!report.radiometric_ok) {
    throw DataError(fmt::format("quality report {}: missing radiometric_ok", report.tile_id));
  }
  if (!report.geometric_ok) {
    throw DataError(fmt::format("quality report {}: missing geometric_ok", report.tile_id));
  }
  return *report.radiometric_ok && *report.geometric_ok;
}

std::vector<std::string> passing_tiles(std::span<const TileQualityReport> reports) {
  std::vector<std::string> out;
  for (const auto& report : reports) {
    if (check_quality(report)) out.push_back(report.tile_id);
  }
  return out;
}

Point patch_origin(const SquareExtent& tile, int col, int row, double patch_size) {
  return {tile.origin_x + static_cast<double>(col) * patch_size,
          tile.origin_y - static_cast<double>(row) * patch_size};
}

std::vector<PatchExtent> tile_to_patches(const SquareExtent& tile, std::string_view tile_id,
                                         double patch_size) {
  if (!(patch_size > 0.0)) {
    throw DomainError(fmt::format("patch size must be positive, got {}", patch_size));
  }
  const auto per_side = static_cast<int>(std::floor(tile.side / patch_size));
  std::vector<PatchExtent> patches;
  if (per_side <= 0) return patches;
  patches.reserve(static_cast<std::size_t>(per_side) * per_side);
  for (int row = 0; row < per_side; ++row) {
    for (int col = 0; col < per_side; ++col) {
      const Point origin = patch_origin(tile, col, row, patch_size);
      patches.push_back(
          {std::string(tile_id), col, row, origin.x, origin.y, patch_size, tile.crs});
    }
  }
  return patches;
}

std::size_t Band::invalid_count() const {
  return std::visit(
      [this](const auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::size_t n = 0;
        for (const T x : v) {
          if constexpr (std::is_floating_point_v<T>) {
            if (std::isnan(x)) {
              ++n;
              continue;
            }
          }
          if (nodata && static_cast<double>(x) == *nodata) ++n;
        }
        return n;
      },
      values);
}

const Band* PatchPixels::find(std::string_view name) const {
  for (const auto& band : bands) {
    if (band.name == name) return &band;
  }
  return nullptr;
}

void PatchPixels::validate() const {
  if (bands.empty()) return;
  const double ground_w = static_cast<double>(bands.front().width) * bands.front().resolution_m;
  const double ground_h = static_cast<double>(bands.front().height) * bands.front().resolution_m;
  for (const auto& band : bands) {
    const std::size_t n = std::visit([](const auto& v) { return v.size(); }, band.values);
    if (n != band.width * band.height) {
      throw DataError(fmt::format("band {} holds {} values for a {}x{} grid", band.name, n,
                                  band.width, band.height));
    }
    if (static_cast<double>(band.width) * band.resolution_m != ground_w ||
        static_cast<double>(band.height) * band.resolution_m != ground_h) {
      throw DataError(fmt::format("band {} does not cover the patch extent", band.name));
    }
  }
}

std::string_view to_string(Disposition disposition) {
  switch (disposition) {
    case Disposition::Main:
      return "main";
    case Disposition::AuxiliaryList:
      return "auxiliary";
    case Disposition::Dropped:
      return "dropped";
  }
  return "unknown";
}

Disposition parse_disposition(std::string_view text) {
  if (text == "main") return Disposition::Main;
  if (text == "auxiliary") return Disposition::AuxiliaryList;
  if (text == "dropped") return Disposition::Dropped;
  throw DataError(fmt::format("unknown disposition '{}'", text));
}

Disposition disposition_of(const PatchFlags& flags) {
  if (flags.has_invalid) return Disposition::Dropped;
  if (flags.snow || flags.cloud_or_shadow) return Disposition::AuxiliaryList;
  return Disposition::Main;
}

Disposition screen_patch(const PatchPixels& pixels, const PatchFlags& flags) {
  PatchFlags effective = flags;
  if (!effective.has_invalid) {
    effective.has_invalid = std::any_of(pixels.bands.begin(), pixels.bands.end(),
                                        [](const Band& b) { return b.invalid_count() > 0; });
  }
  return disposition_of(effective);
}

Band cut_band(const GeoRaster& tile_band, std::string_view name, const PatchExtent& patch) {
  const double res = tile_band.pixel_size;
  const auto col0 = as_integer((patch.origin_x - tile_band.origin_x) / res);
  const auto row0 = as_integer((tile_band.origin_y - patch.origin_y) / res);
  const auto n = as_integer(patch.size / res);
  if (!col0 || !row0 || !n || *n <= 0) {
    throw DataError(fmt::format("band {} grid ({} m) is not aligned with patch {}", name, res,
                                patch.id()));
  }
  if (*col0 < 0 || *row0 < 0 || static_cast<std::size_t>(*col0 + *n) > tile_band.width ||
      static_cast<std::size_t>(*row0 + *n) > tile_band.height) {
    throw DataError(fmt::format("patch {} leaves the extent of band {}", patch.id(), name));
  }
  const auto size = static_cast<std::size_t>(*n);
  Band band;
  band.name = std::string(name);
  band.resolution_m = res;
  band.width = size;
  band.height = size;
  band.nodata = tile_band.nodata;
  band.values = std::visit(
      [&](const auto& src) -> PixelBuffer {
        using T = typename std::decay_t<decltype(src)>::value_type;
        std::vector<T> out(size * size);
        for (std::size_t r = 0; r < size; ++r) {
          const auto* from = &src[(static_cast<std::size_t>(*row0) + r) * tile_band.width +
                                  static_cast<std::size_t>(*col0)];
          std::copy(from, from + size, &out[r * size]);
        }
        return out;
      },
      tile_band.pixels);
  return band;
}

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::S1:
      return "S1";
    case Modality::S2:
      return "S2";
    case Modality::S1S2:
      return "S1+S2";
  }
  return "unknown";
}

Modality parse_modality(std::string_view text) {
  if (text == "S1" || text == "s1") return Modality::S1;
  if (text == "S2" || text == "s2") return Modality::S2;
  if (text == "S1+S2" || text == "S1S2" || text == "s1+s2" || text == "s1s2") {
    return Modality::S1S2;
  }
  throw UsageError(fmt::format("unknown modality '{}' (expected S1, S2 or S1+S2)", text));
}

std::vector<std::string> channel_order(Modality modality) {
  std::vector<std::string> out;
  if (modality != Modality::S1) out.insert(out.end(), kS2Channels.begin(), kS2Channels.end());
  if (modality != Modality::S2) out.insert(out.end(), kS1Channels.begin(), kS1Channels.end());
  return out;
}

Band upsample_nearest(const Band& band, std::size_t factor) {
  if (factor == 0) throw DomainError("upsampling factor must be positive");
  Band out = band;
  out.width = band.width * factor;
  out.height = band.height * factor;
  out.resolution_m = band.resolution_m / static_cast<double>(factor);
  out.values = std::visit(
      [&](const auto& v) -> PixelBuffer { return replicate(v, band.width, band.height, factor); },
      band.values);
  return out;
}

ModelInput prepare_model_input(const PatchPixels& pixels, Modality modality) {
  ModelInput input;
  input.channels = channel_order(modality);

  std::vector<const Band*> selected;
  for (const auto& name : input.channels) {
    const Band* band = pixels.find(name);
    if (band == nullptr) {
      throw DataError(
          fmt::format("band {} required for modality {} is missing", name, to_string(modality)));
    }
    selected.push_back(band);
  }
  const double target = (*std::min_element(selected.begin(), selected.end(),
                                           [](const Band* a, const Band* b) {
                                             return a->resolution_m < b->resolution_m;
                                           }))
                            ->resolution_m;

  std::vector<std::size_t> factors;
  for (const Band* band : selected) {
    const auto factor = as_integer(band->resolution_m / target);
    if (!factor || *factor < 1) {
      throw DataError(fmt::format("band {} at {} m is not a multiple of the {} m grid",
                                  band->name, band->resolution_m, target));
    }
    factors.push_back(static_cast<std::size_t>(*factor));
  }
  input.height = selected.front()->height * factors.front();
  input.width = selected.front()->width * factors.front();
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i]->height * factors[i] != input.height ||
        selected[i]->width * factors[i] != input.width) {
      throw DataError(fmt::format("band {} does not cover the patch extent", selected[i]->name));
    }
  }

  const std::size_t plane = input.height * input.width;
  input.data.resize(selected.size() * plane);
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const Band up = factors[i] == 1 ? *selected[i] : upsample_nearest(*selected[i], factors[i]);
    float* dst = &input.data[i * plane];
    std::visit(
        [&](const auto& v) {
          for (std::size_t k = 0; k < plane; ++k) dst[k] = static_cast<float>(v[k]);
        },
        up.values);
  }
  return input;
}

std::uint64_t ClassSplitCounts::total(std::size_t cls) const {
  const auto& row = counts.at(cls);
  return row[0] + row[1] + row[2];
}

ClassSplitCounts& ClassSplitCounts::operator+=(const ClassSplitCounts& other) {
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t s = 0; s < 3; ++s) counts[c][s] += other.counts[c][s];
  }
  return *this;
}

ClassSplitCounts operator+(ClassSplitCounts a, const ClassSplitCounts& b) {
  a += b;
  return a;
}

nlohmann::json ClassSplitCounts::to_json(const ClassNomenclature& nomenclature) const {
  auto classes = nlohmann::json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    classes.push_back({{"name", nomenclature.class_name(c)},
                       {"train", at(c, SplitTag::Train)},
                       {"validation", at(c, SplitTag::Validation)},
                       {"test", at(c, SplitTag::Test)},
                       {"total", total(c)}});
  }
  return {{"classes", std::move(classes)}};
}

ClassSplitCounts dataset_stats(std::span<const DatasetRecord> records) {
  ClassSplitCounts out;
  for (const auto& record : records) {
    if (disposition_of(record.flags) != Disposition::Main) continue;
    const auto split = static_cast<std::size_t>(record.split);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (record.labels.test(c)) ++out.counts[c][split];
    }
  }
  return out;
}

}  // namespace geopatch
