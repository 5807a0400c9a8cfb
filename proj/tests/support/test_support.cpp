#include "test_support.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#ifndef GEOPATCH_TOOL
#define GEOPATCH_TOOL "geopatch"
#endif

namespace geopatch::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("geopatch-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
           std::to_string(rd()));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

ToolResult run_tool(const std::vector<std::string>& args, const std::string& env) {
  TempDir capture;
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += shell_quote(GEOPATCH_TOOL);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " >" + shell_quote((capture / "out").string());
  cmd += " 2>" + shell_quote((capture / "err").string());
  const int status = std::system(cmd.c_str());
  ToolResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(capture / "out");
  r.err = read_text(capture / "err");
  return r;
}

void write_tile(const fs::path& root, const TileSpec& spec) {
  const auto dir = root / spec.tile_id;
  fs::create_directories(dir);
  nlohmann::json quality = {{"tile_id", spec.tile_id},
                            {"radiometric_ok", spec.radiometric_ok},
                            {"geometric_ok", spec.geometric_ok},
                            {"cloud_cover_ok", true}};
  write_text(dir / "quality.json", quality.dump());

  for (const auto& [name, res] : spec.bands) {
    const auto px = static_cast<std::size_t>(std::llround(spec.side_m / res));
    const auto salt = static_cast<std::uint16_t>(name.size() * 7 + name.back());
    auto raster = make_raster<std::uint16_t>(
        px, res, spec.origin_x, spec.origin_y, spec.crs, [&](std::size_t c, std::size_t r) {
          return static_cast<std::uint16_t>(1 + (c * 31 + r * 17 + salt) % 9000);
        });
    raster.nodata = 0.0;
    auto& values = std::get<std::vector<std::uint16_t>>(raster.pixels);
    for (const auto& [band, c, r] : spec.nodata_pixels) {
      if (band == name) values[r * px + c] = 0;
    }
    write_geotiff(dir / (name + ".tif"), raster);
  }
}

Polygon rectangle(double min_x, double min_y, double max_x, double max_y) {
  return Polygon{{Ring{{min_x, min_y}, {max_x, min_y}, {max_x, max_y}, {min_x, max_y},
                       {min_x, min_y}}}};
}

SplitTag nested_square_oracle(double side, double p, double q, double dx, double dy) {
  const double d = std::max(std::abs(dx), std::abs(dy));
  const double test_half = std::sqrt(p) * side / 2.0;
  const double val_half = std::sqrt(p + q) * side / 2.0;
  if (d >= val_half) return SplitTag::Train;
  if (d >= test_half) return SplitTag::Validation;
  return SplitTag::Test;
}

namespace {

void append(std::vector<std::uint8_t>& out, const std::string& s) {
  out.insert(out.end(), s.begin(), s.end());
}

}  // namespace

std::vector<std::uint8_t> reference_encode(const TensorRecord& record) {
  std::string header = "{";
  std::vector<std::string> parts;
  if (!record.metadata.empty()) {
    std::string meta = "\"__metadata__\":{";
    std::vector<std::string> kv;
    for (const auto& [k, v] : record.metadata) kv.push_back("\"" + k + "\":\"" + v + "\"");
    for (std::size_t i = 0; i < kv.size(); ++i) meta += (i ? "," : "") + kv[i];
    parts.push_back(meta + "}");
  }
  std::vector<std::string> names;
  for (const auto& [name, t] : record.tensors) names.push_back(name);
  std::sort(names.begin(), names.end());
  std::size_t offset = 0;
  for (const auto& name : names) {
    const auto& t = record.tensors.at(name);
    std::string shape;
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
      shape += (i ? "," : "") + std::to_string(t.shape[i]);
    }
    parts.push_back("\"" + name + "\":{\"dtype\":\"" + std::string(dtype_name(t.dtype)) +
                    "\",\"shape\":[" + shape + "],\"data_offsets\":[" + std::to_string(offset) +
                    "," + std::to_string(offset + t.data.size()) + "]}");
    offset += t.data.size();
  }
  for (std::size_t i = 0; i < parts.size(); ++i) header += (i ? "," : "") + parts[i];
  header += "}";
  while (header.size() % 8 != 0) header += ' ';

  std::vector<std::uint8_t> out;
  std::uint64_t n = header.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  append(out, header);
  for (const auto& name : names) {
    for (auto b : record.tensors.at(name).data) out.push_back(static_cast<std::uint8_t>(b));
  }
  return out;
}

std::vector<bool> label_scan_oracle(const std::vector<std::uint16_t>& values,
                                    double min_fraction) {
  using boost::multiprecision::cpp_rational;
  std::vector<std::uint64_t> counts(kNumClasses, 0);
  std::uint64_t labeled = 0;
  for (auto v : values) {
    if (v == kUnlabeled) continue;
    ++counts.at(v);
    ++labeled;
  }
  std::vector<bool> bits(kNumClasses, false);
  if (labeled == 0) return bits;
  const cpp_rational threshold(min_fraction);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    bits[c] = cpp_rational(counts[c]) / cpp_rational(labeled) > threshold;
  }
  return bits;
}

TensorRecord random_record(std::mt19937_64& rng) {
  static const std::vector<DType> dtypes = {DType::U8,  DType::U16, DType::I16,
                                            DType::I32, DType::F32, DType::F64};
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_abcdefgh";
  TensorRecord r;
  const auto count = rng() % 6;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    const auto len = 1 + rng() % 8;
    for (std::size_t k = 0; k < len; ++k) name += alphabet[rng() % alphabet.size()];
    Tensor t;
    t.dtype = dtypes[rng() % dtypes.size()];
    const auto rank = rng() % 4;
    for (std::size_t d = 0; d < rank; ++d) t.shape.push_back(rng() % 7 == 0 ? 0 : 1 + rng() % 9);
    const auto n = *element_count(t.shape);
    t.data.resize(n * element_size(t.dtype));
    for (auto& b : t.data) b = static_cast<std::byte>(rng());
    if (t.dtype == DType::F32 && n > 0) {
      const float specials[] = {std::numeric_limits<float>::quiet_NaN(), -0.0f,
                                std::numeric_limits<float>::infinity()};
      std::memcpy(t.data.data(), &specials[rng() % 3], 4);
    }
    r.tensors[name] = std::move(t);
  }
  if (rng() % 3 == 0) r.metadata["k" + std::to_string(rng() % 100)] = "v";
  return r;
}

}  // namespace geopatch::testing
