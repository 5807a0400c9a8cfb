#include "geopatch/tensor_record.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace geopatch {

namespace {

constexpr std::string_view kMetadataKey = "__metadata__";

std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

std::uint64_t read_u64_le(std::span<const std::byte> bytes) {
  std::uint64_t v = 0;
  std::memcpy(&v, bytes.data(), sizeof(v));
  return v;
}

void write_u64_le(std::span<std::byte> out, std::uint64_t v) {
  std::memcpy(out.data(), &v, sizeof(v));
}

std::uint64_t checked_nbytes(const std::string& name, const Tensor& tensor) {
  const auto count = element_count(tensor.shape);
  if (!count || *count > std::numeric_limits<std::uint64_t>::max() / element_size(tensor.dtype)) {
    throw FormatError(FormatErrorKind::ShapeMismatch,
                      fmt::format("tensor '{}': shape overflows", name));
  }
  const std::uint64_t nbytes = *count * element_size(tensor.dtype);
  if (nbytes != tensor.data.size()) {
    throw FormatError(FormatErrorKind::ShapeMismatch,
                      fmt::format("tensor '{}': {} bytes for dtype {} and {} elements", name,
                                  tensor.data.size(), dtype_name(tensor.dtype), *count));
  }
  return nbytes;
}

// Header JSON without padding. Keys inside each entry follow the order used
// by the reference writer: dtype, shape, data_offsets.
std::string build_header(const TensorRecord& record) {
  std::string header = "{";
  bool first = true;
  if (!record.metadata.empty()) {
    header += json_string(kMetadataKey);
    header += ":{";
    bool first_meta = true;
    for (const auto& [key, value] : record.metadata) {
      if (!first_meta) header += ',';
      first_meta = false;
      header += json_string(key);
      header += ':';
      header += json_string(value);
    }
    header += '}';
    first = false;
  }
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : record.tensors) {
    if (name == kMetadataKey) {
      throw FormatError(FormatErrorKind::MalformedHeader,
                        "tensor name '__metadata__' is reserved");
    }
    const std::uint64_t nbytes = checked_nbytes(name, tensor);
    if (!first) header += ',';
    first = false;
    header += json_string(name);
    header += ":{\"dtype\":";
    header += json_string(dtype_name(tensor.dtype));
    header += ",\"shape\":[";
    for (std::size_t i = 0; i < tensor.shape.size(); ++i) {
      if (i > 0) header += ',';
      header += std::to_string(tensor.shape[i]);
    }
    header += fmt::format("],\"data_offsets\":[{},{}]}}", offset, offset + nbytes);
    offset += nbytes;
  }
  header += '}';
  // Pad so the payload starts 8-byte aligned.
  header.append((8 - header.size() % 8) % 8, ' ');
  return header;
}

std::uint64_t as_u64(const nlohmann::json& v, std::string_view what, const std::string& name) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw FormatError(FormatErrorKind::MalformedHeader,
                      fmt::format("tensor '{}': {} must be a non-negative integer", name, what));
  }
  return v.get<std::uint64_t>();
}

struct Entry {
  std::string name;
  TensorView view;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

}  // namespace

std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::U8:
      return 1;
    case DType::U16:
    case DType::I16:
      return 2;
    case DType::I32:
    case DType::F32:
      return 4;
    case DType::F64:
      return 8;
  }
  throw FormatError(FormatErrorKind::UnsupportedDtype, "unknown dtype");
}

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::U8:
      return "U8";
    case DType::U16:
      return "U16";
    case DType::I16:
      return "I16";
    case DType::I32:
      return "I32";
    case DType::F32:
      return "F32";
    case DType::F64:
      return "F64";
  }
  throw FormatError(FormatErrorKind::UnsupportedDtype, "unknown dtype");
}

std::optional<DType> parse_dtype(std::string_view name) {
  for (auto d : {DType::U8, DType::U16, DType::I16, DType::I32, DType::F32, DType::F64}) {
    if (dtype_name(d) == name) return d;
  }
  return std::nullopt;
}

std::optional<std::uint64_t> element_count(const Shape& shape) {
  std::uint64_t n = 1;
  for (auto dim : shape) {
    if (dim != 0 && n > std::numeric_limits<std::uint64_t>::max() / dim) return std::nullopt;
    n *= dim;
  }
  return n;
}

std::string_view to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::MalformedHeader:
      return "malformed header";
    case FormatErrorKind::OffsetOverlap:
      return "offset overlap";
    case FormatErrorKind::TruncatedPayload:
      return "truncated payload";
    case FormatErrorKind::OversizedHeader:
      return "oversized header";
    case FormatErrorKind::UnsupportedDtype:
      return "unsupported dtype";
    case FormatErrorKind::ShapeMismatch:
      return "shape mismatch";
  }
  return "format error";
}

FormatError::FormatError(FormatErrorKind kind, const std::string& what)
    : DataError(fmt::format("{}: {}", to_string(kind), what)), kind_(kind) {}

std::size_t encoded_size(const TensorRecord& record) {
  std::size_t payload = 0;
  for (const auto& [name, tensor] : record.tensors) payload += checked_nbytes(name, tensor);
  return 8 + build_header(record).size() + payload;
}

void encode_record_into(const TensorRecord& record, std::span<std::byte> out) {
  const std::string header = build_header(record);
  std::size_t payload = 0;
  for (const auto& [name, tensor] : record.tensors) payload += tensor.data.size();
  if (out.size() != 8 + header.size() + payload) {
    throw DataError(fmt::format("encode buffer holds {} bytes, record needs {}", out.size(),
                                8 + header.size() + payload));
  }
  write_u64_le(out, header.size());
  std::memcpy(out.data() + 8, header.data(), header.size());
  std::byte* cursor = out.data() + 8 + header.size();
  for (const auto& [name, tensor] : record.tensors) {
    if (!tensor.data.empty()) std::memcpy(cursor, tensor.data.data(), tensor.data.size());
    cursor += tensor.data.size();
  }
}

std::vector<std::byte> encode_record(const TensorRecord& record) {
  std::vector<std::byte> out(encoded_size(record));
  encode_record_into(record, out);
  return out;
}

const TensorView* RecordView::find(std::string_view name) const {
  const auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                                   [](const auto& entry, std::string_view n) {
                                     return entry.first < n;
                                   });
  if (it == tensors.end() || it->first != name) return nullptr;
  return &it->second;
}

TensorRecord RecordView::materialize() const {
  TensorRecord record;
  record.metadata = metadata;
  for (const auto& [name, view] : tensors) {
    record.tensors.emplace(name, Tensor{view.dtype, view.shape,
                                        std::vector<std::byte>(view.data.begin(), view.data.end())});
  }
  return record;
}

RecordView decode_record_view(std::span<const std::byte> bytes, std::size_t header_cap) {
  if (bytes.size() < 8) {
    throw FormatError(FormatErrorKind::TruncatedPayload,
                      fmt::format("{} bytes cannot hold the header length", bytes.size()));
  }
  const std::uint64_t header_len = read_u64_le(bytes);
  if (header_len > header_cap) {
    throw FormatError(FormatErrorKind::OversizedHeader,
                      fmt::format("header of {} bytes exceeds the {} byte cap", header_len,
                                  header_cap));
  }
  if (header_len > bytes.size() - 8) {
    throw FormatError(FormatErrorKind::TruncatedPayload,
                      fmt::format("header of {} bytes but only {} follow", header_len,
                                  bytes.size() - 8));
  }
  const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + 8);
  const std::string_view header_text(header_begin, header_len);
  if (header_text.empty() || header_text.front() != '{') {
    throw FormatError(FormatErrorKind::MalformedHeader, "header is not a JSON object");
  }

  bool duplicate = false;
  std::set<std::string> seen;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(
        header_text.begin(), header_text.end(),
        [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
          if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
            if (!seen.insert(parsed.get<std::string>()).second) duplicate = true;
          }
          return true;
        });
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::MalformedHeader, e.what());
  }
  if (duplicate) throw FormatError(FormatErrorKind::MalformedHeader, "duplicate tensor name");
  if (!header.is_object()) {
    throw FormatError(FormatErrorKind::MalformedHeader, "header is not a JSON object");
  }

  const auto payload = bytes.subspan(8 + header_len);
  RecordView view;
  std::vector<Entry> entries;
  for (const auto& [name, info] : header.items()) {
    if (name == kMetadataKey) {
      if (!info.is_object()) {
        throw FormatError(FormatErrorKind::MalformedHeader, "__metadata__ must be an object");
      }
      for (const auto& [key, value] : info.items()) {
        if (!value.is_string()) {
          throw FormatError(FormatErrorKind::MalformedHeader,
                            fmt::format("metadata '{}' must be a string", key));
        }
        view.metadata.emplace(key, value.get<std::string>());
      }
      continue;
    }
    if (!info.is_object() || info.size() != 3 || !info.contains("dtype") ||
        !info.contains("shape") || !info.contains("data_offsets")) {
      throw FormatError(FormatErrorKind::MalformedHeader,
                        fmt::format("tensor '{}' needs exactly dtype, shape, data_offsets", name));
    }
    const auto& dtype_json = info.at("dtype");
    if (!dtype_json.is_string()) {
      throw FormatError(FormatErrorKind::MalformedHeader,
                        fmt::format("tensor '{}': dtype must be a string", name));
    }
    const auto dtype = parse_dtype(dtype_json.get<std::string>());
    if (!dtype) {
      throw FormatError(FormatErrorKind::UnsupportedDtype,
                        fmt::format("tensor '{}': dtype {}", name, dtype_json.dump()));
    }
    const auto& shape_json = info.at("shape");
    const auto& offsets_json = info.at("data_offsets");
    if (!shape_json.is_array() || !offsets_json.is_array() || offsets_json.size() != 2) {
      throw FormatError(FormatErrorKind::MalformedHeader,
                        fmt::format("tensor '{}': bad shape or data_offsets", name));
    }
    Entry entry;
    entry.name = name;
    entry.view.dtype = *dtype;
    for (const auto& dim : shape_json) entry.view.shape.push_back(as_u64(dim, "shape", name));
    entry.begin = as_u64(offsets_json[0], "data_offsets", name);
    entry.end = as_u64(offsets_json[1], "data_offsets", name);
    if (entry.end < entry.begin) {
      throw FormatError(FormatErrorKind::MalformedHeader,
                        fmt::format("tensor '{}': data_offsets end before begin", name));
    }
    const auto count = element_count(entry.view.shape);
    if (!count || *count > std::numeric_limits<std::uint64_t>::max() / element_size(*dtype) ||
        *count * element_size(*dtype) != entry.end - entry.begin) {
      throw FormatError(FormatErrorKind::ShapeMismatch,
                        fmt::format("tensor '{}': {} bytes do not match dtype and shape", name,
                                    entry.end - entry.begin));
    }
    entries.push_back(std::move(entry));
  }

  // Offsets must tile [0, payload) without gaps or overlap.
  std::vector<const Entry*> by_offset;
  for (const auto& e : entries) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(), [](const Entry* a, const Entry* b) {
    return std::pair(a->begin, a->end) < std::pair(b->begin, b->end);
  });
  std::uint64_t cursor = 0;
  for (const Entry* e : by_offset) {
    if (e->begin < cursor) {
      throw FormatError(FormatErrorKind::OffsetOverlap,
                        fmt::format("tensor '{}' starts at {} inside the previous tensor", e->name,
                                    e->begin));
    }
    if (e->begin > cursor) {
      throw FormatError(FormatErrorKind::MalformedHeader,
                        fmt::format("gap before tensor '{}' at offset {}", e->name, cursor));
    }
    cursor = e->end;
  }
  if (cursor > payload.size()) {
    throw FormatError(FormatErrorKind::TruncatedPayload,
                      fmt::format("header declares {} payload bytes, {} present", cursor,
                                  payload.size()));
  }
  if (cursor < payload.size()) {
    throw FormatError(FormatErrorKind::MalformedHeader,
                      fmt::format("{} trailing payload bytes", payload.size() - cursor));
  }

  // Entries came out of a sorted object, so names are already ordered.
  view.tensors.reserve(entries.size());
  for (auto& e : entries) {
    e.view.data = payload.subspan(e.begin, e.end - e.begin);
    view.tensors.emplace_back(std::move(e.name), std::move(e.view));
  }
  return view;
}

TensorRecord decode_record(std::span<const std::byte> bytes, std::size_t header_cap) {
  return decode_record_view(bytes, header_cap).materialize();
}

}  // namespace geopatch
