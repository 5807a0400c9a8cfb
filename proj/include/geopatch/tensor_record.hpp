#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "geopatch/error.hpp"

namespace geopatch {

static_assert(std::endian::native == std::endian::little,
              "tensor buffers are stored in host order and must be little-endian");

enum class DType : std::uint8_t { U8, U16, I16, I32, F32, F64 };

[[nodiscard]] std::size_t element_size(DType dtype);
/// Names as used in the serialized header ("U8", "U16", "I16", "I32", "F32", "F64").
[[nodiscard]] std::string_view dtype_name(DType dtype);
[[nodiscard]] std::optional<DType> parse_dtype(std::string_view name);

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return DType::U8;
  else if constexpr (std::is_same_v<T, std::uint16_t>) return DType::U16;
  else if constexpr (std::is_same_v<T, std::int16_t>) return DType::I16;
  else if constexpr (std::is_same_v<T, std::int32_t>) return DType::I32;
  else if constexpr (std::is_same_v<T, float>) return DType::F32;
  else if constexpr (std::is_same_v<T, double>) return DType::F64;
  else static_assert(sizeof(T) == 0, "unsupported tensor element type");
}

using Shape = std::vector<std::uint64_t>;

/// Product of the dimensions; nullopt on overflow.
[[nodiscard]] std::optional<std::uint64_t> element_count(const Shape& shape);

/// A named tensor's dtype, shape and raw little-endian bytes.
struct Tensor {
  DType dtype = DType::U8;
  Shape shape;
  std::vector<std::byte> data;

  template <typename T>
  static Tensor from(std::span<const T> values, Shape shape) {
    Tensor t{dtype_of<T>(), std::move(shape), std::vector<std::byte>(values.size_bytes())};
    if (!values.empty()) std::memcpy(t.data.data(), values.data(), values.size_bytes());
    return t;
  }

  template <typename T>
  [[nodiscard]] std::vector<T> to_vector() const {
    if (dtype != dtype_of<T>()) throw DataError("tensor dtype does not match requested type");
    std::vector<T> out(data.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), data.data(), data.size());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

/// Ordered name -> tensor map plus optional string metadata; the unit of
/// storage. Equality is bytewise, so NaN payloads compare by bit pattern.
struct TensorRecord {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  bool operator==(const TensorRecord&) const = default;
};

enum class FormatErrorKind {
  MalformedHeader,
  OffsetOverlap,
  TruncatedPayload,
  OversizedHeader,
  UnsupportedDtype,
  ShapeMismatch,
};

[[nodiscard]] std::string_view to_string(FormatErrorKind kind);

class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what);
  [[nodiscard]] FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline constexpr std::size_t kDefaultHeaderCap = 1u << 20;

/// Serialized size of `record`. Throws FormatError(ShapeMismatch) if a
/// tensor's byte length disagrees with its dtype and shape.
[[nodiscard]] std::size_t encoded_size(const TensorRecord& record);

/// Serializes a record:
///
///   u64 little-endian N | N bytes of JSON header | payload
///
/// The header maps each tensor name (lexicographic order, after an optional
/// "__metadata__" entry) to {"dtype", "shape", "data_offsets": [begin, end]}
/// with offsets relative to the payload start, and is padded with spaces to
/// a multiple of 8 bytes. Payload buffers follow in header order. Identical
/// records always produce identical bytes.
[[nodiscard]] std::vector<std::byte> encode_record(const TensorRecord& record);

/// Encodes into a caller-provided buffer of exactly encoded_size(record) bytes.
void encode_record_into(const TensorRecord& record, std::span<std::byte> out);

/// Non-owning view of one tensor inside an encoded buffer.
struct TensorView {
  DType dtype = DType::U8;
  Shape shape;
  std::span<const std::byte> data;
};

struct RecordView {
  std::vector<std::pair<std::string, TensorView>> tensors;  // sorted by name
  std::map<std::string, std::string> metadata;

  [[nodiscard]] const TensorView* find(std::string_view name) const;
  [[nodiscard]] TensorRecord materialize() const;
};

/// Parses and validates an encoded record without copying tensor data. The
/// header is checked completely (size cap, JSON shape, dtypes, byte lengths,
/// offsets contiguous from 0 and covering the payload exactly) before any
/// payload byte is referenced.
[[nodiscard]] RecordView decode_record_view(std::span<const std::byte> bytes,
                                            std::size_t header_cap = kDefaultHeaderCap);

[[nodiscard]] TensorRecord decode_record(std::span<const std::byte> bytes,
                                         std::size_t header_cap = kDefaultHeaderCap);

}  // namespace geopatch
