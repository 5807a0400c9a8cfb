#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "geopatch/error.hpp"
#include "geopatch/tensor_record.hpp"

namespace geopatch {

enum class StoreMode { ReadOnly, WriteOnce };

inline constexpr std::size_t kDefaultMapSize = std::size_t{64} << 30;
/// LMDB's compile-time key limit.
inline constexpr std::size_t kMaxKeyLength = 511;

/// Location and mode of an LMDB environment directory (data.mdb + lock.mdb).
struct StoreHandle {
  std::filesystem::path path;
  StoreMode mode = StoreMode::ReadOnly;
  /// Upper bound of the memory map. Ignored (0 = keep) for ReadOnly.
  std::size_t map_size = kDefaultMapSize;
};

class KeyNotFoundError : public DataError {
 public:
  explicit KeyNotFoundError(const std::string& key) : DataError("key not found: " + key) {}
};

class DuplicateKeyError : public DataError {
 public:
  explicit DuplicateKeyError(const std::string& key) : DataError("duplicate key: " + key) {}
};

class StoreCapacityError : public IoError {
 public:
  explicit StoreCapacityError(const std::string& what) : IoError(what) {}
};

class StoreBusyError : public IoError {
 public:
  explicit StoreBusyError(const std::string& what) : IoError(what) {}
};

class ContentMismatchError : public DataError {
 public:
  explicit ContentMismatchError(const std::string& key)
      : DataError("store and baseline differ for key " + key) {}
};

namespace detail {
struct Env;
}

/// A read transaction: a consistent, immutable view of the store. Byte spans
/// it hands out point into the memory map and stay valid while the snapshot
/// lives. One snapshot must not be used by two threads at once; take one per
/// thread instead.
class Snapshot {
 public:
  Snapshot(Snapshot&&) noexcept;
  Snapshot& operator=(Snapshot&&) noexcept;
  Snapshot(const Snapshot&) = delete;
  Snapshot& operator=(const Snapshot&) = delete;
  ~Snapshot();

  /// Raw value bytes, or nullopt for an absent key.
  [[nodiscard]] std::optional<std::span<const std::byte>> get(std::string_view key) const;
  /// Throws KeyNotFoundError.
  [[nodiscard]] RecordView view(std::string_view key) const;
  /// Decoded copy; throws KeyNotFoundError.
  [[nodiscard]] TensorRecord read_record(std::string_view key) const;

  [[nodiscard]] std::size_t size() const;
  /// Keys in lexicographic (byte) order.
  [[nodiscard]] std::vector<std::string> keys() const;
  void for_each(const std::function<void(std::string_view, std::span<const std::byte>)>& fn) const;

 private:
  friend class StoreReader;
  friend class StoreWriter;
  struct Impl;
  explicit Snapshot(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Read-only access. Opening pins a default snapshot that read_record and
/// friends use; call refresh() to move it to the latest committed state.
class StoreReader {
 public:
  /// Throws IoError if `handle.path` is not an LMDB store.
  explicit StoreReader(const StoreHandle& handle);
  explicit StoreReader(const std::filesystem::path& path)
      : StoreReader(StoreHandle{path, StoreMode::ReadOnly, 0}) {}
  ~StoreReader();
  StoreReader(StoreReader&&) noexcept;
  StoreReader& operator=(StoreReader&&) noexcept;

  /// Independent snapshot, e.g. one per worker thread.
  [[nodiscard]] Snapshot snapshot() const;
  void refresh();

  [[nodiscard]] TensorRecord read_record(std::string_view key) const;
  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::vector<std::string> keys() const;

 private:
  std::shared_ptr<detail::Env> env_;
  std::unique_ptr<std::mutex> mutex_;
  std::optional<Snapshot> default_;
};

struct WriteReport {
  std::size_t entries = 0;
  std::size_t value_bytes = 0;
  std::size_t batches = 0;
};

void to_json(nlohmann::json& j, const WriteReport& report);

/// Exclusive, append-only builder. Entries are buffered in a write
/// transaction that commits every `batch_size` puts; a failing put aborts
/// the open batch so no partial batch ever becomes visible.
class StoreWriter {
 public:
  /// Requires mode WriteOnce. Creates the directory if needed. Throws
  /// StoreBusyError if another writer holds the store and DataError if the
  /// store already has entries.
  explicit StoreWriter(const StoreHandle& handle, std::size_t batch_size = 1024);
  ~StoreWriter();
  StoreWriter(const StoreWriter&) = delete;
  StoreWriter& operator=(const StoreWriter&) = delete;

  /// Throws DuplicateKeyError (nothing is overwritten) or StoreCapacityError.
  /// After a throw the writer is failed and rejects further puts.
  void put(std::string_view key, const TensorRecord& record);
  void put_encoded(std::string_view key, std::span<const std::byte> value);

  /// Commits the open batch.
  void commit();
  /// Commits, flushes to disk and returns totals.
  WriteReport finish();

  /// Snapshot of what has been committed so far.
  [[nodiscard]] Snapshot snapshot() const;
  [[nodiscard]] const WriteReport& report() const { return report_; }

 private:
  template <typename Fill>
  void put_impl(std::string_view key, std::size_t size, Fill&& fill);
  void begin_if_needed();
  void abort_batch();

  std::shared_ptr<detail::Env> env_;
  int lock_fd_ = -1;
  std::size_t batch_size_;
  void* txn_ = nullptr;  // MDB_txn*
  std::size_t pending_ = 0;
  std::size_t pending_bytes_ = 0;
  bool failed_ = false;
  WriteReport report_;
};

using StoreEntry = std::pair<std::string, TensorRecord>;

/// Writes every entry into a fresh store.
WriteReport write_store(std::span<const StoreEntry> entries, const StoreHandle& handle,
                        std::size_t batch_size = 1024);

/// Decoded record for `key`; throws KeyNotFoundError.
[[nodiscard]] TensorRecord read_record(const StoreReader& reader, std::string_view key);

struct BenchmarkReport {
  std::size_t lookups = 0;
  double store_lps = 0.0;     // lookups per second
  double baseline_lps = 0.0;
  double speedup = 0.0;       // store_lps / baseline_lps
  double p50_us = 0.0;        // store lookup latency percentiles
  double p99_us = 0.0;
  double baseline_p50_us = 0.0;
  double baseline_p99_us = 0.0;
};

void to_json(nlohmann::json& j, const BenchmarkReport& report);

/// Loads the per-patch baseline representation of one key.
using BaselineLoader = std::function<TensorRecord(const std::string& key)>;

/// Baseline of one encoded file per key: "<dir>/<key>.safetensors".
[[nodiscard]] BaselineLoader safetensors_file_baseline(std::filesystem::path dir);

/// Writes the baseline layout read by safetensors_file_baseline.
void write_safetensors_file(const std::filesystem::path& path, const TensorRecord& record);

/// Times `lookups` uniformly sampled random reads (fixed seed) against the
/// store and against the baseline, after checking that both return the same
/// content for every sampled key (ContentMismatchError otherwise).
[[nodiscard]] BenchmarkReport bench_random_read(const StoreReader& reader,
                                                const BaselineLoader& baseline,
                                                std::size_t lookups, std::uint64_t seed = 0);

/// Mean latency in microseconds of `lookups` seeded random decoded reads.
[[nodiscard]] double mean_lookup_latency_us(const StoreReader& reader, std::size_t lookups,
                                            std::uint64_t seed = 0);

}  // namespace geopatch
