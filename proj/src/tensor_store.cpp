#include "geopatch/tensor_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <random>

#include <fmt/format.h>
#include <lmdb.h>
#include <nlohmann/json.hpp>

#include "geopatch/file_util.hpp"

namespace geopatch {

namespace detail {

struct Env {
  MDB_env* env = nullptr;
  MDB_dbi dbi = 0;
  std::filesystem::path path;

  Env() = default;
  Env(const Env&) = delete;
  Env& operator=(const Env&) = delete;
  ~Env() {
    if (env != nullptr) mdb_env_close(env);
  }
};

}  // namespace detail

namespace {

using detail::Env;

[[noreturn]] void throw_mdb(int rc, std::string_view what, const std::filesystem::path& path) {
  const std::string msg = fmt::format("{} ({}): {}", what, path.string(), mdb_strerror(rc));
  if (rc == MDB_MAP_FULL) throw StoreCapacityError(msg);
  throw IoError(msg);
}

MDB_val as_val(std::string_view key) {
  return MDB_val{key.size(), const_cast<char*>(key.data())};
}

void check_key(std::string_view key) {
  if (key.empty() || key.size() > kMaxKeyLength) {
    throw DataError(fmt::format("store keys must be 1..{} bytes, got {}", kMaxKeyLength,
                                key.size()));
  }
}

std::shared_ptr<Env> open_env(const StoreHandle& handle) {
  auto env = std::make_shared<Env>();
  env->path = handle.path;
  if (int rc = mdb_env_create(&env->env); rc != 0) throw_mdb(rc, "mdb_env_create", handle.path);

  const bool readonly = handle.mode == StoreMode::ReadOnly;
  if (!readonly || handle.map_size != 0) {
    if (int rc = mdb_env_set_mapsize(env->env, handle.map_size); rc != 0) {
      throw_mdb(rc, "mdb_env_set_mapsize", handle.path);
    }
  }
  unsigned flags = MDB_NOTLS;
  flags |= readonly ? MDB_RDONLY : MDB_NOSYNC;
  if (readonly && !std::filesystem::is_regular_file(handle.path / "data.mdb")) {
    throw IoError(fmt::format("{} is not a store (no data.mdb)", handle.path.string()));
  }
  if (int rc = mdb_env_open(env->env, handle.path.c_str(), flags, 0644); rc != 0) {
    throw_mdb(rc, "cannot open store", handle.path);
  }

  MDB_txn* txn = nullptr;
  if (int rc = mdb_txn_begin(env->env, nullptr, readonly ? MDB_RDONLY : 0, &txn); rc != 0) {
    throw_mdb(rc, "mdb_txn_begin", handle.path);
  }
  if (int rc = mdb_dbi_open(txn, nullptr, 0, &env->dbi); rc != 0) {
    mdb_txn_abort(txn);
    throw_mdb(rc, "mdb_dbi_open", handle.path);
  }
  if (int rc = mdb_txn_commit(txn); rc != 0) throw_mdb(rc, "mdb_txn_commit", handle.path);
  return env;
}

std::size_t percentile_index(std::size_t n, double p) {
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  return std::clamp<std::size_t>(rank, 1, n) - 1;
}

double micros(std::chrono::steady_clock::duration d) {
  return std::chrono::duration<double, std::micro>(d).count();
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, population - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Snapshot

struct Snapshot::Impl {
  std::shared_ptr<Env> env;
  MDB_txn* txn = nullptr;

  explicit Impl(std::shared_ptr<Env> e) : env(std::move(e)) {
    if (int rc = mdb_txn_begin(env->env, nullptr, MDB_RDONLY, &txn); rc != 0) {
      throw_mdb(rc, "cannot begin read transaction", env->path);
    }
  }
  ~Impl() {
    if (txn != nullptr) mdb_txn_abort(txn);
  }
};

Snapshot::Snapshot(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Snapshot::Snapshot(Snapshot&&) noexcept = default;
Snapshot& Snapshot::operator=(Snapshot&&) noexcept = default;
Snapshot::~Snapshot() = default;

std::optional<std::span<const std::byte>> Snapshot::get(std::string_view key) const {
  if (key.empty() || key.size() > kMaxKeyLength) return std::nullopt;
  MDB_val k = as_val(key);
  MDB_val v{};
  const int rc = mdb_get(impl_->txn, impl_->env->dbi, &k, &v);
  if (rc == MDB_NOTFOUND) return std::nullopt;
  if (rc != 0) throw_mdb(rc, "mdb_get", impl_->env->path);
  return std::span<const std::byte>(static_cast<const std::byte*>(v.mv_data), v.mv_size);
}

RecordView Snapshot::view(std::string_view key) const {
  const auto bytes = get(key);
  if (!bytes) throw KeyNotFoundError(std::string(key));
  return decode_record_view(*bytes);
}

TensorRecord Snapshot::read_record(std::string_view key) const { return view(key).materialize(); }

std::size_t Snapshot::size() const {
  MDB_stat st{};
  if (int rc = mdb_stat(impl_->txn, impl_->env->dbi, &st); rc != 0) {
    throw_mdb(rc, "mdb_stat", impl_->env->path);
  }
  return st.ms_entries;
}

void Snapshot::for_each(
    const std::function<void(std::string_view, std::span<const std::byte>)>& fn) const {
  MDB_cursor* cursor = nullptr;
  if (int rc = mdb_cursor_open(impl_->txn, impl_->env->dbi, &cursor); rc != 0) {
    throw_mdb(rc, "mdb_cursor_open", impl_->env->path);
  }
  std::unique_ptr<MDB_cursor, void (*)(MDB_cursor*)> guard(cursor, mdb_cursor_close);
  MDB_val k{};
  MDB_val v{};
  int rc = mdb_cursor_get(cursor, &k, &v, MDB_FIRST);
  while (rc == 0) {
    fn(std::string_view(static_cast<const char*>(k.mv_data), k.mv_size),
       std::span<const std::byte>(static_cast<const std::byte*>(v.mv_data), v.mv_size));
    rc = mdb_cursor_get(cursor, &k, &v, MDB_NEXT);
  }
  if (rc != MDB_NOTFOUND) throw_mdb(rc, "mdb_cursor_get", impl_->env->path);
}

std::vector<std::string> Snapshot::keys() const {
  std::vector<std::string> out;
  out.reserve(size());
  for_each([&](std::string_view key, std::span<const std::byte>) { out.emplace_back(key); });
  return out;
}

// ---------------------------------------------------------------------------
// StoreReader

StoreReader::StoreReader(const StoreHandle& handle) : mutex_(std::make_unique<std::mutex>()) {
  if (handle.mode != StoreMode::ReadOnly) {
    throw UsageError("StoreReader needs a ReadOnly handle");
  }
  env_ = open_env(handle);
  default_.emplace(snapshot());
}

StoreReader::~StoreReader() = default;
StoreReader::StoreReader(StoreReader&&) noexcept = default;
StoreReader& StoreReader::operator=(StoreReader&&) noexcept = default;

Snapshot StoreReader::snapshot() const {
  return Snapshot(std::make_unique<Snapshot::Impl>(env_));
}

void StoreReader::refresh() {
  std::lock_guard lock(*mutex_);
  default_.reset();
  default_.emplace(snapshot());
}

TensorRecord StoreReader::read_record(std::string_view key) const {
  std::lock_guard lock(*mutex_);
  return default_->read_record(key);
}

std::size_t StoreReader::size() const {
  std::lock_guard lock(*mutex_);
  return default_->size();
}

std::vector<std::string> StoreReader::keys() const {
  std::lock_guard lock(*mutex_);
  return default_->keys();
}

TensorRecord read_record(const StoreReader& reader, std::string_view key) {
  return reader.read_record(key);
}

// ---------------------------------------------------------------------------
// StoreWriter

void to_json(nlohmann::json& j, const WriteReport& report) {
  j = {{"entries", report.entries},
       {"value_bytes", report.value_bytes},
       {"batches", report.batches}};
}

StoreWriter::StoreWriter(const StoreHandle& handle, std::size_t batch_size)
    : batch_size_(std::max<std::size_t>(batch_size, 1)) {
  if (handle.mode != StoreMode::WriteOnce) {
    throw UsageError("StoreWriter needs a WriteOnce handle");
  }
  std::error_code ec;
  std::filesystem::create_directories(handle.path, ec);
  if (ec) {
    throw IoError(fmt::format("cannot create store directory {}: {}", handle.path.string(),
                              ec.message()));
  }
  // The flock is taken before LMDB touches the files so a second writer in
  // the same process never opens the environment twice.
  const auto data_file = handle.path / "data.mdb";
  lock_fd_ = ::open(data_file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) {
    throw IoError(fmt::format("cannot open {}: {}", data_file.string(), std::strerror(errno)));
  }
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw StoreBusyError(fmt::format("store {} is held by another writer", handle.path.string()));
  }
  try {
    env_ = open_env(handle);
    if (snapshot().size() != 0) {
      throw DataError(
          fmt::format("store {} already has entries; stores are write-once", handle.path.string()));
    }
  } catch (...) {
    env_.reset();
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw;
  }
}

StoreWriter::~StoreWriter() {
  if (txn_ != nullptr) mdb_txn_abort(static_cast<MDB_txn*>(txn_));
  txn_ = nullptr;
  env_.reset();
  if (lock_fd_ >= 0) ::close(lock_fd_);
}

void StoreWriter::begin_if_needed() {
  if (failed_) throw DataError("store writer failed earlier; no further writes accepted");
  if (txn_ != nullptr) return;
  MDB_txn* txn = nullptr;
  if (int rc = mdb_txn_begin(env_->env, nullptr, 0, &txn); rc != 0) {
    failed_ = true;
    throw_mdb(rc, "cannot begin write transaction", env_->path);
  }
  txn_ = txn;
}

void StoreWriter::abort_batch() {
  if (txn_ != nullptr) mdb_txn_abort(static_cast<MDB_txn*>(txn_));
  txn_ = nullptr;
  pending_ = 0;
  pending_bytes_ = 0;
  failed_ = true;
}

template <typename Fill>
void StoreWriter::put_impl(std::string_view key, std::size_t size, Fill&& fill) {
  check_key(key);
  begin_if_needed();
  MDB_val k = as_val(key);
  MDB_val v{size, nullptr};
  const int rc =
      mdb_put(static_cast<MDB_txn*>(txn_), env_->dbi, &k, &v, MDB_NOOVERWRITE | MDB_RESERVE);
  if (rc == MDB_KEYEXIST) {
    abort_batch();
    throw DuplicateKeyError(std::string(key));
  }
  if (rc != 0) {
    abort_batch();
    throw_mdb(rc, "mdb_put", env_->path);
  }
  try {
    fill(std::span<std::byte>(static_cast<std::byte*>(v.mv_data), size));
  } catch (...) {
    abort_batch();
    throw;
  }
  ++pending_;
  pending_bytes_ += size;
  if (pending_ >= batch_size_) commit();
}

void StoreWriter::put(std::string_view key, const TensorRecord& record) {
  const std::size_t size = encoded_size(record);
  put_impl(key, size, [&](std::span<std::byte> out) { encode_record_into(record, out); });
}

void StoreWriter::put_encoded(std::string_view key, std::span<const std::byte> value) {
  put_impl(key, value.size(), [&](std::span<std::byte> out) {
    if (!value.empty()) std::memcpy(out.data(), value.data(), value.size());
  });
}

void StoreWriter::commit() {
  if (txn_ == nullptr) return;
  auto* txn = static_cast<MDB_txn*>(txn_);
  txn_ = nullptr;
  if (int rc = mdb_txn_commit(txn); rc != 0) {
    pending_ = 0;
    pending_bytes_ = 0;
    failed_ = true;
    throw_mdb(rc, "mdb_txn_commit", env_->path);
  }
  report_.entries += pending_;
  report_.value_bytes += pending_bytes_;
  ++report_.batches;
  pending_ = 0;
  pending_bytes_ = 0;
}

WriteReport StoreWriter::finish() {
  if (failed_) throw DataError("store writer failed earlier; cannot finish");
  commit();
  if (int rc = mdb_env_sync(env_->env, 1); rc != 0) throw_mdb(rc, "mdb_env_sync", env_->path);
  return report_;
}

Snapshot StoreWriter::snapshot() const {
  return Snapshot(std::make_unique<Snapshot::Impl>(env_));
}

WriteReport write_store(std::span<const StoreEntry> entries, const StoreHandle& handle,
                        std::size_t batch_size) {
  StoreWriter writer(handle, batch_size);
  for (const auto& [key, record] : entries) writer.put(key, record);
  return writer.finish();
}

// ---------------------------------------------------------------------------
// Benchmark

void to_json(nlohmann::json& j, const BenchmarkReport& report) {
  j = {{"lookups", report.lookups},
       {"store_lps", report.store_lps},
       {"baseline_lps", report.baseline_lps},
       {"speedup", report.speedup},
       {"p50_us", report.p50_us},
       {"p99_us", report.p99_us},
       {"baseline_p50_us", report.baseline_p50_us},
       {"baseline_p99_us", report.baseline_p99_us}};
}

BaselineLoader safetensors_file_baseline(std::filesystem::path dir) {
  return [dir = std::move(dir)](const std::string& key) {
    const auto bytes = read_file_bytes(dir / (key + ".safetensors"));
    return decode_record(bytes);
  };
}

void write_safetensors_file(const std::filesystem::path& path, const TensorRecord& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, encode_record(record));
}

BenchmarkReport bench_random_read(const StoreReader& reader, const BaselineLoader& baseline,
                                  std::size_t lookups, std::uint64_t seed) {
  BenchmarkReport report;
  report.lookups = lookups;
  if (lookups == 0) return report;

  const auto snapshot = reader.snapshot();
  const auto keys = snapshot.keys();
  if (keys.empty()) throw DataError("cannot benchmark an empty store");
  const auto picks = sample_indices(keys.size(), lookups, seed);

  for (auto i : picks) {
    if (snapshot.read_record(keys[i]) != baseline(keys[i])) throw ContentMismatchError(keys[i]);
  }

  using clock = std::chrono::steady_clock;
  std::size_t sink = 0;
  std::vector<double> store_us;
  std::vector<double> base_us;
  store_us.reserve(lookups);
  base_us.reserve(lookups);

  const auto store_start = clock::now();
  for (auto i : picks) {
    const auto t0 = clock::now();
    const auto record = snapshot.read_record(keys[i]);
    sink += record.tensors.size();
    store_us.push_back(micros(clock::now() - t0));
  }
  const double store_total = micros(clock::now() - store_start);

  const auto base_start = clock::now();
  for (auto i : picks) {
    const auto t0 = clock::now();
    const auto record = baseline(keys[i]);
    sink += record.tensors.size();
    base_us.push_back(micros(clock::now() - t0));
  }
  const double base_total = micros(clock::now() - base_start);
  if (sink == static_cast<std::size_t>(-1)) report.lookups = 0;  // keeps the reads observable

  std::sort(store_us.begin(), store_us.end());
  std::sort(base_us.begin(), base_us.end());
  const auto n = static_cast<double>(lookups);
  report.store_lps = store_total > 0 ? n / (store_total * 1e-6) : 0.0;
  report.baseline_lps = base_total > 0 ? n / (base_total * 1e-6) : 0.0;
  report.speedup = report.baseline_lps > 0 ? report.store_lps / report.baseline_lps : 0.0;
  report.p50_us = store_us[percentile_index(lookups, 0.50)];
  report.p99_us = store_us[percentile_index(lookups, 0.99)];
  report.baseline_p50_us = base_us[percentile_index(lookups, 0.50)];
  report.baseline_p99_us = base_us[percentile_index(lookups, 0.99)];
  return report;
}

double mean_lookup_latency_us(const StoreReader& reader, std::size_t lookups, std::uint64_t seed) {
  if (lookups == 0) return 0.0;
  const auto snapshot = reader.snapshot();
  const auto keys = snapshot.keys();
  if (keys.empty()) throw DataError("cannot benchmark an empty store");
  const auto picks = sample_indices(keys.size(), lookups, seed);
  std::size_t sink = 0;
  const auto start = std::chrono::steady_clock::now();
  for (auto i : picks) sink += snapshot.read_record(keys[i]).tensors.size();
  const double total = micros(std::chrono::steady_clock::now() - start);
  return sink == static_cast<std::size_t>(-1) ? 0.0 : total / static_cast<double>(lookups);
}

}  // namespace geopatch
