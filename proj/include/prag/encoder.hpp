#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prag/errors.hpp"

namespace prag {

struct DenseVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

/// Exact inner product, accumulated in double. Throws Error(DimMismatch).
double dot(const DenseVector& a, const DenseVector& b);

/// Core-sentence weight in [0, 1]. Construction validates the range.
class Alpha {
 public:
  Alpha() = default;
  explicit Alpha(double value);

  double value() const noexcept { return value_; }

 private:
  double value_ = 1.0;
};

/// Convex combination alpha*core + (1-alpha)*context. A missing context
/// returns the core vector unchanged, as do the alpha endpoints (bitwise).
DenseVector compose_weighted(const DenseVector& core, const DenseVector* context, Alpha alpha);
DenseVector compose_weighted(const DenseVector& core,
                             const std::optional<DenseVector>& context, Alpha alpha);

/// Deterministic token-hash embedding: lowercase, split on runs of
/// non-alphanumeric bytes, FNV-1a 64-bit per token, bucket = hash mod dim,
/// sign from the hash's top bit, accumulate, then L2-normalize.
/// Throws Error(ZeroText) when the accumulated vector is all zero.
DenseVector test_hash_embed(std::string_view text, int dim);

enum class EncoderBackend { TestHash, PrecomputedFile, HttpService };

EncoderBackend parse_backend(std::string_view name);
std::string_view backend_name(EncoderBackend backend);

struct EncoderConfig {
  EncoderBackend backend = EncoderBackend::TestHash;
  int dim = 64;
  std::string endpoint;                              // http-service
  std::vector<std::filesystem::path> vector_files;   // precomputed-file
  int batch_size = 32;
  int max_in_flight = 4;  // concurrent http requests

  /// Throws Error(ConfigError) listing every violation.
  void validate() const;

  /// Identity recorded in index headers and checked at query time,
  /// e.g. "test-hash/64".
  std::string backend_id() const;
};

/// One encode request. `key` addresses the precomputed-file backend;
/// when empty, the text itself is the key. Text backends ignore it.
struct EncodeItem {
  std::string text;
  std::string key;
};

class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);

  /// Order-preserving batch encode; every output has dim == config().dim.
  /// `threads` parallelizes the test-hash backend (0 = hardware threads);
  /// the http backend is governed by max_in_flight instead.
  std::vector<DenseVector> encode_batch(std::span<const std::string> texts,
                                        int threads = 1) const;
  std::vector<DenseVector> encode_items(std::span<const EncodeItem> items,
                                        int threads = 1) const;
  DenseVector encode_one(const std::string& text, const std::string& key = {}) const;

  const EncoderConfig& config() const noexcept { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::unordered_map<std::string, DenseVector> precomputed_;
};

/// Row keys used by the precomputed-file backend.
std::string unit_core_key(std::string_view passage_id, int sent_index);
std::string unit_context_key(std::string_view passage_id, int sent_index);
std::string query_key(std::string_view query_id);

/// Precomputed embedding file: magic "PVEC", u32 version=1, u32 dim,
/// u64 count, then count rows of dim float32, little-endian. Row keys live
/// in a sidecar JSONL ({"key": str} per line, same order).
void write_vector_file(const std::filesystem::path& path, int dim,
                       std::span<const std::pair<std::string, DenseVector>> rows);
std::vector<std::pair<std::string, DenseVector>> read_vector_file(
    const std::filesystem::path& path);
std::filesystem::path vector_file_sidecar(const std::filesystem::path& path);

}  // namespace prag
