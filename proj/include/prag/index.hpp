#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prag/encoder.hpp"

namespace prag {

enum class IndexMode : std::uint8_t { Sentence = 0, Passage = 1 };

std::string_view mode_name(IndexMode mode);

struct RowMeta {
  std::string passage_id;
  std::optional<int> sent_index;  // null for passage rows
};

struct Hit {
  std::size_t row = 0;
  double score = 0.0;
  int rank = 0;  // 1-based
};

/// Immutable store of composed float32 vectors with row-aligned metadata.
/// Answers exact top-k inner-product queries by blocked brute-force scan:
/// float32 accumulation per row, comparisons in float64, ties broken by
/// ascending row. Safe for unlimited concurrent searches once built.
class VectorIndex {
 public:
  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return meta_.size(); }
  IndexMode mode() const noexcept { return mode_; }
  double alpha() const noexcept { return alpha_; }
  const std::string& backend_id() const noexcept { return backend_id_; }
  const std::string& built_at() const noexcept { return built_at_; }
  const RowMeta& meta(std::size_t row) const { return meta_[row]; }
  std::span<const float> row_values(std::size_t row) const;

  /// Exact top-min(k, rows) hits, scores non-increasing, ties by ascending
  /// row. Identical results for every thread count (0 = hardware threads).
  /// Throws Error(BadK) for k < 1 and Error(DimMismatch) on dim mismatch.
  std::vector<Hit> search(const DenseVector& query, int k, int threads = 1) const;

  /// Writes vectors.bin, meta.jsonl, and header.json into dir.
  void save(const std::filesystem::path& dir) const;
  static VectorIndex load(const std::filesystem::path& dir);

 private:
  friend class IndexBuilder;
  VectorIndex() = default;

  std::size_t dim_ = 0;
  IndexMode mode_ = IndexMode::Sentence;
  double alpha_ = 1.0;
  std::string backend_id_;
  std::string built_at_;
  std::vector<float> data_;  // rows x dim, row-major
  std::vector<RowMeta> meta_;
};

/// Single-writer streaming builder. Rows keep input order.
class IndexBuilder {
 public:
  IndexBuilder(int dim, IndexMode mode, Alpha alpha, std::string backend_id);

  /// Throws Error(DimMismatch) when the vector's dim drifts from the first.
  void add(RowMeta meta, const DenseVector& vec);

  /// Throws Error(EmptyIndex) when no rows were added.
  VectorIndex finish();

 private:
  VectorIndex index_;
  bool finished_ = false;
};

}  // namespace prag
