#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prag/corpus.hpp"
#include "prag/encoder.hpp"
#include "prag/index.hpp"

namespace prag {

struct Query {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
};

/// Query file: JSONL {"id": str, "question": str, "answers": [str, ...]}.
std::vector<Query> load_queries(const std::filesystem::path& path);

struct RetrievedItem {
  std::string text;
  std::string passage_id;
  std::optional<int> sent_index;
  double score = 0.0;
};

struct RetrievalResult {
  std::string query_id;
  IndexMode mode = IndexMode::Sentence;
  std::vector<RetrievedItem> items;  // ranked per the index contract
  std::size_t token_total = 0;       // sum of item token counts
};

/// Resolves index row metadata back to display text. Sentences are
/// segmented lazily per passage and cached.
class TextResolver {
 public:
  explicit TextResolver(const std::vector<Passage>& passages);

  const std::string& passage_text(const std::string& passage_id) const;
  const std::string& sentence(const std::string& passage_id, int sent_index) const;

 private:
  struct Entry {
    const Passage* passage;
    mutable std::vector<std::string> sentences;  // lazy
  };
  std::unordered_map<std::string, Entry> by_id_;
};

/// Unit texts with their encoded core/context vectors. Lets callers rebuild
/// sentence indexes across alpha values without re-encoding anything.
struct EncodedUnits {
  std::vector<SentenceUnit> units;
  std::vector<DenseVector> core;
  std::vector<std::optional<DenseVector>> context;
  std::string backend_id;
};

EncodedUnits encode_units(const std::vector<Passage>& corpus, const Encoder& encoder,
                          int threads = 1);

/// One index row per sentence unit, in passage order then sentence order.
/// Single-sentence passages are indexed with their raw core vector.
VectorIndex build_sentence_index(const std::vector<Passage>& corpus, const Encoder& encoder,
                                 Alpha alpha, int threads = 1);
VectorIndex build_sentence_index(const EncodedUnits& enc, Alpha alpha);

/// Passage-level baseline: one row per passage, whole text encoded.
VectorIndex build_passage_index(const std::vector<Passage>& corpus, const Encoder& encoder,
                                int threads = 1);

/// End-to-end single query. `query_id` doubles as the precomputed-backend
/// lookup key. Throws Error(IncompatibleIndex) when the encoder's
/// backend_id differs from the index header.
RetrievalResult retrieve(const VectorIndex& index, const TextResolver& texts,
                         const Encoder& encoder, const std::string& query_id,
                         const std::string& query_text, int k, int threads = 1);

/// Greedy ranked prefix whose cumulative whitespace word count stays within
/// budget_words; always returns at least one item (the first hit is kept
/// whole even when it alone exceeds the budget).
RetrievalResult retrieve_word_budget(const VectorIndex& index, const TextResolver& texts,
                                     const Encoder& encoder, const std::string& query_id,
                                     const std::string& query_text, int budget_words,
                                     int threads = 1);

/// Either k or budget_words, never both; recorded in result dumps.
struct RetrievalSpec {
  std::optional<int> k;
  std::optional<int> budget_words;
};

/// Result dump: JSONL per query with mode, k/budget, items, token_total.
void write_results(const std::filesystem::path& path, std::span<const RetrievalResult> results,
                   const RetrievalSpec& spec);
std::vector<RetrievalResult> read_results(const std::filesystem::path& path);

}  // namespace prag
