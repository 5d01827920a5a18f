#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "prag/corpus.hpp"
#include "prag/pipeline.hpp"

namespace prag::testing {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_corpus_jsonl(const std::filesystem::path& path,
                        const std::vector<Passage>& passages);
void write_queries_jsonl(const std::filesystem::path& path, const std::vector<Query>& queries);

std::vector<char> slurp(const std::filesystem::path& path);
void spew(const std::filesystem::path& path, const std::vector<char>& bytes);

/// Deterministic corpus where every query's answer lives in exactly one
/// sentence buried mid-passage among seven distractors. Two query families:
/// the "topic" family has distinctive cores but passages that decoy catalogs
/// out-score at passage granularity; the "beacon" family has ambiguous cores
/// that short impostor sentences out-score at alpha = 1, while the passage
/// siblings carry the disambiguating beacon word into the context vector.
struct BuriedCoreData {
  std::vector<Passage> passages;
  std::vector<Query> queries;
};
BuriedCoreData buried_core_corpus();

/// Corpus tuned so whitespace token counts average ~80.86 per passage and
/// ~23.85 per sentence unit (3-or-4 sentence passages, 23-or-24 token
/// sentences, mixed by error diffusion).
std::vector<Passage> stats_corpus(std::size_t count);
std::vector<Query> stats_queries(std::size_t count);

/// Random passage whose constructed sentence list is segmentation ground
/// truth: lowercase safe-vocab words, capitalized sentence starts, varied
/// terminal punctuation, messy whitespace between sentences.
struct GeneratedPassage {
  Passage passage;
  std::vector<std::string> sentences;
};
GeneratedPassage random_passage(std::mt19937& rng, const std::string& id);

}  // namespace prag::testing
