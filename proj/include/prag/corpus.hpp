#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prag {

/// One retrievable document unit of the raw corpus.
struct Passage {
  std::string id;
  std::string title;
  std::string text;
};

/// A core sentence plus its passage-mate context. For a passage of n
/// sentences there are exactly n units; context_text is absent iff n == 1,
/// otherwise it is the in-order single-space join of the sibling sentences.
struct SentenceUnit {
  std::string passage_id;
  int sent_index = 0;  // 0-based position within the passage
  std::string core_text;
  std::optional<std::string> context_text;
};

struct CorpusStats {
  std::size_t passage_count = 0;
  std::size_t unit_count = 0;
  double mean_tokens_per_passage = 0.0;
  double mean_tokens_per_unit = 0.0;
};

/// Pluggable tokenizer hook; the default counts whitespace-separated tokens.
using TokenCounter = std::function<std::size_t(std::string_view)>;

std::size_t count_tokens(std::string_view text);

/// Rule-based sentence splitter. A boundary is terminal punctuation
/// {. ! ?}, optionally followed by closing quotes/brackets, then whitespace,
/// then an uppercase ASCII letter or digit. A fixed abbreviation list
/// (Dr., Mr., Mrs., Ms., Prof., St., vs., etc., e.g., i.e., Fig., No., U.S.)
/// suppresses the split. Returned sentences are trimmed and nonempty;
/// joining them with single spaces reproduces the whitespace-collapsed input.
/// Throws Error(EmptyText) on empty or whitespace-only input.
std::vector<std::string> segment(std::string_view text);

/// Splits a passage into its sentence units.
std::vector<SentenceUnit> decompose(const Passage& passage);

struct Corpus {
  std::vector<Passage> passages;
  CorpusStats stats;
};

/// Reads a corpus file. The only supported format id is "jsonl":
/// one {"id", "title", "text"} object per line. A malformed or empty-text
/// record raises Error(RecordError) with the line number; a repeated id
/// raises Error(DuplicateId). Stats are computed over the full pass.
Corpus load_corpus(const std::filesystem::path& path,
                   const std::string& format = "jsonl",
                   const TokenCounter& tokens = count_tokens);

CorpusStats compute_stats(const std::vector<Passage>& passages,
                          const TokenCounter& tokens = count_tokens);

/// Unit dump: JSONL {"passage_id", "sent_index", "core", "context"|null}.
void write_units(const std::filesystem::path& path,
                 const std::vector<Passage>& passages);

}  // namespace prag
