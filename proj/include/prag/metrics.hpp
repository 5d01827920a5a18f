#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prag/encoder.hpp"
#include "prag/pipeline.hpp"

namespace prag {

using AnswerMap = std::unordered_map<std::string, std::vector<std::string>>;

AnswerMap answers_by_query(std::span<const Query> queries);

/// Match normalization: lowercase, collapse whitespace, strip punctuation
/// at token edges.
std::string normalize_for_match(std::string_view text);

/// True iff any normalized answer is a substring of the normalized text.
bool contains_answer(std::string_view text, std::span<const std::string> answers);

/// Fraction of queries whose first min(k, |items|) items contain a gold
/// answer. Throws Error(MissingGold) for an unknown query id.
double recall_at_k(std::span<const RetrievalResult> results, const AnswerMap& answers, int k);

/// 100 * (rank of first answer-bearing item) / (items returned);
/// -1 when no item contains an answer.
double rank_percentile(const RetrievalResult& result, std::span<const std::string> answers);

/// 1 iff the generation contains a gold answer and is at most 15
/// whitespace words long.
int short_answer_accuracy(std::string_view generated, std::span<const std::string> answers);

/// Token-level LCS F1; 0 when either side has no tokens.
double rouge_l(std::string_view candidate, std::string_view reference);

struct QueryEval {
  std::string query_id;
  std::optional<int> first_hit_rank;  // 1-based
  double rank_percentile = -1.0;
  std::size_t token_total = 0;
};

/// Rank-percentile histogram: bucket 0 counts misses (-1), buckets 1..20
/// cover (0,5], (5,10], ..., (95,100].
struct PercentileHistogram {
  static constexpr int kBinWidth = 5;
  std::size_t miss = 0;
  std::array<std::size_t, 20> counts{};
};

struct EvalReport {
  std::vector<QueryEval> per_query;
  std::vector<std::pair<int, double>> recall_at_k;  // ascending k
  double mean_recall = 0.0;  // recall at the largest evaluated k
  std::optional<double> accuracy;  // set when generations are scored
  std::optional<double> rouge;     // set when generations are scored
  double mean_tokens = 0.0;
  PercentileHistogram histogram;
};

EvalReport evaluate(std::span<const RetrievalResult> results, const AnswerMap& answers,
                    std::vector<int> ks);

struct Generation {
  std::string query_id;
  std::size_t prompt_tokens = 0;
  std::string output;
};

/// Generation dump: JSONL {"query_id", "prompt_tokens", "output"}.
std::vector<Generation> read_generations(const std::filesystem::path& path);
void write_generations(const std::filesystem::path& path, std::span<const Generation> gens);

/// Folds short-answer accuracy and best-reference ROUGE-L into the report.
void score_generations(EvalReport& report, std::span<const Generation> generations,
                       const AnswerMap& answers);

/// Report output: JSON with a per-query array and an aggregate object.
void write_report(const std::filesystem::path& path, const EvalReport& report);

struct AlphaSweep {
  std::vector<double> alphas;  // ascending
  std::vector<double> recall;  // recall_at_k per alpha
  int k = 0;
};

/// Rebuilds the sentence index per alpha from core/context vectors encoded
/// once, recording recall@k for each. Alphas are sorted ascending.
AlphaSweep sweep_alpha(const std::vector<Passage>& corpus, const Encoder& encoder,
                       std::span<const Query> queries, std::span<const double> alphas, int k,
                       int threads = 1);

/// CSV of "alpha,recall" pairs, one row per alpha, no header.
void write_sweep_csv(const std::filesystem::path& path, const AlphaSweep& sweep);

}  // namespace prag
