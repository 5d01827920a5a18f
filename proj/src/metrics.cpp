#include "prag/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "prag/detail/io.hpp"

namespace prag {

AnswerMap answers_by_query(std::span<const Query> queries) {
  AnswerMap map;
  for (const Query& q : queries) map[q.id] = q.answers;
  return map;
}

std::string normalize_for_match(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::string token;
  auto flush = [&] {
    std::size_t begin = 0;
    std::size_t end = token.size();
    while (begin < end && std::ispunct(static_cast<unsigned char>(token[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(token[end - 1]))) --end;
    if (begin < end) {
      if (!out.empty()) out.push_back(' ');
      out.append(token, begin, end - begin);
    }
    token.clear();
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else {
      token.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

bool contains_answer(std::string_view text, std::span<const std::string> answers) {
  const std::string haystack = normalize_for_match(text);
  for (const std::string& answer : answers) {
    const std::string needle = normalize_for_match(answer);
    if (needle.empty()) continue;
    if (haystack.find(needle) != std::string::npos) return true;
  }
  return false;
}

namespace {

const std::vector<std::string>& gold_for(const AnswerMap& answers, const std::string& query_id) {
  const auto it = answers.find(query_id);
  if (it == answers.end())
    throw Error(ErrorCode::MissingGold, "no gold answers for query '" + query_id + "'");
  return it->second;
}

// 1-based rank of the first answer-bearing item, if any.
std::optional<int> first_hit(const RetrievalResult& result,
                             std::span<const std::string> answers) {
  for (std::size_t i = 0; i < result.items.size(); ++i) {
    if (contains_answer(result.items[i].text, answers)) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0);
  std::vector<std::size_t> cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double recall_at_k(std::span<const RetrievalResult> results, const AnswerMap& answers, int k) {
  if (k < 1) throw Error(ErrorCode::BadK, "k must be >= 1, got " + std::to_string(k));
  if (results.empty()) return 0.0;
  std::size_t hits = 0;
  for (const RetrievalResult& r : results) {
    const auto& gold = gold_for(answers, r.query_id);
    const std::size_t limit = std::min<std::size_t>(static_cast<std::size_t>(k), r.items.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (contains_answer(r.items[i].text, gold)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double rank_percentile(const RetrievalResult& result, std::span<const std::string> answers) {
  const std::optional<int> rank = first_hit(result, answers);
  if (!rank) return -1.0;
  return 100.0 * static_cast<double>(*rank) / static_cast<double>(result.items.size());
}

int short_answer_accuracy(std::string_view generated, std::span<const std::string> answers) {
  return contains_answer(generated, answers) && count_tokens(generated) <= 15 ? 1 : 0;
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const std::vector<std::string> cand = rouge_tokens(candidate);
  const std::vector<std::string> ref = rouge_tokens(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(cand, ref));
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / static_cast<double>(cand.size());
  const double recall = lcs / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

EvalReport evaluate(std::span<const RetrievalResult> results, const AnswerMap& answers,
                    std::vector<int> ks) {
  if (ks.empty()) throw Error(ErrorCode::ConfigError, "at least one k value is required");
  for (const int k : ks) {
    if (k < 1) throw Error(ErrorCode::BadK, "k must be >= 1, got " + std::to_string(k));
  }
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  EvalReport report;
  report.per_query.reserve(results.size());
  std::size_t token_sum = 0;
  for (const RetrievalResult& r : results) {
    const auto& gold = gold_for(answers, r.query_id);

    QueryEval eval;
    eval.query_id = r.query_id;
    eval.first_hit_rank = first_hit(r, gold);
    if (eval.first_hit_rank)
      eval.rank_percentile = 100.0 * static_cast<double>(*eval.first_hit_rank) /
                             static_cast<double>(r.items.size());
    eval.token_total = r.token_total;
    token_sum += r.token_total;

    if (eval.rank_percentile < 0.0) {
      ++report.histogram.miss;
    } else {
      const int bin = std::clamp(
          static_cast<int>(std::ceil(eval.rank_percentile / PercentileHistogram::kBinWidth)), 1,
          20);
      ++report.histogram.counts[static_cast<std::size_t>(bin - 1)];
    }
    report.per_query.push_back(std::move(eval));
  }

  for (const int k : ks) {
    std::size_t hits = 0;
    for (const QueryEval& eval : report.per_query) {
      if (eval.first_hit_rank && *eval.first_hit_rank <= k) ++hits;
    }
    const double recall = report.per_query.empty()
                              ? 0.0
                              : static_cast<double>(hits) /
                                    static_cast<double>(report.per_query.size());
    report.recall_at_k.emplace_back(k, recall);
  }
  report.mean_recall = report.recall_at_k.back().second;
  if (!report.per_query.empty())
    report.mean_tokens =
        static_cast<double>(token_sum) / static_cast<double>(report.per_query.size());
  return report;
}

std::vector<Generation> read_generations(const std::filesystem::path& path) {
  std::vector<Generation> gens;
  detail::for_each_jsonl(path, ErrorCode::FormatError,
                         [&](std::size_t lineno, const nlohmann::json& rec) {
    const std::string where = path.string() + " line " + std::to_string(lineno);
    if (!rec.is_object() || !rec.contains("query_id") || !rec["query_id"].is_string() ||
        !rec.contains("output") || !rec["output"].is_string())
      throw Error(ErrorCode::FormatError, where + ": expected {query_id, prompt_tokens, output}");
    Generation g{rec["query_id"].get<std::string>(), 0, rec["output"].get<std::string>()};
    if (const auto it = rec.find("prompt_tokens"); it != rec.end() && it->is_number_unsigned())
      g.prompt_tokens = it->get<std::size_t>();
    gens.push_back(std::move(g));
  });
  return gens;
}

void write_generations(const std::filesystem::path& path, std::span<const Generation> gens) {
  detail::atomic_write(path, [&](std::ostream& out) {
    for (const Generation& g : gens) {
      const nlohmann::json rec{
          {"query_id", g.query_id}, {"prompt_tokens", g.prompt_tokens}, {"output", g.output}};
      out << rec.dump() << '\n';
    }
  });
}

void score_generations(EvalReport& report, std::span<const Generation> generations,
                       const AnswerMap& answers) {
  if (generations.empty()) return;
  double accuracy_sum = 0.0;
  double rouge_sum = 0.0;
  for (const Generation& g : generations) {
    const auto& gold = gold_for(answers, g.query_id);
    accuracy_sum += short_answer_accuracy(g.output, gold);
    double best = 0.0;
    for (const std::string& ref : gold) best = std::max(best, rouge_l(g.output, ref));
    rouge_sum += best;
  }
  report.accuracy = accuracy_sum / static_cast<double>(generations.size());
  report.rouge = rouge_sum / static_cast<double>(generations.size());
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  nlohmann::json recall = nlohmann::json::array();
  for (const auto& [k, value] : report.recall_at_k)
    recall.push_back({{"k", k}, {"recall", value}});

  nlohmann::json aggregate{
      {"recall", std::move(recall)},
      {"mean_recall", report.mean_recall},
      {"mean_tokens", report.mean_tokens},
      {"histogram",
       {{"miss", report.histogram.miss},
        {"bins", std::vector<std::size_t>(report.histogram.counts.begin(),
                                          report.histogram.counts.end())}}},
  };
  if (report.accuracy) aggregate["accuracy"] = *report.accuracy;
  if (report.rouge) aggregate["rouge_l"] = *report.rouge;

  nlohmann::json per_query = nlohmann::json::array();
  for (const QueryEval& eval : report.per_query) {
    nlohmann::json rec{{"query_id", eval.query_id},
                       {"rank_percentile", eval.rank_percentile},
                       {"token_total", eval.token_total}};
    rec["first_hit_rank"] =
        eval.first_hit_rank ? nlohmann::json(*eval.first_hit_rank) : nlohmann::json(nullptr);
    per_query.push_back(std::move(rec));
  }

  detail::atomic_write(path, [&](std::ostream& out) {
    const nlohmann::json doc{{"aggregate", std::move(aggregate)},
                             {"per_query", std::move(per_query)}};
    out << doc.dump(2) << '\n';
  });
}

AlphaSweep sweep_alpha(const std::vector<Passage>& corpus, const Encoder& encoder,
                       std::span<const Query> queries, std::span<const double> alphas, int k,
                       int threads) {
  if (alphas.empty()) throw Error(ErrorCode::ConfigError, "at least one alpha is required");
  if (k < 1) throw Error(ErrorCode::BadK, "k must be >= 1, got " + std::to_string(k));

  AlphaSweep sweep;
  sweep.k = k;
  sweep.alphas.assign(alphas.begin(), alphas.end());
  std::sort(sweep.alphas.begin(), sweep.alphas.end());

  const EncodedUnits enc = encode_units(corpus, encoder, threads);
  std::vector<EncodeItem> query_items;
  query_items.reserve(queries.size());
  for (const Query& q : queries) query_items.push_back({q.question, query_key(q.id)});
  const std::vector<DenseVector> query_vecs = encoder.encode_items(query_items, threads);

  for (const double a : sweep.alphas) {
    const VectorIndex index = build_sentence_index(enc, Alpha(a));
    std::size_t hits = 0;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
      for (const Hit& hit : index.search(query_vecs[qi], k, threads)) {
        if (contains_answer(enc.units[hit.row].core_text, queries[qi].answers)) {
          ++hits;
          break;
        }
      }
    }
    sweep.recall.push_back(queries.empty()
                               ? 0.0
                               : static_cast<double>(hits) / static_cast<double>(queries.size()));
  }
  return sweep;
}

void write_sweep_csv(const std::filesystem::path& path, const AlphaSweep& sweep) {
  detail::atomic_write(path, [&](std::ostream& out) {
    for (std::size_t i = 0; i < sweep.alphas.size(); ++i) {
      out << nlohmann::json(sweep.alphas[i]).dump() << ','
          << nlohmann::json(sweep.recall[i]).dump() << '\n';
    }
  });
}

}  // namespace prag
