#include "prag/pipeline.hpp"

#include <climits>
#include <utility>

#include <json.hpp>

#include "prag/detail/io.hpp"
#include "prag/errors.hpp"

namespace prag {

std::vector<Query> load_queries(const std::filesystem::path& path) {
  std::vector<Query> queries;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_jsonl(path, ErrorCode::RecordError,
                         [&](std::size_t lineno, const nlohmann::json& rec) {
    const std::string where = path.string() + " line " + std::to_string(lineno);
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("question") || !rec["question"].is_string())
      throw Error(ErrorCode::RecordError, where + ": expected {id, question, answers?}");
    Query q{rec["id"].get<std::string>(), rec["question"].get<std::string>(), {}};
    if (q.id.empty()) throw Error(ErrorCode::RecordError, where + ": empty id");
    if (q.question.empty()) throw Error(ErrorCode::RecordError, where + ": empty question");
    if (const auto it = rec.find("answers"); it != rec.end()) {
      if (!it->is_array())
        throw Error(ErrorCode::RecordError, where + ": 'answers' must be an array");
      for (const nlohmann::json& a : *it) {
        if (!a.is_string())
          throw Error(ErrorCode::RecordError, where + ": answers must be strings");
        q.answers.push_back(a.get<std::string>());
      }
    }
    if (!seen.emplace(q.id, lineno).second)
      throw Error(ErrorCode::DuplicateId, where + ": duplicate query id '" + q.id + "'");
    queries.push_back(std::move(q));
  });
  return queries;
}

TextResolver::TextResolver(const std::vector<Passage>& passages) {
  for (const Passage& p : passages) {
    if (!by_id_.emplace(p.id, Entry{&p, {}}).second)
      throw Error(ErrorCode::DuplicateId, "duplicate passage id '" + p.id + "'");
  }
}

const std::string& TextResolver::passage_text(const std::string& passage_id) const {
  const auto it = by_id_.find(passage_id);
  if (it == by_id_.end())
    throw Error(ErrorCode::IncompatibleIndex,
                "index references passage '" + passage_id + "' missing from the corpus");
  return it->second.passage->text;
}

const std::string& TextResolver::sentence(const std::string& passage_id, int sent_index) const {
  const auto it = by_id_.find(passage_id);
  if (it == by_id_.end())
    throw Error(ErrorCode::IncompatibleIndex,
                "index references passage '" + passage_id + "' missing from the corpus");
  const Entry& entry = it->second;
  if (entry.sentences.empty()) entry.sentences = segment(entry.passage->text);
  if (sent_index < 0 || static_cast<std::size_t>(sent_index) >= entry.sentences.size())
    throw Error(ErrorCode::IncompatibleIndex,
                "sentence index " + std::to_string(sent_index) + " out of range for passage '" +
                    passage_id + "'");
  return entry.sentences[static_cast<std::size_t>(sent_index)];
}

EncodedUnits encode_units(const std::vector<Passage>& corpus, const Encoder& encoder,
                          int threads) {
  EncodedUnits enc;
  enc.backend_id = encoder.config().backend_id();
  for (const Passage& p : corpus) {
    for (SentenceUnit& unit : decompose(p)) enc.units.push_back(std::move(unit));
  }

  std::vector<EncodeItem> core_items;
  core_items.reserve(enc.units.size());
  std::vector<EncodeItem> context_items;
  std::vector<std::size_t> context_slots;
  for (std::size_t i = 0; i < enc.units.size(); ++i) {
    const SentenceUnit& unit = enc.units[i];
    core_items.push_back({unit.core_text, unit_core_key(unit.passage_id, unit.sent_index)});
    if (unit.context_text) {
      context_items.push_back(
          {*unit.context_text, unit_context_key(unit.passage_id, unit.sent_index)});
      context_slots.push_back(i);
    }
  }

  enc.core = encoder.encode_items(core_items, threads);
  enc.context.resize(enc.units.size());
  std::vector<DenseVector> context_vecs = encoder.encode_items(context_items, threads);
  for (std::size_t j = 0; j < context_slots.size(); ++j)
    enc.context[context_slots[j]] = std::move(context_vecs[j]);
  return enc;
}

VectorIndex build_sentence_index(const EncodedUnits& enc, Alpha alpha) {
  if (enc.units.empty()) throw Error(ErrorCode::EmptyIndex, "corpus produced no sentence units");
  IndexBuilder builder(static_cast<int>(enc.core[0].dim()), IndexMode::Sentence, alpha,
                       enc.backend_id);
  for (std::size_t i = 0; i < enc.units.size(); ++i) {
    const SentenceUnit& unit = enc.units[i];
    builder.add({unit.passage_id, unit.sent_index},
                compose_weighted(enc.core[i], enc.context[i], alpha));
  }
  return builder.finish();
}

VectorIndex build_sentence_index(const std::vector<Passage>& corpus, const Encoder& encoder,
                                 Alpha alpha, int threads) {
  return build_sentence_index(encode_units(corpus, encoder, threads), alpha);
}

VectorIndex build_passage_index(const std::vector<Passage>& corpus, const Encoder& encoder,
                                int threads) {
  std::vector<EncodeItem> items;
  items.reserve(corpus.size());
  for (const Passage& p : corpus) items.push_back({p.text, p.id});
  const std::vector<DenseVector> vecs = encoder.encode_items(items, threads);

  IndexBuilder builder(encoder.config().dim, IndexMode::Passage, Alpha(1.0),
                       encoder.config().backend_id());
  for (std::size_t i = 0; i < corpus.size(); ++i)
    builder.add({corpus[i].id, std::nullopt}, vecs[i]);
  return builder.finish();
}

RetrievalResult retrieve(const VectorIndex& index, const TextResolver& texts,
                         const Encoder& encoder, const std::string& query_id,
                         const std::string& query_text, int k, int threads) {
  if (encoder.config().backend_id() != index.backend_id())
    throw Error(ErrorCode::IncompatibleIndex, "index built with '" + index.backend_id() +
                                                  "', encoder is '" +
                                                  encoder.config().backend_id() + "'");
  const DenseVector qvec = encoder.encode_one(query_text, query_key(query_id));

  RetrievalResult result;
  result.query_id = query_id;
  result.mode = index.mode();
  for (const Hit& hit : index.search(qvec, k, threads)) {
    const RowMeta& meta = index.meta(hit.row);
    std::string text = index.mode() == IndexMode::Sentence
                           ? texts.sentence(meta.passage_id, meta.sent_index.value())
                           : texts.passage_text(meta.passage_id);
    result.token_total += count_tokens(text);
    result.items.push_back({std::move(text), meta.passage_id, meta.sent_index, hit.score});
  }
  return result;
}

RetrievalResult retrieve_word_budget(const VectorIndex& index, const TextResolver& texts,
                                     const Encoder& encoder, const std::string& query_id,
                                     const std::string& query_text, int budget_words,
                                     int threads) {
  if (budget_words < 1)
    throw Error(ErrorCode::ConfigError,
                "word budget must be >= 1, got " + std::to_string(budget_words));
  const int all = static_cast<int>(std::min<std::size_t>(index.rows(), INT_MAX));
  RetrievalResult ranked = retrieve(index, texts, encoder, query_id, query_text, all, threads);

  RetrievalResult result;
  result.query_id = ranked.query_id;
  result.mode = ranked.mode;
  std::size_t used = 0;
  for (RetrievedItem& item : ranked.items) {
    const std::size_t words = count_tokens(item.text);
    if (!result.items.empty() && used + words > static_cast<std::size_t>(budget_words)) break;
    used += words;
    result.items.push_back(std::move(item));
  }
  result.token_total = used;
  return result;
}

void write_results(const std::filesystem::path& path, std::span<const RetrievalResult> results,
                   const RetrievalSpec& spec) {
  if (spec.k.has_value() == spec.budget_words.has_value())
    throw Error(ErrorCode::ConfigError, "set exactly one of k and budget_words");

  detail::atomic_write(path, [&](std::ostream& out) {
    for (const RetrievalResult& r : results) {
      nlohmann::json rec{{"query_id", r.query_id}, {"mode", mode_name(r.mode)}};
      if (spec.k) rec["k"] = *spec.k;
      if (spec.budget_words) rec["budget_words"] = *spec.budget_words;
      nlohmann::json items = nlohmann::json::array();
      for (const RetrievedItem& item : r.items) {
        nlohmann::json ji{{"text", item.text},
                          {"passage_id", item.passage_id},
                          {"score", item.score}};
        ji["sent_index"] =
            item.sent_index ? nlohmann::json(*item.sent_index) : nlohmann::json(nullptr);
        items.push_back(std::move(ji));
      }
      rec["items"] = std::move(items);
      rec["token_total"] = r.token_total;
      out << rec.dump() << '\n';
    }
  });
}

std::vector<RetrievalResult> read_results(const std::filesystem::path& path) {
  std::vector<RetrievalResult> results;
  detail::for_each_jsonl(path, ErrorCode::FormatError,
                         [&](std::size_t lineno, const nlohmann::json& rec) {
    const std::string where = path.string() + " line " + std::to_string(lineno);
    if (!rec.is_object() || !rec.contains("query_id") || !rec["query_id"].is_string() ||
        !rec.contains("mode") || !rec["mode"].is_string() || !rec.contains("items") ||
        !rec["items"].is_array())
      throw Error(ErrorCode::FormatError, where + ": expected {query_id, mode, items, ...}");

    RetrievalResult r;
    r.query_id = rec["query_id"].get<std::string>();
    const std::string mode = rec["mode"].get<std::string>();
    if (mode == "sentence") {
      r.mode = IndexMode::Sentence;
    } else if (mode == "passage") {
      r.mode = IndexMode::Passage;
    } else {
      throw Error(ErrorCode::FormatError, where + ": unknown mode '" + mode + "'");
    }
    for (const nlohmann::json& ji : rec["items"]) {
      if (!ji.is_object() || !ji.contains("text") || !ji["text"].is_string() ||
          !ji.contains("passage_id") || !ji["passage_id"].is_string() ||
          !ji.contains("score") || !ji["score"].is_number())
        throw Error(ErrorCode::FormatError, where + ": bad item record");
      RetrievedItem item{ji["text"].get<std::string>(), ji["passage_id"].get<std::string>(),
                         std::nullopt, ji["score"].get<double>()};
      if (const auto it = ji.find("sent_index"); it != ji.end() && it->is_number_integer())
        item.sent_index = it->get<int>();
      r.items.push_back(std::move(item));
    }
    if (const auto it = rec.find("token_total"); it != rec.end() && it->is_number_unsigned())
      r.token_total = it->get<std::size_t>();
    results.push_back(std::move(r));
  });
  return results;
}

}  // namespace prag
