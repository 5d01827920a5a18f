#include "prag/corpus.hpp"

#include <cctype>
#include <string>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "prag/detail/io.hpp"
#include "prag/errors.hpp"

namespace prag {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

std::string collapse_ws(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (const char ch : text) {
    if (is_space(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(ch);
    }
  }
  return out;
}

// Closing quotes and brackets that may sit between terminal punctuation and
// the following space. Multibyte entries are UTF-8.
std::size_t skip_closers(const std::string& s, std::size_t j) {
  while (j < s.size()) {
    const char c = s[j];
    if (c == '"' || c == '\'' || c == ')' || c == ']' || c == '}') {
      ++j;
    } else if (s.compare(j, 3, "\xE2\x80\x9D") == 0 || s.compare(j, 3, "\xE2\x80\x99") == 0) {
      j += 3;
    } else if (s.compare(j, 2, "\xC2\xBB") == 0) {
      j += 2;
    } else {
      break;
    }
  }
  return j;
}

const std::unordered_set<std::string_view> kAbbreviations = {
    "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "vs.",
    "etc.", "e.g.", "i.e.", "Fig.", "No.", "U.S.",
};

// The token is the longest run of [A-Za-z0-9.] ending at the period.
bool ends_in_abbreviation(const std::string& s, std::size_t dot) {
  std::size_t start = dot;
  while (start > 0) {
    const unsigned char c = static_cast<unsigned char>(s[start - 1]);
    if (std::isalnum(c) || c == '.') {
      --start;
    } else {
      break;
    }
  }
  const std::string_view token = std::string_view(s).substr(start, dot + 1 - start);
  return kAbbreviations.contains(token);
}

}  // namespace

std::size_t count_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (const char ch : text) {
    if (is_space(static_cast<unsigned char>(ch))) {
      in_token = false;
    } else if (!in_token) {
      ++n;
      in_token = true;
    }
  }
  return n;
}

std::vector<std::string> segment(std::string_view text) {
  const std::string s = collapse_ws(text);
  if (s.empty()) throw Error(ErrorCode::EmptyText, "empty or whitespace-only text");

  std::vector<std::string> sentences;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '.' || c == '!' || c == '?') {
      const std::size_t after = skip_closers(s, i + 1);
      const bool next_starts_sentence =
          after + 1 < s.size() && s[after] == ' ' &&
          (std::isupper(static_cast<unsigned char>(s[after + 1])) != 0 ||
           std::isdigit(static_cast<unsigned char>(s[after + 1])) != 0);
      if (next_starts_sentence && !(c == '.' && ends_in_abbreviation(s, i))) {
        sentences.push_back(s.substr(start, after - start));
        start = after + 1;
        i = after + 1;
        continue;
      }
    }
    ++i;
  }
  sentences.push_back(s.substr(start));
  return sentences;
}

std::vector<SentenceUnit> decompose(const Passage& passage) {
  const std::vector<std::string> sentences = segment(passage.text);
  const std::size_t n = sentences.size();

  std::vector<SentenceUnit> units;
  units.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SentenceUnit unit{passage.id, static_cast<int>(i), sentences[i], std::nullopt};
    if (n > 1) {
      std::string context;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (!context.empty()) context.push_back(' ');
        context += sentences[j];
      }
      unit.context_text = std::move(context);
    }
    units.push_back(std::move(unit));
  }
  return units;
}

Corpus load_corpus(const std::filesystem::path& path, const std::string& format,
                   const TokenCounter& tokens) {
  if (format != "jsonl")
    throw Error(ErrorCode::ConfigError, "unsupported corpus format '" + format + "'");

  Corpus corpus;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(path, ErrorCode::RecordError,
                         [&](std::size_t lineno, const nlohmann::json& rec) {
    const std::string where = path.string() + " line " + std::to_string(lineno);
    if (!rec.is_object())
      throw Error(ErrorCode::RecordError, where + ": expected an object");
    auto field = [&](const char* name, bool required) -> std::string {
      const auto it = rec.find(name);
      if (it == rec.end()) {
        if (required)
          throw Error(ErrorCode::RecordError,
                      where + ": missing field '" + name + "'");
        return {};
      }
      if (!it->is_string())
        throw Error(ErrorCode::RecordError,
                    where + ": field '" + name + "' must be a string");
      return it->get<std::string>();
    };

    Passage p{field("id", true), field("title", false), field("text", true)};
    if (p.id.empty()) throw Error(ErrorCode::RecordError, where + ": empty id");
    if (collapse_ws(p.text).empty())
      throw Error(ErrorCode::RecordError, where + ": empty text for id '" + p.id + "'");
    if (!seen.insert(p.id).second)
      throw Error(ErrorCode::DuplicateId, where + ": duplicate passage id '" + p.id + "'");
    corpus.passages.push_back(std::move(p));
  });

  corpus.stats = compute_stats(corpus.passages, tokens);
  return corpus;
}

CorpusStats compute_stats(const std::vector<Passage>& passages, const TokenCounter& tokens) {
  CorpusStats stats;
  stats.passage_count = passages.size();
  std::size_t passage_tokens = 0;
  std::size_t unit_tokens = 0;
  for (const Passage& p : passages) {
    passage_tokens += tokens(p.text);
    for (const std::string& sentence : segment(p.text)) {
      ++stats.unit_count;
      unit_tokens += tokens(sentence);
    }
  }
  if (stats.passage_count > 0)
    stats.mean_tokens_per_passage =
        static_cast<double>(passage_tokens) / static_cast<double>(stats.passage_count);
  if (stats.unit_count > 0)
    stats.mean_tokens_per_unit =
        static_cast<double>(unit_tokens) / static_cast<double>(stats.unit_count);
  return stats;
}

void write_units(const std::filesystem::path& path, const std::vector<Passage>& passages) {
  detail::atomic_write(path, [&](std::ostream& out) {
    for (const Passage& p : passages) {
      for (const SentenceUnit& unit : decompose(p)) {
        nlohmann::json rec{
            {"passage_id", unit.passage_id},
            {"sent_index", unit.sent_index},
            {"core", unit.core_text},
        };
        rec["context"] =
            unit.context_text ? nlohmann::json(*unit.context_text) : nlohmann::json(nullptr);
        out << rec.dump() << '\n';
      }
    }
  });
}

}  // namespace prag
