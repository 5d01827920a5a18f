#include "support.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace prag::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::mt19937_64 rng{std::random_device{}()};
  const fs::path base = fs::temp_directory_path();
  for (int attempt = 0; attempt < 16; ++attempt) {
    fs::path candidate = base / ("prag-test-" + std::to_string(rng()));
    std::error_code ec;
    if (fs::create_directory(candidate, ec)) {
      path_ = std::move(candidate);
      return;
    }
  }
  throw std::runtime_error("cannot create temp directory under " + base.string());
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_corpus_jsonl(const fs::path& path, const std::vector<Passage>& passages) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const Passage& p : passages) {
    out << nlohmann::json{{"id", p.id}, {"title", p.title}, {"text", p.text}}.dump() << '\n';
  }
}

void write_queries_jsonl(const fs::path& path, const std::vector<Query>& queries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const Query& q : queries) {
    out << nlohmann::json{{"id", q.id}, {"question", q.question}, {"answers", q.answers}}.dump()
        << '\n';
  }
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spew(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

namespace {

std::string join(const std::vector<std::string>& sentences) {
  std::string text;
  for (const std::string& s : sentences) {
    if (!text.empty()) text.push_back(' ');
    text += s;
  }
  return text;
}

}  // namespace

BuriedCoreData buried_core_corpus() {
  BuriedCoreData data;
  constexpr int kTopics = 8;   // core-sufficient family
  constexpr int kBeacons = 4;  // context-needed family
  constexpr int kCatalogs = 12;
  constexpr int kImpostors = 12;
  constexpr int kNoise = 20;

  auto fillers = [](const std::string& stem, int count) {
    std::vector<std::string> words;
    for (int j = 0; j < count; ++j) words.push_back(stem + static_cast<char>('a' + j));
    return words;
  };

  // Topic family: the gold core alone carries the full query; the seven
  // siblings are pure filler, so the whole passage dilutes to nothing.
  for (int t = 0; t < kTopics; ++t) {
    std::vector<std::string> sentences;
    const std::string gold =
        "Topic" + std::to_string(t) + " system design gives ans" + std::to_string(t) + ".";
    for (int i = 0; i < 8; ++i) {
      if (i == 3) {
        sentences.push_back(gold);
        continue;
      }
      const auto w = fillers("fx" + std::to_string(t) + std::to_string(i), 5);
      std::string s = w[0] + " " + w[1] + " " + w[2] + " " + w[3] + " " + w[4] + ".";
      s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      sentences.push_back(std::move(s));
    }
    data.passages.push_back({"x" + std::to_string(t), "", join(sentences)});
    data.queries.push_back({"qx" + std::to_string(t),
                            "topic" + std::to_string(t) + " system design",
                            {"ans" + std::to_string(t)}});
  }

  // Beacon family: the gold core is ambiguous boilerplate; each sibling
  // repeats the beacon word, so only the context identifies the passage.
  for (int u = 0; u < kBeacons; ++u) {
    std::vector<std::string> sentences;
    const std::string gold = "The gadget number is ansy" + std::to_string(u) + ".";
    for (int i = 0; i < 8; ++i) {
      if (i == 3) {
        sentences.push_back(gold);
        continue;
      }
      const auto w = fillers("fy" + std::to_string(u) + std::to_string(i), 4);
      sentences.push_back("Beacon" + std::to_string(u) + " " + w[0] + " " + w[1] + " " + w[2] +
                          " " + w[3] + ".");
    }
    data.passages.push_back({"y" + std::to_string(u), "", join(sentences)});
    data.queries.push_back({"qy" + std::to_string(u),
                            "beacon" + std::to_string(u) + " gadget number",
                            {"ansy" + std::to_string(u)}});
  }

  // Catalog decoys: single short sentences that mention every topic word,
  // strong against diluted topic passages, answer-free.
  for (int c = 0; c < kCatalogs; ++c) {
    std::string s = "Guide gee" + std::to_string(c) + " lists";
    for (int t = 0; t < kTopics; ++t) s += " topic" + std::to_string(t);
    for (int u = 0; u < kBeacons; ++u) s += " beacon" + std::to_string(u);
    s += " system design.";
    data.passages.push_back({"cat" + std::to_string(c), "", std::move(s)});
  }

  // Impostors: shorter, punchier versions of the ambiguous beacon core with
  // an irrelevant second sentence, so they win on core overlap alone but
  // fade as soon as context gets weight.
  for (int m = 0; m < kImpostors; ++m) {
    const auto w = fillers("mf" + std::to_string(m), 5);
    std::string filler = w[0] + " " + w[1] + " " + w[2] + " " + w[3] + " " + w[4] + ".";
    filler[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(filler[0])));
    const std::string text =
        "The gadget number vee" + std::to_string(m) + ". " + filler;
    data.passages.push_back({"imp" + std::to_string(m), "", text});
  }

  for (int n = 0; n < kNoise; ++n) {
    std::vector<std::string> sentences;
    for (int s = 0; s < 3; ++s) {
      const auto w = fillers("nz" + std::to_string(n) + std::to_string(s), 5);
      std::string line = w[0] + " " + w[1] + " " + w[2] + " " + w[3] + " " + w[4] + ".";
      line[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(line[0])));
      sentences.push_back(std::move(line));
    }
    data.passages.push_back({"noise" + std::to_string(n), "", join(sentences)});
  }

  return data;
}

std::vector<Passage> stats_corpus(std::size_t count) {
  // 80.8575 tokens/passage over 23.85 tokens/unit means 3.3903 sentences per
  // passage; both streams mix two integer levels by error diffusion.
  const double four_sentence_rate = 80.8575 / 23.85 - 3.0;
  const double long_sentence_rate = 0.85;

  std::vector<Passage> passages;
  passages.reserve(count);
  double sentence_acc = 0.0;
  double token_acc = 0.0;
  std::size_t word = 0;

  for (std::size_t p = 0; p < count; ++p) {
    sentence_acc += four_sentence_rate;
    int nsent = 3;
    if (sentence_acc >= 1.0) {
      nsent = 4;
      sentence_acc -= 1.0;
    }

    std::vector<std::string> sentences;
    for (int s = 0; s < nsent; ++s) {
      token_acc += long_sentence_rate;
      int ntok = 23;
      if (token_acc >= 1.0) {
        ntok = 24;
        token_acc -= 1.0;
      }
      std::string sentence = "V" + std::to_string(p) + "s" + std::to_string(s);
      for (int j = 1; j < ntok; ++j) {
        sentence += " w" + std::to_string(word % 701);
        word += 1 + (word % 13);
      }
      sentence += ".";
      sentences.push_back(std::move(sentence));
    }
    passages.push_back({"s" + std::to_string(p), "", join(sentences)});
  }
  return passages;
}

std::vector<Query> stats_queries(std::size_t count) {
  std::mt19937 rng(4242);
  std::uniform_int_distribution<int> pick(0, 700);
  std::vector<Query> queries;
  queries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string question = "w" + std::to_string(pick(rng)) + " w" +
                                 std::to_string(pick(rng)) + " w" +
                                 std::to_string(pick(rng));
    queries.push_back({"q" + std::to_string(i), question, {}});
  }
  return queries;
}

GeneratedPassage random_passage(std::mt19937& rng, const std::string& id) {
  static const std::vector<std::string> kVocab = {
      "orbit",  "garden", "signal", "copper", "meadow",  "quiet",  "lantern", "harbor",
      "violet", "summit", "ember",  "willow", "falcon",  "marble", "cedar",   "prairie",
      "anchor", "timber", "drift",  "hollow", "granite", "russet", "thicket", "saffron",
  };
  static const std::vector<std::string> kSeparators = {" ", "  ", "\n", " \n\t ", "\t"};
  static const std::string kTerminals = ".!?";

  std::uniform_int_distribution<int> nsent(1, 6);
  std::uniform_int_distribution<int> nword(3, 12);
  std::uniform_int_distribution<std::size_t> word(0, kVocab.size() - 1);
  std::uniform_int_distribution<std::size_t> sep(0, kSeparators.size() - 1);
  std::uniform_int_distribution<std::size_t> terminal(0, kTerminals.size() - 1);
  std::uniform_int_distribution<int> coin(0, 3);

  GeneratedPassage out;
  const int n = nsent(rng);
  for (int s = 0; s < n; ++s) {
    std::string sentence;
    const int words = nword(rng);
    for (int j = 0; j < words; ++j) {
      if (!sentence.empty()) sentence.push_back(' ');
      sentence += kVocab[word(rng)];
    }
    sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
    sentence.push_back(kTerminals[terminal(rng)]);
    out.sentences.push_back(std::move(sentence));
  }

  std::string text;
  if (coin(rng) == 0) text += kSeparators[sep(rng)];
  for (int s = 0; s < n; ++s) {
    if (s > 0) text += kSeparators[sep(rng)];
    text += out.sentences[static_cast<std::size_t>(s)];
  }
  if (coin(rng) == 0) text += kSeparators[sep(rng)];

  out.passage = {id, "", std::move(text)};
  return out;
}

}  // namespace prag::testing
