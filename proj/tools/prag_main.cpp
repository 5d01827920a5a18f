#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prag/corpus.hpp"
#include "prag/encoder.hpp"
#include "prag/errors.hpp"
#include "prag/genclient.hpp"
#include "prag/index.hpp"
#include "prag/metrics.hpp"
#include "prag/pipeline.hpp"

namespace {

using namespace prag;

struct EncoderOpts {
  std::string backend = "test-hash";
  int dim = 64;
  std::string endpoint;
  std::vector<std::string> vector_files;
  int batch_size = 32;
  int max_in_flight = 4;
};

void add_encoder_flags(CLI::App& cmd, EncoderOpts& opts) {
  cmd.add_option("--backend", opts.backend,
                 "Encoder backend: test-hash, precomputed-file, http-service")
      ->capture_default_str();
  cmd.add_option("--dim", opts.dim, "Embedding dimension")->capture_default_str();
  cmd.add_option("--endpoint", opts.endpoint, "Embedding service URL (http-service backend)");
  cmd.add_option("--vector-file", opts.vector_files,
                 "Precomputed vector file, repeatable (precomputed-file backend)");
  cmd.add_option("--batch-size", opts.batch_size, "Texts per embedding request")
      ->capture_default_str();
  cmd.add_option("--max-in-flight", opts.max_in_flight, "Concurrent embedding requests")
      ->capture_default_str();
}

Encoder make_encoder(const EncoderOpts& opts) {
  EncoderConfig cfg;
  cfg.backend = parse_backend(opts.backend);
  cfg.dim = opts.dim;
  cfg.endpoint = opts.endpoint;
  cfg.vector_files.assign(opts.vector_files.begin(), opts.vector_files.end());
  cfg.batch_size = opts.batch_size;
  cfg.max_in_flight = opts.max_in_flight;
  return Encoder(cfg);
}

void fail_config(const std::vector<std::string>& problems) {
  if (problems.empty()) return;
  std::string joined;
  for (const std::string& p : problems) {
    if (!joined.empty()) joined += "; ";
    joined += p;
  }
  throw Error(ErrorCode::ConfigError, joined);
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string piece = text.substr(pos, comma - pos);
    try {
      ks.push_back(std::stoi(piece));
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad k value '" + piece + "' in '" + text + "'");
    }
    pos = comma + 1;
  }
  return ks;
}

/// Either "lo:hi:step" (inclusive range) or a comma-separated list.
std::vector<double> parse_alphas(const std::string& text) {
  std::vector<std::string> pieces;
  const char sep = text.find(':') != std::string::npos ? ':' : ',';
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = std::min(text.find(sep, pos), text.size());
    pieces.push_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
  auto as_double = [&](const std::string& piece) {
    try {
      return std::stod(piece);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad alpha value '" + piece + "' in '" + text + "'");
    }
  };

  std::vector<double> alphas;
  if (sep == ':') {
    if (pieces.size() != 3)
      throw Error(ErrorCode::ConfigError, "alpha range must be lo:hi:step, got '" + text + "'");
    const double lo = as_double(pieces[0]);
    const double hi = as_double(pieces[1]);
    const double step = as_double(pieces[2]);
    if (step <= 0.0 || hi < lo)
      throw Error(ErrorCode::ConfigError, "alpha range must have step > 0 and hi >= lo");
    int count = static_cast<int>(std::round((hi - lo) / step));
    if (std::abs(lo + count * step - hi) > step * 1e-6)
      count = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
    for (int i = 0; i <= count; ++i) {
      const double raw = std::min(lo + i * step, hi);
      alphas.push_back(std::round(raw * 1e9) / 1e9);
    }
  } else {
    for (const std::string& piece : pieces) alphas.push_back(as_double(piece));
  }

  std::vector<std::string> problems;
  for (const double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0))
      problems.push_back("alpha " + std::to_string(a) + " out of [0, 1]");
  }
  fail_config(problems);
  return alphas;
}

std::string item_label(const RetrievedItem& item) {
  return item.sent_index ? item.passage_id + "#" + std::to_string(*item.sent_index)
                         : item.passage_id;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prag: sentence-granular dense retrieval toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "Options file (INI/TOML; [subcommand] sections, keys are the long flag names; "
                 "command-line flags win)");
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (0 = all hardware threads)")
      ->capture_default_str();

  // segment
  auto* segment_cmd = app.add_subcommand("segment", "Split a corpus into sentence units");
  struct {
    std::string corpus, format = "jsonl", out;
  } seg;
  segment_cmd->add_option("--corpus", seg.corpus, "Corpus JSONL ({id, title, text} per line)")
      ->required()
      ->check(CLI::ExistingFile);
  segment_cmd->add_option("--format", seg.format, "Corpus file format")->capture_default_str();
  segment_cmd->add_option("--out", seg.out, "Output units JSONL")->required();

  // encode
  auto* encode_cmd =
      app.add_subcommand("encode", "Encode corpus units (and optional queries) to a vector file");
  struct {
    std::string corpus, queries, out;
    EncoderOpts enc;
  } enc_opts;
  encode_cmd->add_option("--corpus", enc_opts.corpus, "Corpus JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  encode_cmd->add_option("--queries", enc_opts.queries, "Queries JSONL to encode as well")
      ->check(CLI::ExistingFile);
  encode_cmd->add_option("--out", enc_opts.out, "Output vector file (keys sidecar written too)")
      ->required();
  add_encoder_flags(*encode_cmd, enc_opts.enc);

  // build-index
  auto* build_cmd = app.add_subcommand("build-index", "Build and save a vector index");
  struct {
    std::string corpus, mode = "sentence", out;
    double alpha = 0.8;
    EncoderOpts enc;
  } build;
  build_cmd->add_option("--corpus", build.corpus, "Corpus JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  build_cmd->add_option("--mode", build.mode, "Index granularity")
      ->check(CLI::IsMember({"sentence", "passage"}))
      ->capture_default_str();
  build_cmd->add_option("--alpha", build.alpha, "Core-sentence weight (sentence mode)")
      ->capture_default_str();
  build_cmd->add_option("--out", build.out, "Output index directory")->required();
  add_encoder_flags(*build_cmd, build.enc);

  // search
  auto* search_cmd = app.add_subcommand("search", "Run one query against a saved index");
  struct {
    std::string index, corpus, query, query_id = "q", out;
    int k = 30, budget = 400;
    EncoderOpts enc;
  } search;
  search_cmd->add_option("--index", search.index, "Index directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  search_cmd->add_option("--corpus", search.corpus, "Corpus JSONL the index was built from")
      ->required()
      ->check(CLI::ExistingFile);
  search_cmd->add_option("--query", search.query, "Query text")->required();
  search_cmd->add_option("--query-id", search.query_id, "Query id recorded in the output")
      ->capture_default_str();
  search_cmd->add_option("--k", search.k, "Top-k items (mutually exclusive with --budget-words)")
      ->capture_default_str();
  search_cmd->add_option("--budget-words", search.budget,
                         "Word budget instead of top-k (default 400 when used)");
  search_cmd->add_option("--out", search.out, "Optional results JSONL");
  add_encoder_flags(*search_cmd, search.enc);

  // retrieve-batch
  auto* batch_cmd = app.add_subcommand("retrieve-batch", "Retrieve for every query in a file");
  struct {
    std::string index, corpus, queries, out;
    int k = 30, budget = 400;
    EncoderOpts enc;
  } batch;
  batch_cmd->add_option("--index", batch.index, "Index directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  batch_cmd->add_option("--corpus", batch.corpus, "Corpus JSONL the index was built from")
      ->required()
      ->check(CLI::ExistingFile);
  batch_cmd->add_option("--queries", batch.queries, "Queries JSONL ({id, question, answers?})")
      ->required()
      ->check(CLI::ExistingFile);
  batch_cmd->add_option("--k", batch.k, "Top-k items (mutually exclusive with --budget-words)")
      ->capture_default_str();
  batch_cmd->add_option("--budget-words", batch.budget,
                        "Word budget instead of top-k (default 400 when used)");
  batch_cmd->add_option("--out", batch.out, "Output results JSONL")->required();
  add_encoder_flags(*batch_cmd, batch.enc);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score retrieval (and optional generations)");
  struct {
    std::string results, index, corpus, queries, generations, out, ks = "1,5,10,30";
    int k = 30, budget = 400;
    EncoderOpts enc;
  } eval_o;
  eval_cmd->add_option("--results", eval_o.results, "Results JSONL from retrieve-batch")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--index", eval_o.index,
                       "Index directory (retrieve here instead of --results)")
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--corpus", eval_o.corpus, "Corpus JSONL (required with --index)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--queries", eval_o.queries, "Queries JSONL with gold answers")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--generations", eval_o.generations,
                       "Generations JSONL to fold into the report")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--ks", eval_o.ks, "Comma-separated recall cutoffs")
      ->capture_default_str();
  eval_cmd->add_option("--k", eval_o.k, "Top-k when retrieving via --index")
      ->capture_default_str();
  eval_cmd->add_option("--budget-words", eval_o.budget,
                       "Word budget instead of top-k (default 400 when used)");
  eval_cmd->add_option("--out", eval_o.out, "Output report JSON")->required();
  add_encoder_flags(*eval_cmd, eval_o.enc);

  // sweep-alpha
  auto* sweep_cmd = app.add_subcommand("sweep-alpha", "Recall@k across alpha values");
  struct {
    std::string corpus, queries, alphas = "0.0:1.0:0.1", out;
    int k = 30;
    EncoderOpts enc;
  } sweep_o;
  sweep_cmd->add_option("--corpus", sweep_o.corpus, "Corpus JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--queries", sweep_o.queries, "Queries JSONL with gold answers")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--alphas", sweep_o.alphas,
                        "Alphas as lo:hi:step (inclusive) or a comma list")
      ->capture_default_str();
  sweep_cmd->add_option("--k", sweep_o.k, "Recall cutoff")->capture_default_str();
  sweep_cmd->add_option("--out", sweep_o.out, "Output CSV (alpha,recall rows)")->required();
  add_encoder_flags(*sweep_cmd, sweep_o.enc);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Generate answers through a chat service");
  struct {
    std::string queries, results, template_path, endpoint, model, out;
    double temperature = 0.1;
    int max_output_tokens = 150, seed = 100, timeout_ms = 30000, max_retries = 0;
    bool plain = false;
  } gen;
  gen_cmd->add_option("--queries", gen.queries, "Queries JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--results", gen.results, "Results JSONL providing retrieved contexts")
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--template", gen.template_path,
                      "Prompt template with [context] and [question] slots")
      ->required()
      ->check(CLI::ExistingFile);
  gen_cmd->add_option("--endpoint", gen.endpoint, "Chat service URL")->required();
  gen_cmd->add_option("--model", gen.model, "Model name sent to the service")->required();
  gen_cmd->add_option("--temperature", gen.temperature, "Sampling temperature")
      ->capture_default_str();
  gen_cmd->add_option("--max-output-tokens", gen.max_output_tokens, "Generation length cap")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Sampling seed")->capture_default_str();
  gen_cmd->add_option("--timeout-ms", gen.timeout_ms, "Request timeout in milliseconds")
      ->capture_default_str();
  gen_cmd->add_option("--max-retries", gen.max_retries,
                      "Retries on transport failure or 5xx (same seed each attempt)")
      ->capture_default_str();
  gen_cmd->add_flag("--plain-prompt", gen.plain,
                    "Send the whole prompt as one user message instead of a system/user split");
  gen_cmd->add_option("--out", gen.out, "Output generations JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(segment_cmd)) {
      const Corpus corpus = load_corpus(seg.corpus, seg.format);
      write_units(seg.out, corpus.passages);
      std::cout << "passages " << corpus.stats.passage_count << ", units "
                << corpus.stats.unit_count << ", mean tokens/passage "
                << corpus.stats.mean_tokens_per_passage << ", mean tokens/unit "
                << corpus.stats.mean_tokens_per_unit << '\n';
      std::cout << "wrote " << seg.out << '\n';

    } else if (app.got_subcommand(encode_cmd)) {
      const Encoder encoder = make_encoder(enc_opts.enc);
      const Corpus corpus = load_corpus(enc_opts.corpus);

      std::vector<EncodeItem> items;
      for (const Passage& p : corpus.passages) {
        items.push_back({p.text, p.id});
        for (const SentenceUnit& unit : decompose(p)) {
          items.push_back({unit.core_text, unit_core_key(unit.passage_id, unit.sent_index)});
          if (unit.context_text)
            items.push_back(
                {*unit.context_text, unit_context_key(unit.passage_id, unit.sent_index)});
        }
      }
      if (!enc_opts.queries.empty()) {
        for (const Query& q : load_queries(enc_opts.queries))
          items.push_back({q.question, query_key(q.id)});
      }

      const std::vector<DenseVector> vecs = encoder.encode_items(items, threads);
      std::vector<std::pair<std::string, DenseVector>> rows;
      rows.reserve(items.size());
      for (std::size_t i = 0; i < items.size(); ++i) rows.emplace_back(items[i].key, vecs[i]);
      write_vector_file(enc_opts.out, encoder.config().dim, rows);
      std::cout << "wrote " << enc_opts.out << " (" << rows.size() << " rows, dim "
                << encoder.config().dim << ")\n";

    } else if (app.got_subcommand(build_cmd)) {
      const Encoder encoder = make_encoder(build.enc);
      const Corpus corpus = load_corpus(build.corpus);
      const VectorIndex index =
          build.mode == "sentence"
              ? build_sentence_index(corpus.passages, encoder, Alpha(build.alpha), threads)
              : build_passage_index(corpus.passages, encoder, threads);
      index.save(build.out);
      std::cout << "wrote " << build.out << " (" << index.rows() << " rows, mode "
                << mode_name(index.mode()) << ", alpha " << index.alpha() << ", backend "
                << index.backend_id() << ")\n";

    } else if (app.got_subcommand(search_cmd)) {
      std::vector<std::string> problems;
      const bool use_budget = search_cmd->count("--budget-words") > 0;
      if (use_budget && search_cmd->count("--k") > 0)
        problems.push_back("set exactly one of --k and --budget-words");
      fail_config(problems);

      const Encoder encoder = make_encoder(search.enc);
      const VectorIndex index = VectorIndex::load(search.index);
      const Corpus corpus = load_corpus(search.corpus);
      const TextResolver texts(corpus.passages);
      const RetrievalResult result =
          use_budget ? retrieve_word_budget(index, texts, encoder, search.query_id, search.query,
                                            search.budget, threads)
                     : retrieve(index, texts, encoder, search.query_id, search.query, search.k,
                                threads);
      for (std::size_t i = 0; i < result.items.size(); ++i) {
        const RetrievedItem& item = result.items[i];
        std::cout << (i + 1) << '\t' << item.score << '\t' << item_label(item) << '\t'
                  << item.text << '\n';
      }
      std::cout << "token total " << result.token_total << '\n';
      if (!search.out.empty()) {
        RetrievalSpec spec;
        if (use_budget) {
          spec.budget_words = search.budget;
        } else {
          spec.k = search.k;
        }
        write_results(search.out, std::span(&result, 1), spec);
        std::cout << "wrote " << search.out << '\n';
      }

    } else if (app.got_subcommand(batch_cmd)) {
      std::vector<std::string> problems;
      const bool use_budget = batch_cmd->count("--budget-words") > 0;
      if (use_budget && batch_cmd->count("--k") > 0)
        problems.push_back("set exactly one of --k and --budget-words");
      fail_config(problems);

      const Encoder encoder = make_encoder(batch.enc);
      const VectorIndex index = VectorIndex::load(batch.index);
      const Corpus corpus = load_corpus(batch.corpus);
      const TextResolver texts(corpus.passages);
      const std::vector<Query> queries = load_queries(batch.queries);

      std::vector<RetrievalResult> results;
      results.reserve(queries.size());
      for (const Query& q : queries) {
        results.push_back(use_budget
                              ? retrieve_word_budget(index, texts, encoder, q.id, q.question,
                                                     batch.budget, threads)
                              : retrieve(index, texts, encoder, q.id, q.question, batch.k,
                                         threads));
      }
      RetrievalSpec spec;
      if (use_budget) {
        spec.budget_words = batch.budget;
      } else {
        spec.k = batch.k;
      }
      write_results(batch.out, results, spec);
      std::cout << "wrote " << batch.out << " (" << results.size() << " queries)\n";

    } else if (app.got_subcommand(eval_cmd)) {
      std::vector<std::string> problems;
      const bool have_results = eval_cmd->count("--results") > 0;
      const bool have_index = eval_cmd->count("--index") > 0;
      if (have_results == have_index)
        problems.push_back("set exactly one of --results and --index");
      if (have_index && eval_cmd->count("--corpus") == 0)
        problems.push_back("--index requires --corpus for text resolution");
      const bool use_budget = eval_cmd->count("--budget-words") > 0;
      if (use_budget && eval_cmd->count("--k") > 0)
        problems.push_back("set exactly one of --k and --budget-words");
      fail_config(problems);

      const std::vector<Query> queries = load_queries(eval_o.queries);
      const AnswerMap answers = answers_by_query(queries);

      std::vector<RetrievalResult> results;
      if (have_results) {
        results = read_results(eval_o.results);
      } else {
        const Encoder encoder = make_encoder(eval_o.enc);
        const VectorIndex index = VectorIndex::load(eval_o.index);
        const Corpus corpus = load_corpus(eval_o.corpus);
        const TextResolver texts(corpus.passages);
        results.reserve(queries.size());
        for (const Query& q : queries) {
          results.push_back(use_budget
                                ? retrieve_word_budget(index, texts, encoder, q.id, q.question,
                                                       eval_o.budget, threads)
                                : retrieve(index, texts, encoder, q.id, q.question, eval_o.k,
                                           threads));
        }
      }

      EvalReport report = evaluate(results, answers, parse_ks(eval_o.ks));
      if (!eval_o.generations.empty())
        score_generations(report, read_generations(eval_o.generations), answers);
      write_report(eval_o.out, report);

      nlohmann::json summary{{"mean_recall", report.mean_recall},
                             {"mean_tokens", report.mean_tokens}};
      for (const auto& [k, recall] : report.recall_at_k)
        summary["recall@" + std::to_string(k)] = recall;
      if (report.accuracy) summary["accuracy"] = *report.accuracy;
      if (report.rouge) summary["rouge_l"] = *report.rouge;
      std::cout << summary.dump() << '\n';
      std::cout << "wrote " << eval_o.out << '\n';

    } else if (app.got_subcommand(sweep_cmd)) {
      const Encoder encoder = make_encoder(sweep_o.enc);
      const Corpus corpus = load_corpus(sweep_o.corpus);
      const std::vector<Query> queries = load_queries(sweep_o.queries);
      const std::vector<double> alphas = parse_alphas(sweep_o.alphas);

      const AlphaSweep result =
          sweep_alpha(corpus.passages, encoder, queries, alphas, sweep_o.k, threads);
      write_sweep_csv(sweep_o.out, result);
      for (std::size_t i = 0; i < result.alphas.size(); ++i)
        std::cout << result.alphas[i] << '\t' << result.recall[i] << '\n';
      std::cout << "wrote " << sweep_o.out << " (" << result.alphas.size() << " rows)\n";

    } else if (app.got_subcommand(gen_cmd)) {
      GenConfig cfg;
      cfg.endpoint = gen.endpoint;
      cfg.model = gen.model;
      cfg.temperature = gen.temperature;
      cfg.max_output_tokens = gen.max_output_tokens;
      cfg.seed = gen.seed;
      cfg.timeout = std::chrono::milliseconds(gen.timeout_ms);
      cfg.max_retries = gen.max_retries;
      const GenClient client(cfg);
      const PromptTemplate tmpl = PromptTemplate::load(gen.template_path);

      const std::vector<Query> queries = load_queries(gen.queries);
      std::unordered_map<std::string, std::vector<std::string>> contexts;
      if (!gen.results.empty()) {
        for (const RetrievalResult& r : read_results(gen.results)) {
          std::vector<std::string>& texts = contexts[r.query_id];
          for (const RetrievedItem& item : r.items) texts.push_back(item.text);
        }
      }

      std::vector<Generation> generations;
      generations.reserve(queries.size());
      for (const Query& q : queries) {
        const auto it = contexts.find(q.id);
        const std::span<const std::string> items =
            it == contexts.end() ? std::span<const std::string>() : std::span(it->second);
        const std::string prompt = assemble_prompt(tmpl, q.question, items);
        const std::string output = gen.plain
                                       ? client.generate(prompt)
                                       : client.generate(assemble_messages(tmpl, q.question,
                                                                           items));
        generations.push_back({q.id, count_tokens(prompt), output});
      }
      write_generations(gen.out, generations);
      std::cout << "wrote " << gen.out << " (" << generations.size() << " generations)\n";
    }
    return 0;

  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool config_class =
        e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::IncompatibleIndex;
    return config_class ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
