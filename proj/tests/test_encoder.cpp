#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "prag/encoder.hpp"
#include "prag/errors.hpp"
#include "support.hpp"

using namespace prag;
using namespace prag::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected prag::Error");
  return ErrorCode::ConfigError;
}

/// In-process embedding service bound to an ephemeral localhost port.
class ScopedServer {
 public:
  explicit ScopedServer(httplib::Server& server) : server_(server) {
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    while (!server_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }

  ~ScopedServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint(const std::string& path = "/embed") const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

 private:
  httplib::Server& server_;
  int port_ = 0;
  std::thread thread_;
};

nlohmann::json index_embedding(const std::string& text, int dim) {
  auto row = nlohmann::json::array();
  row.push_back(std::stod(text.substr(1)));
  for (int i = 1; i < dim; ++i) row.push_back(0.0);
  return row;
}

}  // namespace

TEST_CASE("dot accumulates in double and checks dims") {
  DenseVector a{{1.0, 2.0, 3.0}};
  DenseVector b{{4.0, -5.0, 6.0}};
  CHECK(dot(a, b) == 12.0);
  DenseVector c{{1.0}};
  CHECK(code_of([&] { dot(a, c); }) == ErrorCode::DimMismatch);
}

TEST_CASE("alpha validates its range") {
  CHECK(Alpha{}.value() == 1.0);
  CHECK(Alpha(0.0).value() == 0.0);
  CHECK(Alpha(1.0).value() == 1.0);
  CHECK(Alpha(0.8).value() == 0.8);
  CHECK(code_of([] { Alpha(-0.01); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { Alpha(1.01); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { Alpha(std::nan("")); }) == ErrorCode::ConfigError);
}

TEST_CASE("compose_weighted mixes core and context") {
  DenseVector core{{1.0, 0.0, 0.5}};
  DenseVector ctx{{0.0, 1.0, 0.25}};

  SUBCASE("interior alpha applies the convex combination") {
    auto mixed = compose_weighted(core, &ctx, Alpha(0.8));
    REQUIRE(mixed.dim() == 3);
    CHECK(mixed[0] == 0.8 * 1.0 + (1.0 - 0.8) * 0.0);
    CHECK(mixed[1] == 0.8 * 0.0 + (1.0 - 0.8) * 1.0);
    CHECK(mixed[2] == 0.8 * 0.5 + (1.0 - 0.8) * 0.25);
  }

  SUBCASE("missing context returns the core bitwise") {
    auto out = compose_weighted(core, nullptr, Alpha(0.3));
    CHECK(out.values == core.values);
  }

  SUBCASE("alpha endpoints skip arithmetic") {
    DenseVector odd{{0.1 + 0.2, 1.0 / 3.0}};
    DenseVector other{{0.7, 0.9}};
    CHECK(compose_weighted(odd, &other, Alpha(1.0)).values == odd.values);
    CHECK(compose_weighted(odd, &other, Alpha(0.0)).values == other.values);
  }

  SUBCASE("optional overload forwards") {
    std::optional<DenseVector> some = ctx;
    CHECK(compose_weighted(core, some, Alpha(0.5)).values ==
          compose_weighted(core, &ctx, Alpha(0.5)).values);
    CHECK(compose_weighted(core, std::nullopt, Alpha(0.5)).values == core.values);
  }

  SUBCASE("dim mismatch throws") {
    DenseVector shorter{{1.0}};
    CHECK(code_of([&] { compose_weighted(core, &shorter, Alpha(0.5)); }) ==
          ErrorCode::DimMismatch);
  }
}

TEST_CASE("test_hash_embed matches the frozen fnv oracle") {
  // FNV-1a 64 of "cat" is 0xf5e307190ce4a327: bucket 7 of 8, negative sign.
  // "dog" is 0xcaaf3b18f47478e9: bucket 1 of 8, negative sign.
  auto v = test_hash_embed("cat dog", 8);
  REQUIRE(v.dim() == 8);
  const double r = -1.0 / std::sqrt(2.0);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == r);
  CHECK(v[2] == 0.0);
  CHECK(v[3] == 0.0);
  CHECK(v[4] == 0.0);
  CHECK(v[5] == 0.0);
  CHECK(v[6] == 0.0);
  CHECK(v[7] == r);
}

TEST_CASE("test_hash_embed lowercases and splits on non-alphanumerics") {
  CHECK(test_hash_embed("Cat, dog!", 8).values == test_hash_embed("cat dog", 8).values);
  CHECK(test_hash_embed("cat\tdog\ncat", 16).values ==
        test_hash_embed("CAT DOG CAT", 16).values);
  auto once = test_hash_embed("cat", 8);
  auto twice = test_hash_embed("cat cat", 8);
  CHECK(once.values == twice.values);
}

TEST_CASE("test_hash_embed output is unit length") {
  auto v = test_hash_embed("a few more words to spread across buckets", 32);
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("test_hash_embed rejects token-free and cancelling text") {
  CHECK(code_of([] { test_hash_embed("... !!! ???", 8); }) == ErrorCode::ZeroText);
  // "the" and "a" share bucket 4 of 8 with opposite signs.
  CHECK(code_of([] { test_hash_embed("the a", 8); }) == ErrorCode::ZeroText);
  CHECK(code_of([] { test_hash_embed("", 8); }) == ErrorCode::ZeroText);
  CHECK(code_of([] { test_hash_embed("cat", 0); }) == ErrorCode::ConfigError);
}

TEST_CASE("backend names round-trip") {
  CHECK(parse_backend("test-hash") == EncoderBackend::TestHash);
  CHECK(parse_backend("precomputed-file") == EncoderBackend::PrecomputedFile);
  CHECK(parse_backend("http-service") == EncoderBackend::HttpService);
  CHECK(backend_name(EncoderBackend::TestHash) == "test-hash");
  CHECK(backend_name(EncoderBackend::PrecomputedFile) == "precomputed-file");
  CHECK(backend_name(EncoderBackend::HttpService) == "http-service");
  CHECK(code_of([] { parse_backend("word2vec"); }) == ErrorCode::ConfigError);
}

TEST_CASE("encoder config lists every violation at once") {
  EncoderConfig cfg;
  cfg.backend = EncoderBackend::HttpService;
  cfg.dim = 0;
  cfg.batch_size = 0;
  cfg.max_in_flight = 0;
  cfg.endpoint = "ftp://nope";
  try {
    cfg.validate();
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    const std::string what = e.what();
    CHECK(what.find("dim") != std::string::npos);
    CHECK(what.find("batch-size") != std::string::npos);
    CHECK(what.find("max-in-flight") != std::string::npos);
    CHECK(what.find("http://") != std::string::npos);
    CHECK(std::count(what.begin(), what.end(), ';') == 3);
  }

  EncoderConfig missing;
  missing.backend = EncoderBackend::HttpService;
  CHECK(code_of([&] { missing.validate(); }) == ErrorCode::ConfigError);

  EncoderConfig nofiles;
  nofiles.backend = EncoderBackend::PrecomputedFile;
  CHECK(code_of([&] { nofiles.validate(); }) == ErrorCode::ConfigError);

  EncoderConfig ok;
  CHECK_NOTHROW(ok.validate());
  CHECK(ok.backend_id() == "test-hash/64");
  ok.dim = 128;
  CHECK(ok.backend_id() == "test-hash/128");
}

TEST_CASE("encode_batch preserves order and honors threads") {
  EncoderConfig cfg;
  cfg.dim = 32;
  Encoder enc(cfg);
  std::vector<std::string> texts = {"alpha beam", "bravo cast", "charlie dune", "delta echo",
                                    "early frost", "fjord gale", "gamma hill"};
  auto serial = enc.encode_batch(texts, 1);
  REQUIRE(serial.size() == texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i)
    CHECK(serial[i].values == test_hash_embed(texts[i], 32).values);

  auto fanned = enc.encode_batch(texts, 4);
  REQUIRE(fanned.size() == serial.size());
  for (std::size_t i = 0; i < texts.size(); ++i)
    CHECK(fanned[i].values == serial[i].values);

  CHECK(enc.encode_one("alpha beam").values == serial[0].values);
}

TEST_CASE("unit and query keys are stable") {
  CHECK(unit_core_key("p7", 3) == "p7#3#core");
  CHECK(unit_context_key("p7", 3) == "p7#3#context");
  CHECK(query_key("q1") == "query#q1");
}

TEST_CASE("vector files round-trip through disk") {
  TempDir tmp;
  auto path = tmp.file("emb.pvec");
  CHECK(vector_file_sidecar(path).filename() == "emb.keys.jsonl");

  std::vector<std::pair<std::string, DenseVector>> rows = {
      {"k1", {{1.0, -2.5, 0.125}}},
      {"k2", {{0.1, 0.2, 0.3}}},
  };
  write_vector_file(path, 3, rows);
  auto back = read_vector_file(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == "k1");
  CHECK(back[1].first == "k2");
  CHECK(back[0].second.values ==
        std::vector<double>{1.0, -2.5, 0.125});  // exact in float32
  CHECK(back[1].second[0] == doctest::Approx(0.1).epsilon(1e-7));
  CHECK(back[1].second[2] == doctest::Approx(0.3).epsilon(1e-7));

  SUBCASE("dim mismatch rejected at write time") {
    std::vector<std::pair<std::string, DenseVector>> bad = {{"k", {{1.0, 2.0}}}};
    CHECK(code_of([&] { write_vector_file(tmp.file("bad.pvec"), 3, bad); }) ==
          ErrorCode::DimMismatch);
  }
}

TEST_CASE("vector file corruption is diagnosed") {
  TempDir tmp;
  auto path = tmp.file("emb.pvec");
  std::vector<std::pair<std::string, DenseVector>> rows = {{"k1", {{1.0, 2.0}}},
                                                           {"k2", {{3.0, 4.0}}}};
  write_vector_file(path, 2, rows);
  const auto pristine = slurp(path);

  SUBCASE("bad magic") {
    auto bytes = pristine;
    bytes[0] = 'X';
    spew(path, bytes);
    CHECK(code_of([&] { read_vector_file(path); }) == ErrorCode::FormatError);
  }

  SUBCASE("unsupported version") {
    auto bytes = pristine;
    bytes[4] = 9;
    spew(path, bytes);
    CHECK(code_of([&] { read_vector_file(path); }) == ErrorCode::FormatError);
  }

  SUBCASE("truncated payload") {
    auto bytes = pristine;
    bytes.resize(bytes.size() - 5);
    spew(path, bytes);
    CHECK(code_of([&] { read_vector_file(path); }) == ErrorCode::TruncatedFile);
  }

  SUBCASE("truncated header") {
    auto bytes = pristine;
    bytes.resize(9);
    spew(path, bytes);
    CHECK(code_of([&] { read_vector_file(path); }) == ErrorCode::TruncatedFile);
  }

  SUBCASE("trailing garbage") {
    auto bytes = pristine;
    bytes.push_back('\0');
    spew(path, bytes);
    CHECK(code_of([&] { read_vector_file(path); }) == ErrorCode::FormatError);
  }

  SUBCASE("sidecar key count mismatch") {
    auto sidecar = vector_file_sidecar(path);
    auto keys = slurp(sidecar);
    std::string extra = "{\"key\":\"k3\"}\n";
    keys.insert(keys.end(), extra.begin(), extra.end());
    spew(sidecar, keys);
    CHECK(code_of([&] { read_vector_file(path); }) == ErrorCode::FormatError);
  }
}

TEST_CASE("precomputed backend serves stored rows by key") {
  TempDir tmp;
  auto file = tmp.file("emb.pvec");
  std::vector<std::pair<std::string, DenseVector>> rows = {
      {"p1#0#core", {{1.0, 0.0}}},
      {"p1#0#context", {{0.0, 1.0}}},
      {"plain text row", {{0.5, 0.5}}},
  };
  write_vector_file(file, 2, rows);

  EncoderConfig cfg;
  cfg.backend = EncoderBackend::PrecomputedFile;
  cfg.dim = 2;
  cfg.vector_files = {file};
  Encoder enc(cfg);

  CHECK(enc.encode_one("ignored", "p1#0#core").values == std::vector<double>{1.0, 0.0});
  CHECK(enc.encode_one("plain text row").values == std::vector<double>{0.5, 0.5});

  std::vector<EncodeItem> items = {{"x", "p1#0#context"}, {"plain text row", ""}};
  auto out = enc.encode_items(items);
  REQUIRE(out.size() == 2);
  CHECK(out[0].values == std::vector<double>{0.0, 1.0});
  CHECK(out[1].values == std::vector<double>{0.5, 0.5});

  SUBCASE("missing keys are reported") {
    try {
      enc.encode_one("ignored", "nope");
      FAIL("expected Error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingEmbedding);
      CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }
  }

  SUBCASE("dim disagreement with the file is rejected") {
    EncoderConfig wrong = cfg;
    wrong.dim = 3;
    CHECK(code_of([&] { Encoder enc2(std::move(wrong)); }) == ErrorCode::DimMismatch);
  }

  SUBCASE("duplicate keys across files are rejected") {
    auto second = tmp.file("emb2.pvec");
    std::vector<std::pair<std::string, DenseVector>> dup = {{"p1#0#core", {{9.0, 9.0}}}};
    write_vector_file(second, 2, dup);
    EncoderConfig two = cfg;
    two.vector_files.push_back(second);
    CHECK(code_of([&] { Encoder enc2(std::move(two)); }) == ErrorCode::DuplicateId);
  }
}

TEST_CASE("http backend batches requests and reassembles order") {
  httplib::Server server;
  std::mutex seen_mutex;
  std::vector<std::vector<std::string>> batches;
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    std::vector<std::string> texts = body.at("texts").get<std::vector<std::string>>();
    nlohmann::json reply{{"embeddings", nlohmann::json::array()}};
    for (const auto& t : texts) reply["embeddings"].push_back(index_embedding(t, 4));
    {
      std::lock_guard lock(seen_mutex);
      batches.push_back(std::move(texts));
    }
    res.set_content(reply.dump(), "application/json");
  });
  ScopedServer scoped(server);

  EncoderConfig cfg;
  cfg.backend = EncoderBackend::HttpService;
  cfg.dim = 4;
  cfg.endpoint = scoped.endpoint();
  cfg.batch_size = 2;
  cfg.max_in_flight = 1;
  Encoder enc(cfg);

  std::vector<std::string> texts = {"t0", "t1", "t2", "t3", "t4"};
  auto out = enc.encode_batch(texts);
  REQUIRE(out.size() == 5);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i][0] == static_cast<double>(i));
    CHECK(out[i].dim() == 4);
  }

  REQUIRE(batches.size() == 3);
  CHECK(batches[0] == std::vector<std::string>{"t0", "t1"});
  CHECK(batches[1] == std::vector<std::string>{"t2", "t3"});
  CHECK(batches[2] == std::vector<std::string>{"t4"});
}

TEST_CASE("http backend fans out up to max_in_flight requests") {
  httplib::Server server;
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(60));
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json reply{{"embeddings", nlohmann::json::array()}};
    for (const auto& t : body.at("texts")) reply["embeddings"].push_back(index_embedding(t, 2));
    --active;
    res.set_content(reply.dump(), "application/json");
  });
  ScopedServer scoped(server);

  EncoderConfig cfg;
  cfg.backend = EncoderBackend::HttpService;
  cfg.dim = 2;
  cfg.endpoint = scoped.endpoint();
  cfg.batch_size = 1;
  cfg.max_in_flight = 4;
  Encoder enc(cfg);

  std::vector<std::string> texts = {"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"};
  auto out = enc.encode_batch(texts);
  REQUIRE(out.size() == 8);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i][0] == static_cast<double>(i));
  CHECK(peak.load() >= 2);
  CHECK(peak.load() <= 4);
}

TEST_CASE("http backend failures map to typed errors") {
  httplib::Server server;
  server.Post("/err500", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  server.Post("/notjson", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json at all", "application/json");
  });
  server.Post("/noarray", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"vectors": []})", "application/json");
  });
  server.Post("/shortrow", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json reply{{"embeddings", nlohmann::json::array()}};
    for (std::size_t i = 0; i < body.at("texts").size(); ++i)
      reply["embeddings"].push_back(nlohmann::json::array({1.0}));
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/misscount", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"embeddings": []})", "application/json");
  });
  server.Post("/notnumber", [](const httplib::Request& req, httplib::Response& res) {
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json reply{{"embeddings", nlohmann::json::array()}};
    for (std::size_t i = 0; i < body.at("texts").size(); ++i)
      reply["embeddings"].push_back(nlohmann::json::array({"x", 1.0}));
    res.set_content(reply.dump(), "application/json");
  });
  ScopedServer scoped(server);

  auto encode_via = [&](const std::string& path) {
    EncoderConfig cfg;
    cfg.backend = EncoderBackend::HttpService;
    cfg.dim = 2;
    cfg.endpoint = scoped.endpoint(path);
    Encoder enc(cfg);
    std::vector<std::string> texts = {"one", "two"};
    enc.encode_batch(texts);
  };

  CHECK(code_of([&] { encode_via("/err500"); }) == ErrorCode::BackendError);
  CHECK(code_of([&] { encode_via("/missing"); }) == ErrorCode::BackendError);
  CHECK(code_of([&] { encode_via("/notjson"); }) == ErrorCode::ProtocolError);
  CHECK(code_of([&] { encode_via("/noarray"); }) == ErrorCode::ProtocolError);
  CHECK(code_of([&] { encode_via("/misscount"); }) == ErrorCode::ProtocolError);
  CHECK(code_of([&] { encode_via("/shortrow"); }) == ErrorCode::DimMismatch);
  CHECK(code_of([&] { encode_via("/notnumber"); }) == ErrorCode::ProtocolError);

  EncoderConfig dead;
  dead.backend = EncoderBackend::HttpService;
  dead.dim = 2;
  dead.endpoint = "http://127.0.0.1:1/embed";
  Encoder enc(dead);
  std::vector<std::string> texts = {"one"};
  CHECK(code_of([&] { enc.encode_batch(texts); }) == ErrorCode::BackendError);
}
