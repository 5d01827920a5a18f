#include "prag/encoder.hpp"

#include <atomic>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "prag/detail/io.hpp"
#include "prag/detail/parallel.hpp"

namespace prag {

namespace {

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::string join_config_problems(const std::vector<std::string>& problems) {
  std::string joined;
  for (const std::string& p : problems) {
    if (!joined.empty()) joined += "; ";
    joined += p;
  }
  return joined;
}

}  // namespace

double dot(const DenseVector& a, const DenseVector& b) {
  if (a.dim() != b.dim())
    throw Error(ErrorCode::DimMismatch, "dot of dim " + std::to_string(a.dim()) + " and " +
                                            std::to_string(b.dim()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

Alpha::Alpha(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0))
    throw Error(ErrorCode::ConfigError, "alpha must be in [0, 1], got " + std::to_string(value));
}

DenseVector compose_weighted(const DenseVector& core, const DenseVector* context, Alpha alpha) {
  if (context == nullptr) return core;
  if (core.dim() != context->dim())
    throw Error(ErrorCode::DimMismatch, "core dim " + std::to_string(core.dim()) +
                                            " vs context dim " + std::to_string(context->dim()));
  const double a = alpha.value();
  if (a == 1.0) return core;
  if (a == 0.0) return *context;

  DenseVector out;
  out.values.resize(core.dim());
  for (std::size_t i = 0; i < core.dim(); ++i)
    out.values[i] = a * core.values[i] + (1.0 - a) * context->values[i];
  return out;
}

DenseVector compose_weighted(const DenseVector& core, const std::optional<DenseVector>& context,
                             Alpha alpha) {
  return compose_weighted(core, context ? &*context : nullptr, alpha);
}

DenseVector test_hash_embed(std::string_view text, int dim) {
  if (dim < 1)
    throw Error(ErrorCode::ConfigError, "dim must be positive, got " + std::to_string(dim));

  DenseVector out;
  out.values.assign(static_cast<std::size_t>(dim), 0.0);

  std::uint64_t hash = kFnvBasis;
  bool in_token = false;
  auto commit = [&] {
    const std::size_t bucket = hash % static_cast<std::uint64_t>(dim);
    out.values[bucket] += (hash >> 63) ? -1.0 : 1.0;
    hash = kFnvBasis;
    in_token = false;
  };
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      hash ^= static_cast<std::uint64_t>(std::tolower(c));
      hash *= kFnvPrime;
      in_token = true;
    } else if (in_token) {
      commit();
    }
  }
  if (in_token) commit();

  double norm_sq = 0.0;
  for (const double v : out.values) norm_sq += v * v;
  if (norm_sq == 0.0)
    throw Error(ErrorCode::ZeroText, "text hashes to the zero vector: '" +
                                         std::string(text.substr(0, 64)) + "'");
  const double norm = std::sqrt(norm_sq);
  for (double& v : out.values) v /= norm;
  return out;
}

EncoderBackend parse_backend(std::string_view name) {
  if (name == "test-hash") return EncoderBackend::TestHash;
  if (name == "precomputed-file") return EncoderBackend::PrecomputedFile;
  if (name == "http-service") return EncoderBackend::HttpService;
  throw Error(ErrorCode::ConfigError, "unknown encoder backend '" + std::string(name) + "'");
}

std::string_view backend_name(EncoderBackend backend) {
  switch (backend) {
    case EncoderBackend::TestHash: return "test-hash";
    case EncoderBackend::PrecomputedFile: return "precomputed-file";
    case EncoderBackend::HttpService: return "http-service";
  }
  return "unknown";
}

void EncoderConfig::validate() const {
  std::vector<std::string> problems;
  if (dim < 1) problems.push_back("dim must be >= 1, got " + std::to_string(dim));
  if (batch_size < 1)
    problems.push_back("batch-size must be >= 1, got " + std::to_string(batch_size));
  if (max_in_flight < 1)
    problems.push_back("max-in-flight must be >= 1, got " + std::to_string(max_in_flight));
  if (backend == EncoderBackend::HttpService) {
    if (endpoint.empty()) {
      problems.push_back("http-service backend requires an endpoint");
    } else if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
      problems.push_back("endpoint must start with http:// or https://, got '" + endpoint + "'");
    }
  }
  if (backend == EncoderBackend::PrecomputedFile && vector_files.empty())
    problems.push_back("precomputed-file backend requires at least one vector file");
  if (!problems.empty()) throw Error(ErrorCode::ConfigError, join_config_problems(problems));
}

std::string EncoderConfig::backend_id() const {
  return std::string(backend_name(backend)) + "/" + std::to_string(dim);
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.backend != EncoderBackend::PrecomputedFile) return;
  for (const std::filesystem::path& file : cfg_.vector_files) {
    for (auto& [key, vec] : read_vector_file(file)) {
      if (static_cast<int>(vec.dim()) != cfg_.dim)
        throw Error(ErrorCode::DimMismatch,
                    file.string() + ": rows have dim " + std::to_string(vec.dim()) +
                        ", config says " + std::to_string(cfg_.dim));
      if (!precomputed_.emplace(key, std::move(vec)).second)
        throw Error(ErrorCode::DuplicateId,
                    file.string() + ": duplicate embedding key '" + key + "'");
    }
  }
}

namespace {

std::vector<DenseVector> http_encode(const EncoderConfig& cfg,
                                     std::span<const EncodeItem> items) {
  const detail::Endpoint ep = detail::split_endpoint(cfg.endpoint);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t nbatches = (items.size() + batch - 1) / batch;

  std::vector<DenseVector> out(items.size());
  std::atomic<std::size_t> next{0};
  std::mutex fail_mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    httplib::Client client(ep.base);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(30, 0);
    client.set_write_timeout(30, 0);
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= nbatches) return;
      const std::size_t begin = b * batch;
      const std::size_t end = std::min(items.size(), begin + batch);

      nlohmann::json body{{"texts", nlohmann::json::array()}};
      for (std::size_t i = begin; i < end; ++i) body["texts"].push_back(items[i].text);

      auto res = client.Post(ep.path, body.dump(), "application/json");
      if (!res)
        throw Error(ErrorCode::BackendError,
                    "embedding request failed: " + httplib::to_string(res.error()));
      if (res->status != 200)
        throw Error(ErrorCode::BackendError,
                    "embedding service returned status " + std::to_string(res->status));

      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ProtocolError,
                    std::string("embedding response is not JSON: ") + e.what());
      }
      const auto it = reply.find("embeddings");
      if (it == reply.end() || !it->is_array())
        throw Error(ErrorCode::ProtocolError, "embedding response missing 'embeddings' array");
      if (it->size() != end - begin)
        throw Error(ErrorCode::ProtocolError,
                    "asked for " + std::to_string(end - begin) + " embeddings, got " +
                        std::to_string(it->size()));
      for (std::size_t i = begin; i < end; ++i) {
        const nlohmann::json& row = (*it)[i - begin];
        if (!row.is_array() || row.size() != static_cast<std::size_t>(cfg.dim))
          throw Error(ErrorCode::DimMismatch,
                      "embedding row has dim " + std::to_string(row.size()) + ", expected " +
                          std::to_string(cfg.dim));
        out[i].values.reserve(row.size());
        for (const nlohmann::json& v : row) {
          if (!v.is_number())
            throw Error(ErrorCode::ProtocolError, "embedding value is not a number");
          out[i].values.push_back(v.get<double>());
        }
      }
    }
  };

  auto guarded = [&] {
    try {
      worker();
    } catch (...) {
      std::lock_guard lock(fail_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(cfg.max_in_flight), std::max<std::size_t>(nbatches, 1));
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(guarded);
  guarded();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace

std::vector<DenseVector> Encoder::encode_items(std::span<const EncodeItem> items,
                                               int threads) const {
  std::vector<DenseVector> out;
  switch (cfg_.backend) {
    case EncoderBackend::TestHash: {
      out.resize(items.size());
      detail::parallel_blocks(items.size(), threads,
                              [&](int, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
          out[i] = test_hash_embed(items[i].text, cfg_.dim);
      });
      break;
    }
    case EncoderBackend::PrecomputedFile: {
      out.reserve(items.size());
      for (const EncodeItem& item : items) {
        const std::string& key = item.key.empty() ? item.text : item.key;
        const auto it = precomputed_.find(key);
        if (it == precomputed_.end())
          throw Error(ErrorCode::MissingEmbedding, "no embedding for key '" + key + "'");
        out.push_back(it->second);
      }
      break;
    }
    case EncoderBackend::HttpService:
      out = http_encode(cfg_, items);
      break;
  }
  return out;
}

std::vector<DenseVector> Encoder::encode_batch(std::span<const std::string> texts,
                                               int threads) const {
  std::vector<EncodeItem> items;
  items.reserve(texts.size());
  for (const std::string& text : texts) items.push_back({text, {}});
  return encode_items(items, threads);
}

DenseVector Encoder::encode_one(const std::string& text, const std::string& key) const {
  const EncodeItem item{text, key};
  return encode_items(std::span(&item, 1)).at(0);
}

std::string unit_core_key(std::string_view passage_id, int sent_index) {
  return std::string(passage_id) + "#" + std::to_string(sent_index) + "#core";
}

std::string unit_context_key(std::string_view passage_id, int sent_index) {
  return std::string(passage_id) + "#" + std::to_string(sent_index) + "#context";
}

std::string query_key(std::string_view query_id) { return "query#" + std::string(query_id); }

void write_vector_file(const std::filesystem::path& path, int dim,
                       std::span<const std::pair<std::string, DenseVector>> rows) {
  if (dim < 1)
    throw Error(ErrorCode::ConfigError, "dim must be positive, got " + std::to_string(dim));
  for (const auto& [key, vec] : rows) {
    if (static_cast<int>(vec.dim()) != dim)
      throw Error(ErrorCode::DimMismatch, "row '" + key + "' has dim " +
                                              std::to_string(vec.dim()) + ", expected " +
                                              std::to_string(dim));
  }

  detail::atomic_write(path, [&](std::ostream& out) {
    out.write("PVEC", 4);
    detail::write_u32(out, 1);
    detail::write_u32(out, static_cast<std::uint32_t>(dim));
    detail::write_u64(out, rows.size());
    for (const auto& [key, vec] : rows) {
      for (const double v : vec.values)
        detail::write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  });
  detail::atomic_write(vector_file_sidecar(path), [&](std::ostream& out) {
    for (const auto& [key, vec] : rows) out << nlohmann::json{{"key", key}}.dump() << '\n';
  });
}

std::vector<std::pair<std::string, DenseVector>> read_vector_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  char magic[4];
  if (!in.read(magic, 4))
    throw Error(ErrorCode::TruncatedFile, path.string() + ": missing magic");
  if (std::string_view(magic, 4) != "PVEC")
    throw Error(ErrorCode::FormatError, path.string() + ": bad magic, expected PVEC");
  const std::uint32_t version = detail::read_u32(in, path.string() + " version");
  if (version != 1)
    throw Error(ErrorCode::FormatError,
                path.string() + ": unsupported version " + std::to_string(version));
  const std::uint32_t dim = detail::read_u32(in, path.string() + " dim");
  if (dim == 0) throw Error(ErrorCode::FormatError, path.string() + ": dim is zero");
  const std::uint64_t count = detail::read_u64(in, path.string() + " count");

  const auto data_start = in.tellg();
  in.seekg(0, std::ios::end);
  const std::uint64_t available = static_cast<std::uint64_t>(in.tellg() - data_start);
  in.seekg(data_start);
  if (count > available / (static_cast<std::uint64_t>(dim) * 4))
    throw Error(ErrorCode::TruncatedFile,
                path.string() + ": header promises " + std::to_string(count) +
                    " rows but the file is too short");

  std::vector<std::pair<std::string, DenseVector>> rows(count);
  for (std::uint64_t r = 0; r < count; ++r) {
    rows[r].second.values.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) {
      const std::uint32_t bits =
          detail::read_u32(in, path.string() + " row " + std::to_string(r));
      rows[r].second.values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  if (in.peek() != std::ifstream::traits_type::eof())
    throw Error(ErrorCode::FormatError, path.string() + ": trailing bytes after last row");

  std::vector<std::string> keys;
  keys.reserve(count);
  const std::filesystem::path sidecar = vector_file_sidecar(path);
  detail::for_each_jsonl(sidecar, ErrorCode::FormatError,
                         [&](std::size_t lineno, const nlohmann::json& rec) {
    if (!rec.is_object() || !rec.contains("key") || !rec["key"].is_string())
      throw Error(ErrorCode::FormatError, sidecar.string() + " line " +
                                              std::to_string(lineno) +
                                              ": expected {\"key\": str}");
    keys.push_back(rec["key"].get<std::string>());
  });
  if (keys.size() != count)
    throw Error(ErrorCode::FormatError,
                sidecar.string() + " has " + std::to_string(keys.size()) + " keys, " +
                    path.string() + " has " + std::to_string(count) + " rows");
  for (std::uint64_t r = 0; r < count; ++r) rows[r].first = std::move(keys[r]);
  return rows;
}

std::filesystem::path vector_file_sidecar(const std::filesystem::path& path) {
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".keys.jsonl");
  return sidecar;
}

}  // namespace prag
