#include "prag/index.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <queue>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "prag/detail/io.hpp"
#include "prag/detail/parallel.hpp"

namespace prag {

namespace fs = std::filesystem;

std::string_view mode_name(IndexMode mode) {
  return mode == IndexMode::Sentence ? "sentence" : "passage";
}

std::span<const float> VectorIndex::row_values(std::size_t row) const {
  if (row >= meta_.size())
    throw std::out_of_range("row " + std::to_string(row) + " of " + std::to_string(meta_.size()));
  return {data_.data() + row * dim_, dim_};
}

namespace {

struct Cand {
  double score;
  std::size_t row;
};

// Total order over candidates: higher score first, then lower row.
bool better(const Cand& a, const Cand& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.row < b.row;
}

}  // namespace

std::vector<Hit> VectorIndex::search(const DenseVector& query, int k, int threads) const {
  if (k < 1) throw Error(ErrorCode::BadK, "k must be >= 1, got " + std::to_string(k));
  if (query.dim() != dim_)
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(query.dim()) +
                                            " vs index dim " + std::to_string(dim_));

  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), rows());
  std::vector<float> q(dim_);
  for (std::size_t i = 0; i < dim_; ++i) q[i] = static_cast<float>(query.values[i]);

  // Each block keeps its own exact top-kk; the merge below re-sorts under the
  // same total order, so the outcome is independent of the block layout.
  std::vector<std::vector<Cand>> partial(
      static_cast<std::size_t>(detail::resolve_threads(threads)));
  detail::parallel_blocks(rows(), threads, [&](int worker, std::size_t begin, std::size_t end) {
    const auto worse = [](const Cand& a, const Cand& b) { return better(a, b); };
    std::priority_queue<Cand, std::vector<Cand>, decltype(worse)> heap(worse);
    for (std::size_t row = begin; row < end; ++row) {
      const float* values = data_.data() + row * dim_;
      float acc = 0.0f;
      for (std::size_t i = 0; i < dim_; ++i) acc += values[i] * q[i];
      const Cand cand{static_cast<double>(acc), row};
      if (heap.size() < kk) {
        heap.push(cand);
      } else if (better(cand, heap.top())) {
        heap.pop();
        heap.push(cand);
      }
    }
    auto& mine = partial[static_cast<std::size_t>(worker)];
    mine.reserve(heap.size());
    while (!heap.empty()) {
      mine.push_back(heap.top());
      heap.pop();
    }
  });

  std::vector<Cand> merged;
  merged.reserve(kk * partial.size());
  for (const auto& block : partial) merged.insert(merged.end(), block.begin(), block.end());
  std::sort(merged.begin(), merged.end(), better);
  merged.resize(std::min(merged.size(), kk));

  std::vector<Hit> hits;
  hits.reserve(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i)
    hits.push_back({merged[i].row, merged[i].score, static_cast<int>(i) + 1});
  return hits;
}

void VectorIndex::save(const fs::path& dir) const {
  fs::create_directories(dir);
  detail::atomic_write(dir / "vectors.bin", [&](std::ostream& out) {
    out.write("PRAG", 4);
    detail::write_u32(out, 1);
    detail::write_u32(out, static_cast<std::uint32_t>(dim_));
    detail::write_u64(out, rows());
    out.put(static_cast<char>(mode_));
    for (const float v : data_) detail::write_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  detail::atomic_write(dir / "meta.jsonl", [&](std::ostream& out) {
    for (const RowMeta& m : meta_) {
      nlohmann::json rec{{"passage_id", m.passage_id}};
      rec["sent_index"] = m.sent_index ? nlohmann::json(*m.sent_index) : nlohmann::json(nullptr);
      out << rec.dump() << '\n';
    }
  });
  detail::atomic_write(dir / "header.json", [&](std::ostream& out) {
    const nlohmann::json header{
        {"alpha", alpha_}, {"backend_id", backend_id_}, {"built_at", built_at_}};
    out << header.dump(2) << '\n';
  });
}

VectorIndex VectorIndex::load(const fs::path& dir) {
  VectorIndex index;
  const fs::path vec_path = dir / "vectors.bin";
  {
    std::ifstream in(vec_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + vec_path.string());
    char magic[4];
    if (!in.read(magic, 4))
      throw Error(ErrorCode::TruncatedFile, vec_path.string() + ": missing magic");
    if (std::string_view(magic, 4) != "PRAG")
      throw Error(ErrorCode::FormatError, vec_path.string() + ": bad magic, expected PRAG");
    const std::uint32_t version = detail::read_u32(in, vec_path.string() + " version");
    if (version != 1)
      throw Error(ErrorCode::FormatError,
                  vec_path.string() + ": unsupported version " + std::to_string(version));
    const std::uint32_t dim = detail::read_u32(in, vec_path.string() + " dim");
    if (dim == 0) throw Error(ErrorCode::FormatError, vec_path.string() + ": dim is zero");
    const std::uint64_t rows = detail::read_u64(in, vec_path.string() + " row count");
    if (rows == 0) throw Error(ErrorCode::EmptyIndex, vec_path.string() + ": zero rows");
    const int mode_byte = in.get();
    if (mode_byte == std::ifstream::traits_type::eof())
      throw Error(ErrorCode::TruncatedFile, vec_path.string() + ": missing mode byte");
    if (mode_byte != 0 && mode_byte != 1)
      throw Error(ErrorCode::FormatError,
                  vec_path.string() + ": bad mode byte " + std::to_string(mode_byte));

    const auto data_start = in.tellg();
    in.seekg(0, std::ios::end);
    const std::uint64_t available = static_cast<std::uint64_t>(in.tellg() - data_start);
    in.seekg(data_start);
    if (rows > available / (static_cast<std::uint64_t>(dim) * 4))
      throw Error(ErrorCode::TruncatedFile,
                  vec_path.string() + ": header promises " + std::to_string(rows) +
                      " rows but the file is too short");

    index.dim_ = dim;
    index.mode_ = static_cast<IndexMode>(mode_byte);
    index.data_.resize(static_cast<std::size_t>(rows) * dim);
    for (auto& v : index.data_)
      v = std::bit_cast<float>(detail::read_u32(in, vec_path.string() + " vector data"));
    if (in.peek() != std::ifstream::traits_type::eof())
      throw Error(ErrorCode::FormatError, vec_path.string() + ": trailing bytes after last row");
    index.meta_.reserve(rows);
  }

  const fs::path meta_path = dir / "meta.jsonl";
  detail::for_each_jsonl(meta_path, ErrorCode::FormatError,
                         [&](std::size_t lineno, const nlohmann::json& rec) {
    const std::string where = meta_path.string() + " line " + std::to_string(lineno);
    if (!rec.is_object() || !rec.contains("passage_id") || !rec["passage_id"].is_string())
      throw Error(ErrorCode::FormatError, where + ": expected a string 'passage_id'");
    RowMeta m{rec["passage_id"].get<std::string>(), std::nullopt};
    const auto it = rec.find("sent_index");
    if (it == rec.end())
      throw Error(ErrorCode::FormatError, where + ": missing 'sent_index'");
    if (it->is_number_integer()) {
      m.sent_index = it->get<int>();
    } else if (!it->is_null()) {
      throw Error(ErrorCode::FormatError, where + ": 'sent_index' must be an integer or null");
    }
    index.meta_.push_back(std::move(m));
  });
  const std::size_t expected = index.data_.size() / index.dim_;
  if (index.meta_.size() != expected)
    throw Error(ErrorCode::FormatError, meta_path.string() + " has " +
                                            std::to_string(index.meta_.size()) + " rows, " +
                                            vec_path.string() + " has " +
                                            std::to_string(expected));

  const fs::path header_path = dir / "header.json";
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(detail::read_file(header_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::FormatError, header_path.string() + ": " + e.what());
  }
  if (!header.is_object() || !header.contains("alpha") || !header["alpha"].is_number() ||
      !header.contains("backend_id") || !header["backend_id"].is_string() ||
      !header.contains("built_at") || !header["built_at"].is_string())
    throw Error(ErrorCode::FormatError,
                header_path.string() + ": expected {alpha, backend_id, built_at}");
  const double alpha = header["alpha"].get<double>();
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error(ErrorCode::FormatError,
                header_path.string() + ": alpha " + std::to_string(alpha) + " out of [0, 1]");
  index.alpha_ = alpha;
  index.backend_id_ = header["backend_id"].get<std::string>();
  index.built_at_ = header["built_at"].get<std::string>();
  return index;
}

IndexBuilder::IndexBuilder(int dim, IndexMode mode, Alpha alpha, std::string backend_id) {
  if (dim < 1)
    throw Error(ErrorCode::ConfigError, "dim must be >= 1, got " + std::to_string(dim));
  index_.dim_ = static_cast<std::size_t>(dim);
  index_.mode_ = mode;
  index_.alpha_ = alpha.value();
  index_.backend_id_ = std::move(backend_id);
}

void IndexBuilder::add(RowMeta meta, const DenseVector& vec) {
  if (finished_) throw std::logic_error("IndexBuilder::add after finish");
  if (vec.dim() != index_.dim_)
    throw Error(ErrorCode::DimMismatch, "row " + std::to_string(index_.meta_.size()) +
                                            " has dim " + std::to_string(vec.dim()) +
                                            ", index dim is " + std::to_string(index_.dim_));
  for (const double v : vec.values) index_.data_.push_back(static_cast<float>(v));
  index_.meta_.push_back(std::move(meta));
}

VectorIndex IndexBuilder::finish() {
  if (finished_) throw std::logic_error("IndexBuilder::finish called twice");
  if (index_.meta_.empty()) throw Error(ErrorCode::EmptyIndex, "no rows added");
  index_.built_at_ = detail::iso8601_utc_now();
  finished_ = true;
  return std::move(index_);
}

}  // namespace prag
