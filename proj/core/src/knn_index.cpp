#include "disp/knn_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "disp/error.hpp"
#include "disp/random.hpp"

namespace disp {
namespace {

constexpr std::string_view kIndexMagic = "DISPHNSW";

// Reusable visit marks, one array per thread; an epoch bump clears it.
class VisitedMarks {
 public:
  void reset(std::size_t n) {
    if (marks_.size() < n) marks_.assign(n, 0);
    if (++epoch_ == 0) {
      std::fill(marks_.begin(), marks_.end(), 0);
      epoch_ = 1;
    }
  }
  // Returns true the first time a node is seen since reset().
  bool visit(std::uint32_t id) {
    if (marks_[id] == epoch_) return false;
    marks_[id] = epoch_;
    return true;
  }

 private:
  std::vector<std::uint32_t> marks_;
  std::uint32_t epoch_ = 0;
};

VisitedMarks& thread_marks() {
  thread_local VisitedMarks marks;
  return marks;
}

}  // namespace

float squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
  float sum = 0.0f;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

KnnResult brute_force_knn(const EmbeddingCorpus& corpus, std::span<const float> query,
                          std::size_t num_neighbors) {
  if (corpus.size() == 0) throw DataError("brute-force kNN over an empty corpus");
  if (query.size() != corpus.dim()) throw DataError("query dimension does not match corpus");
  KnnResult result;
  result.neighbors.reserve(corpus.size());
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    result.neighbors.push_back({static_cast<std::uint32_t>(r), squared_l2(query, corpus.vector(r))});
  }
  result.distance_evaluations = corpus.size();
  const std::size_t k = std::min(num_neighbors, corpus.size());
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(result.neighbors.begin(), result.neighbors.begin() + static_cast<std::ptrdiff_t>(k),
                    result.neighbors.end(), less);
  result.neighbors.resize(k);
  return result;
}

float HnswIndex::distance(std::uint32_t a, std::uint32_t b) const noexcept {
  return squared_l2(corpus_->vector(a), corpus_->vector(b));
}

float HnswIndex::distance(std::span<const float> q, std::uint32_t b) const noexcept {
  return squared_l2(q, corpus_->vector(b));
}

HnswIndex HnswIndex::build(std::shared_ptr<const EmbeddingCorpus> corpus, const HnswParams& params) {
  if (!corpus || corpus->size() == 0) throw DataError("cannot build an index over an empty corpus");
  if (params.M < 2) throw DataError("HNSW M must be at least 2");
  if (params.ef_construction < 1) throw DataError("ef_construction must be positive");
  if (corpus->size() > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError("corpus too large for 32-bit node ids");
  }

  HnswIndex index(std::move(corpus), params);
  const std::size_t n = index.corpus_->size();
  const double lambda = 1.0 / std::log(static_cast<double>(params.M));
  index.levels_.resize(n);
  index.links_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(i)));
    const int level = static_cast<int>(std::floor(-std::log(rng.uniform_open0()) * lambda));
    index.levels_[i] = level;
    index.links_[i].resize(static_cast<std::size_t>(level) + 1);
  }
  for (std::size_t i = 0; i < n; ++i) index.insert(static_cast<std::uint32_t>(i));
  return index;
}

void HnswIndex::insert(std::uint32_t node) {
  const int level = levels_[node];
  if (max_level_ < 0) {
    entry_point_ = node;
    max_level_ = level;
    return;
  }
  const auto q = corpus_->vector(node);
  std::size_t unused = 0;
  std::vector<Candidate> entry{{distance(q, entry_point_), entry_point_}};
  for (int layer = max_level_; layer > level; --layer) {
    entry = search_layer(q, entry, 1, layer, unused);
  }
  for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
    auto found = search_layer(q, entry, params_.ef_construction, layer, unused);
    const auto chosen = select_neighbors(found, params_.M);
    auto& own = links_[node][static_cast<std::size_t>(layer)];
    for (const auto& c : chosen) {
      own.push_back(c.id);
      links_[c.id][static_cast<std::size_t>(layer)].push_back(node);
    }
    for (const auto& c : chosen) {
      if (links_[c.id][static_cast<std::size_t>(layer)].size() > max_degree(layer)) shrink(c.id, layer);
    }
    entry = std::move(found);
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_point_ = node;
  }
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> query,
                                                          const std::vector<Candidate>& entry_points,
                                                          std::size_t ef, int layer,
                                                          std::size_t& evaluations) const {
  auto closer = [](const Candidate& a, const Candidate& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  auto farther = [&](const Candidate& a, const Candidate& b) { return closer(b, a); };
  // candidates: min-heap by distance; results: max-heap holding the best ef.
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(farther)> candidates(farther);
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(closer)> results(closer);

  auto& visited = thread_marks();
  visited.reset(size());
  for (const auto& e : entry_points) {
    if (!visited.visit(e.id)) continue;
    candidates.push(e);
    results.push(e);
    if (results.size() > ef) results.pop();
  }

  while (!candidates.empty()) {
    const Candidate current = candidates.top();
    if (closer(results.top(), current) && results.size() >= ef) break;
    candidates.pop();
    for (std::uint32_t next : links_[current.id][static_cast<std::size_t>(layer)]) {
      if (!visited.visit(next)) continue;
      const float d = distance(query, next);
      ++evaluations;
      const Candidate cand{d, next};
      if (results.size() < ef || closer(cand, results.top())) {
        candidates.push(cand);
        results.push(cand);
        if (results.size() > ef) results.pop();
      }
    }
  }

  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Keeps a candidate only if it is closer to the base node than to every
// neighbor already kept. Input must be ascending by distance to the base.
std::vector<HnswIndex::Candidate> HnswIndex::select_neighbors(const std::vector<Candidate>& candidates,
                                                              std::size_t max_count) const {
  std::vector<Candidate> kept;
  kept.reserve(max_count);
  for (const auto& c : candidates) {
    if (kept.size() >= max_count) break;
    bool good = true;
    for (const auto& k : kept) {
      if (distance(c.id, k.id) < c.distance) {
        good = false;
        break;
      }
    }
    if (good) kept.push_back(c);
  }
  return kept;
}

// Re-selects an over-full adjacency list and removes the dropped edges from
// both endpoints so every layer stays symmetric.
void HnswIndex::shrink(std::uint32_t node, int layer) {
  auto& list = links_[node][static_cast<std::size_t>(layer)];
  std::vector<Candidate> current;
  current.reserve(list.size());
  for (std::uint32_t other : list) current.push_back({distance(node, other), other});
  std::sort(current.begin(), current.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  });
  const auto kept = select_neighbors(current, max_degree(layer));
  std::vector<std::uint32_t> next;
  next.reserve(kept.size());
  for (const auto& k : kept) next.push_back(k.id);
  for (const auto& c : current) {
    if (std::find(next.begin(), next.end(), c.id) != next.end()) continue;
    auto& back = links_[c.id][static_cast<std::size_t>(layer)];
    back.erase(std::remove(back.begin(), back.end(), node), back.end());
  }
  list = std::move(next);
}

KnnResult HnswIndex::query(std::span<const float> vector, std::size_t num_neighbors,
                           std::size_t ef_search) const {
  if (size() == 0) throw DataError("query on an empty index");
  if (vector.size() != corpus_->dim()) throw DataError("query dimension does not match index");
  if (ef_search < num_neighbors) throw DataError("ef_search must be at least num_neighbors");
  KnnResult result;
  std::vector<Candidate> entry{{distance(vector, entry_point_), entry_point_}};
  result.distance_evaluations = 1;
  for (int layer = max_level_; layer > 0; --layer) {
    entry = search_layer(vector, entry, 1, layer, result.distance_evaluations);
  }
  const auto found = search_layer(vector, entry, std::max<std::size_t>(ef_search, 1), 0,
                                  result.distance_evaluations);
  const std::size_t k = std::min(num_neighbors, found.size());
  result.neighbors.reserve(k);
  for (std::size_t i = 0; i < k; ++i) result.neighbors.push_back({found[i].id, found[i].distance});
  return result;
}

std::string HnswIndex::audit() const {
  std::ostringstream err;
  const std::size_t n = size();
  int top = -1;
  for (std::size_t i = 0; i < n; ++i) top = std::max(top, levels_[i]);
  if (n > 0 && (top != max_level_ || levels_[entry_point_] != max_level_)) {
    err << "entry point " << entry_point_ << " does not hold the maximum level";
    return err.str();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (links_[i].size() != static_cast<std::size_t>(levels_[i]) + 1) {
      err << "node " << i << " is missing layers below its level";
      return err.str();
    }
    for (int layer = 0; layer <= levels_[i]; ++layer) {
      const auto& list = links_[i][static_cast<std::size_t>(layer)];
      if (list.size() > max_degree(layer)) {
        err << "node " << i << " exceeds the degree cap on layer " << layer;
        return err.str();
      }
      for (std::uint32_t other : list) {
        if (other >= n || other == i) {
          err << "node " << i << " has an invalid edge on layer " << layer;
          return err.str();
        }
        if (levels_[other] < layer) {
          err << "edge " << i << "-" << other << " reaches a node absent from layer " << layer;
          return err.str();
        }
        const auto& back = links_[other][static_cast<std::size_t>(layer)];
        if (std::find(back.begin(), back.end(), static_cast<std::uint32_t>(i)) == back.end()) {
          err << "edge " << i << "->" << other << " is not symmetric on layer " << layer;
          return err.str();
        }
      }
    }
  }
  return {};
}

void HnswIndex::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["n"] = size();
  header["k"] = corpus_->dim();
  header["M"] = params_.M;
  header["ef_construction"] = params_.ef_construction;
  header["seed"] = params_.seed;
  header["levels"] = levels_;
  header["max_level"] = max_level_;
  header["entry_point"] = entry_point_;
  header["metric"] = "squared_l2";
  header["corpus_hash"] = corpus_->content_hash();
  const std::string json = header.dump();

  detail::BinaryWriter w;
  w.bytes(kIndexMagic);
  w.scalar<std::uint32_t>(kFormatVersion);
  w.scalar<std::uint64_t>(json.size());
  w.bytes(json);
  for (int layer = 0; layer <= max_level_; ++layer) {
    for (std::size_t i = 0; i < size(); ++i) {
      if (levels_[i] < layer) continue;
      const auto& list = links_[i][static_cast<std::size_t>(layer)];
      w.scalar<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
      w.array(list.data(), list.size());
    }
  }
  w.write_to(path.string());
}

HnswIndex HnswIndex::load(const std::filesystem::path& path,
                          std::shared_ptr<const EmbeddingCorpus> corpus) {
  if (!corpus) throw DataError("load_index requires a corpus");
  detail::BinaryReader r(path.string());
  if (r.bytes(kIndexMagic.size()) != kIndexMagic) {
    throw CorruptFileError(r.source(), 0, "bad magic, not a DISPHNSW file");
  }
  const auto version_offset = r.offset();
  const auto version = r.scalar<std::uint32_t>();
  if (version != kFormatVersion) {
    throw VersionMismatchError(r.source(), version_offset,
                               "unsupported index version " + std::to_string(version));
  }
  const auto json_len = r.scalar<std::uint64_t>();
  const auto json_offset = r.offset();
  const auto json_text = r.bytes(json_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(r.source(), json_offset, std::string("bad header: ") + e.what());
  }

  HnswParams params;
  std::vector<int> levels;
  int max_level = -1;
  std::uint32_t entry_point = 0;
  std::uint64_t corpus_hash = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  try {
    n = header.at("n").get<std::size_t>();
    k = header.at("k").get<std::size_t>();
    params.M = header.at("M").get<std::size_t>();
    params.ef_construction = header.at("ef_construction").get<std::size_t>();
    params.seed = header.at("seed").get<std::uint64_t>();
    levels = header.at("levels").get<std::vector<int>>();
    max_level = header.at("max_level").get<int>();
    entry_point = header.at("entry_point").get<std::uint32_t>();
    corpus_hash = header.at("corpus_hash").get<std::uint64_t>();
    if (header.at("metric").get<std::string>() != "squared_l2") {
      throw CorruptFileError(r.source(), json_offset, "unsupported metric");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(r.source(), json_offset, std::string("bad header: ") + e.what());
  }
  if (levels.size() != n || (n > 0 && entry_point >= n)) {
    throw CorruptFileError(r.source(), json_offset, "inconsistent header");
  }
  if (n != corpus->size() || k != corpus->dim() || corpus_hash != corpus->content_hash()) {
    throw DataError("index " + r.source() + " was built over a different corpus");
  }

  HnswIndex index(std::move(corpus), params);
  index.levels_ = std::move(levels);
  index.max_level_ = max_level;
  index.entry_point_ = entry_point;
  index.links_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index.levels_[i] < 0 || index.levels_[i] > max_level) {
      throw CorruptFileError(r.source(), json_offset, "node level out of range");
    }
    index.links_[i].resize(static_cast<std::size_t>(index.levels_[i]) + 1);
  }
  for (int layer = 0; layer <= max_level; ++layer) {
    for (std::size_t i = 0; i < n; ++i) {
      if (index.levels_[i] < layer) continue;
      const auto count = r.scalar<std::uint32_t>();
      if (count > index.max_degree(layer)) r.fail("adjacency list exceeds degree cap");
      auto& list = index.links_[i][static_cast<std::size_t>(layer)];
      list.resize(count);
      r.array(list.data(), count);
      for (auto id : list) {
        if (id >= n) r.fail("edge endpoint out of range");
      }
    }
  }
  if (!r.at_end()) r.fail("trailing bytes after adjacency lists");
  return index;
}

const Token& nearest_token(const HnswIndex& index, std::span<const float> embedding,
                           std::size_t ef_search, float* distance) {
  const auto result = index.query(embedding, 1, std::max<std::size_t>(ef_search, 1));
  if (result.neighbors.empty()) throw DataError("query on an empty index");
  if (distance) *distance = result.neighbors.front().distance;
  return index.corpus().token(result.neighbors.front().id);
}

}  // namespace disp
