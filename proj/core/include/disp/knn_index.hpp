#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "disp/text.hpp"

namespace disp {

struct Neighbor {
  std::uint32_t id = 0;
  float distance = 0.0f;  // squared Euclidean

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct KnnResult {
  std::vector<Neighbor> neighbors;  // ascending by (distance, id)
  std::size_t distance_evaluations = 0;
};

float squared_l2(std::span<const float> a, std::span<const float> b) noexcept;

// Exact scan over every corpus row; ties resolve to the lower row id.
KnnResult brute_force_knn(const EmbeddingCorpus& corpus, std::span<const float> query,
                          std::size_t num_neighbors);

struct HnswParams {
  std::size_t M = 16;
  std::size_t ef_construction = 200;
  std::uint64_t seed = 42;
};

// Layered navigable small-world graph over an embedding corpus. The corpus is
// shared, not copied; the index only stores adjacency.
class HnswIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  static HnswIndex build(std::shared_ptr<const EmbeddingCorpus> corpus, const HnswParams& params);

  // Greedy width-1 descent through the upper layers, then a beam of width
  // ef_search on layer 0.
  KnnResult query(std::span<const float> vector, std::size_t num_neighbors,
                  std::size_t ef_search) const;

  void save(const std::filesystem::path& path) const;
  // Fails when the file is corrupt or was built over a different corpus.
  static HnswIndex load(const std::filesystem::path& path,
                        std::shared_ptr<const EmbeddingCorpus> corpus);

  std::size_t size() const noexcept { return levels_.size(); }
  int max_level() const noexcept { return max_level_; }
  std::uint32_t entry_point() const noexcept { return entry_point_; }
  int level(std::uint32_t node) const { return levels_.at(node); }
  const std::vector<std::uint32_t>& neighbors(int layer, std::uint32_t node) const {
    return links_.at(node).at(static_cast<std::size_t>(layer));
  }
  std::size_t max_degree(int layer) const noexcept { return layer == 0 ? 2 * params_.M : params_.M; }
  const HnswParams& params() const noexcept { return params_; }
  const EmbeddingCorpus& corpus() const noexcept { return *corpus_; }
  const std::shared_ptr<const EmbeddingCorpus>& corpus_ptr() const noexcept { return corpus_; }

  // Empty when every structural invariant holds, else the first violation.
  std::string audit() const;

  friend bool operator==(const HnswIndex& a, const HnswIndex& b) {
    return a.levels_ == b.levels_ && a.links_ == b.links_ && a.entry_point_ == b.entry_point_ &&
           a.max_level_ == b.max_level_;
  }

 private:
  struct Candidate {
    float distance;
    std::uint32_t id;
  };

  HnswIndex(std::shared_ptr<const EmbeddingCorpus> corpus, HnswParams params)
      : corpus_(std::move(corpus)), params_(params) {}

  void insert(std::uint32_t node);
  std::vector<Candidate> search_layer(std::span<const float> query,
                                      const std::vector<Candidate>& entry_points, std::size_t ef,
                                      int layer, std::size_t& evaluations) const;
  std::vector<Candidate> select_neighbors(const std::vector<Candidate>& candidates,
                                          std::size_t max_count) const;
  void shrink(std::uint32_t node, int layer);
  float distance(std::uint32_t a, std::uint32_t b) const noexcept;
  float distance(std::span<const float> q, std::uint32_t b) const noexcept;

  std::shared_ptr<const EmbeddingCorpus> corpus_;
  HnswParams params_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][layer]
  std::uint32_t entry_point_ = 0;
  int max_level_ = -1;
};

// Surface of the top-1 query result.
const Token& nearest_token(const HnswIndex& index, std::span<const float> embedding,
                           std::size_t ef_search = 64, float* distance = nullptr);

}  // namespace disp
