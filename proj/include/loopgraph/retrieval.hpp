#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loopgraph/keyframe.hpp"

namespace lg {

// Keyframes are addressed by (sequence ordinal, keyframe id); the ordinal is
// the position of the sequence in the registry/loading order.
struct NodeKey {
  uint32_t seq = 0;
  uint32_t id = 0;
  auto operator<=>(const NodeKey&) const = default;
};

struct DatasetRegistry {
  std::vector<const SequenceDataset*> datasets;

  uint32_t add(const SequenceDataset* ds) {
    datasets.push_back(ds);
    return static_cast<uint32_t>(datasets.size() - 1);
  }
  const SequenceDataset& sequence(uint32_t ordinal) const {
    if (ordinal >= datasets.size()) {
      throw InvalidArgumentError("unknown sequence ordinal " + std::to_string(ordinal));
    }
    return *datasets[ordinal];
  }
  const Keyframe* find(const NodeKey& key) const {
    if (key.seq >= datasets.size()) return nullptr;
    return datasets[key.seq]->find(key.id);
  }
  const Keyframe& get(const NodeKey& key) const {
    const Keyframe* kf = find(key);
    if (!kf) {
      throw InvalidArgumentError("unknown keyframe (" + std::to_string(key.seq) + ", " +
                                 std::to_string(key.id) + ")");
    }
    return *kf;
  }
};

struct RetrievalResult {
  NodeKey key;
  float similarity = 0;
};

// Dense index over global VLAD descriptors (rows stored as f32, matching the
// persisted representation bit for bit).
struct DescriptorIndex {
  Eigen::MatrixXf descriptors;     // rows x dim
  std::vector<NodeKey> keys;       // row order
  std::map<NodeKey, int> row_of;

  int rows() const { return static_cast<int>(descriptors.rows()); }
  int dim() const { return static_cast<int>(descriptors.cols()); }
};

DescriptorIndex build_index(const DatasetRegistry& registry);

// k = max(1, floor(k_pct/100 * rows)). Excludes the query row and any
// same-sequence row whose id is within exclusion_window of the query id.
// Sorted by descending similarity, ties by (sequence ordinal, id).
std::vector<RetrievalResult> query_topk(const DescriptorIndex& index, const NodeKey& query,
                                        double k_pct, int exclusion_window);

struct CliqueGraph {
  NodeKey query;
  std::vector<NodeKey> nodes;             // query first, then retrieval rank order
  std::vector<std::pair<int, int>> edges; // complete, i < j over node indices
  std::vector<char> query_edge;           // per edge, incident to the query node
  std::vector<float> similarities;        // per retrieved node (nodes[1..])
  std::vector<const Keyframe*> frames;    // resolved per node

  int node_count() const { return static_cast<int>(nodes.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
  void validate() const;
};

CliqueGraph build_clique(const DescriptorIndex& index, const DatasetRegistry& registry,
                         const NodeKey& query, double k_pct, int exclusion_window);

// One clique per index row, in row order. Parallel and serial variants yield
// identical output.
std::vector<CliqueGraph> build_cliques_all(const DescriptorIndex& index,
                                           const DatasetRegistry& registry, double k_pct,
                                           int exclusion_window);
std::vector<CliqueGraph> build_cliques_all_serial(const DescriptorIndex& index,
                                                  const DatasetRegistry& registry,
                                                  double k_pct, int exclusion_window);

constexpr double kDefaultRetrievalPct = 1.0;
constexpr int kDefaultExclusionWindow = 50;

// Index file: "LGIX" | u32 rows | u32 dim | (u32 seq, u32 id) per row |
// f32 matrix row-major, little-endian.
void save_index(const DescriptorIndex& index, const std::string& path);
DescriptorIndex load_index(const std::string& path);

}  // namespace lg
