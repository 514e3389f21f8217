#include "loopgraph/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "loopgraph/binio.hpp"

namespace lg {

DescriptorIndex build_index(const DatasetRegistry& registry) {
  DescriptorIndex index;
  long total = 0;
  long dim = -1;
  for (const auto* ds : registry.datasets) {
    for (const auto& kf : ds->keyframes) {
      if (!kf.vlad.has_value()) {
        throw InvalidArgumentError("keyframe " + std::to_string(kf.id) + " of '" +
                                   ds->name + "' is missing its VLAD descriptor");
      }
      if (dim < 0) {
        dim = kf.vlad->values.size();
      } else if (kf.vlad->values.size() != dim) {
        throw DimensionError("mixed VLAD dimensionalities in index input");
      }
      ++total;
    }
  }
  index.descriptors.resize(total, std::max<long>(dim, 0));
  index.keys.reserve(total);
  long row = 0;
  for (uint32_t s = 0; s < registry.datasets.size(); ++s) {
    for (const auto& kf : registry.datasets[s]->keyframes) {
      index.descriptors.row(row) = kf.vlad->values.cast<float>().transpose();
      const NodeKey key{s, kf.id};
      index.keys.push_back(key);
      index.row_of.emplace(key, static_cast<int>(row));
      ++row;
    }
  }
  return index;
}

namespace {

std::vector<RetrievalResult> rank_row(const DescriptorIndex& index, int qrow,
                                      double k_pct, int exclusion_window) {
  const NodeKey query = index.keys[qrow];
  const Eigen::VectorXf q = index.descriptors.row(qrow).transpose();
  const bool q_zero = q.isZero(0.0f);

  std::vector<RetrievalResult> candidates;
  candidates.reserve(index.rows());
  for (int r = 0; r < index.rows(); ++r) {
    const NodeKey key = index.keys[r];
    if (key.seq == query.seq &&
        std::abs(static_cast<long>(key.id) - static_cast<long>(query.id)) <=
            exclusion_window) {
      continue;
    }
    float sim;
    const Eigen::VectorXf row = index.descriptors.row(r).transpose();
    if (q_zero || row.isZero(0.0f)) {
      sim = -1.0f;
    } else {
      sim = q.dot(row);
    }
    candidates.push_back({key, sim});
  }

  const int k = std::max(1, static_cast<int>(std::floor(k_pct / 100.0 * index.rows())));
  const auto cmp = [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.key < b.key;
  };
  const size_t keep = std::min<size_t>(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), cmp);
  candidates.resize(keep);
  return candidates;
}

}  // namespace

std::vector<RetrievalResult> query_topk(const DescriptorIndex& index, const NodeKey& query,
                                        double k_pct, int exclusion_window) {
  if (!(k_pct > 0) || k_pct > 100) {
    throw InvalidArgumentError("k_pct must be in (0, 100]");
  }
  if (index.rows() == 0) throw EmptyInputError("query_topk: empty index");
  auto it = index.row_of.find(query);
  if (it == index.row_of.end()) {
    throw InvalidArgumentError("query keyframe (" + std::to_string(query.seq) + ", " +
                               std::to_string(query.id) + ") not in index");
  }
  return rank_row(index, it->second, k_pct, exclusion_window);
}

void CliqueGraph::validate() const {
  const int n = node_count();
  if (edge_count() != n * (n - 1) / 2) {
    throw InvalidArgumentError("clique edge set is not complete");
  }
  int qflags = 0;
  for (size_t e = 0; e < edges.size(); ++e) {
    const auto [i, j] = edges[e];
    if (i == j || i < 0 || j < 0 || i >= n || j >= n) {
      throw InvalidArgumentError("clique has an invalid edge");
    }
    const bool incident = (nodes[i] == query) || (nodes[j] == query);
    if (static_cast<bool>(query_edge[e]) != incident) {
      throw InvalidArgumentError("query_edge flag inconsistent with incidence");
    }
    if (query_edge[e]) ++qflags;
  }
  if (qflags != n - 1) {
    throw InvalidArgumentError("query edge count must be n-1");
  }
}

CliqueGraph build_clique(const DescriptorIndex& index, const DatasetRegistry& registry,
                         const NodeKey& query, double k_pct, int exclusion_window) {
  const auto retrieved = query_topk(index, query, k_pct, exclusion_window);
  CliqueGraph clique;
  clique.query = query;
  clique.nodes.push_back(query);
  for (const auto& r : retrieved) {
    clique.nodes.push_back(r.key);
    clique.similarities.push_back(r.similarity);
  }
  const int n = clique.node_count();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      clique.edges.emplace_back(i, j);
      clique.query_edge.push_back(i == 0 || j == 0);
    }
  }
  clique.frames.reserve(n);
  for (const auto& key : clique.nodes) clique.frames.push_back(&registry.get(key));
  clique.validate();
  return clique;
}

std::vector<CliqueGraph> build_cliques_all(const DescriptorIndex& index,
                                           const DatasetRegistry& registry, double k_pct,
                                           int exclusion_window) {
  std::vector<CliqueGraph> cliques(index.rows());
#pragma omp parallel for schedule(dynamic, 16)
  for (int r = 0; r < index.rows(); ++r) {
    cliques[r] = build_clique(index, registry, index.keys[r], k_pct, exclusion_window);
  }
  return cliques;
}

std::vector<CliqueGraph> build_cliques_all_serial(const DescriptorIndex& index,
                                                  const DatasetRegistry& registry,
                                                  double k_pct, int exclusion_window) {
  std::vector<CliqueGraph> cliques;
  cliques.reserve(index.rows());
  for (int r = 0; r < index.rows(); ++r) {
    cliques.push_back(
        build_clique(index, registry, index.keys[r], k_pct, exclusion_window));
  }
  return cliques;
}

void save_index(const DescriptorIndex& index, const std::string& path) {
  BinWriter w(path);
  w.magic("LGIX");
  w.u32(static_cast<uint32_t>(index.rows()));
  w.u32(static_cast<uint32_t>(index.dim()));
  for (const auto& key : index.keys) {
    w.u32(key.seq);
    w.u32(key.id);
  }
  for (int r = 0; r < index.rows(); ++r) {
    for (int d = 0; d < index.dim(); ++d) w.f32(index.descriptors(r, d));
  }
  w.close();
}

DescriptorIndex load_index(const std::string& path) {
  BinReader r(path);
  r.expect_magic("LGIX");
  const uint32_t rows = r.u32();
  const uint32_t dim = r.u32();
  r.expect_exact_remaining(static_cast<uint64_t>(rows) * (8 + 4ull * dim),
                           "id table + descriptor matrix");
  DescriptorIndex index;
  index.keys.resize(rows);
  for (uint32_t i = 0; i < rows; ++i) {
    index.keys[i].seq = r.u32();
    index.keys[i].id = r.u32();
    index.row_of.emplace(index.keys[i], static_cast<int>(i));
  }
  index.descriptors.resize(rows, dim);
  for (uint32_t i = 0; i < rows; ++i) {
    for (uint32_t d = 0; d < dim; ++d) index.descriptors(i, d) = r.f32();
  }
  if (!index.descriptors.allFinite()) {
    throw NonFiniteError(path + ": index matrix contains non-finite values");
  }
  return index;
}

}  // namespace lg
