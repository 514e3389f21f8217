#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "loopgraph/keyframe.hpp"

namespace lg {

enum class Metric : uint8_t { kCosine = 0, kEuclidean = 1 };

Metric metric_from_string(const std::string& s);
std::string metric_to_string(Metric m);

struct Vocabulary {
  Eigen::MatrixXf centroids;  // N_C x N_KD; unit rows under the cosine metric
  Metric metric = Metric::kCosine;
  uint64_t seed = 0;

  int clusters() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
  void validate() const;
};

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // stop when max centroid movement falls below
};

struct KMeansStats {
  std::vector<double> cost_history;  // cost after each assignment step
  int iterations = 0;
};

constexpr int kDefaultVladClusters = 64;
constexpr int kMaxKeypointsPerImage = 2048;

// Standard k-means with k-means++ initialization, deterministic under `seed`.
// Under the cosine metric the rows are L2-normalized first and centroids are
// renormalized after every update (spherical k-means). Empty clusters are
// re-seeded from the point farthest from its assigned centroid.
Vocabulary fit_vocabulary(const Eigen::MatrixXf& descriptors, int n_clusters,
                          Metric metric, uint64_t seed,
                          const KMeansOptions& options = {},
                          KMeansStats* stats = nullptr);

// Stacks descriptors from all keyframes, subsampling each keyframe to at most
// max_per_image rows (deterministic under seed).
Eigen::MatrixXf stack_descriptors(const std::vector<const SequenceDataset*>& datasets,
                                  int max_per_image, uint64_t seed);

// Hard assignment: argmax cosine similarity / argmin Euclidean distance,
// ties broken by the lowest index.
int assign(const Eigen::VectorXd& descriptor, const Vocabulary& vocab);

struct VladOptions {
  bool intra_normalize = true;
  // Weights each residual by cos(f, c_j) instead of using the plain residual.
  bool cosine_weighted = false;
};

// Sum of residuals to the assigned centroid per cluster, intra-normalized per
// block, concatenated, then globally L2-normalized. Accumulation follows a
// canonical row order so the result is bitwise invariant to row permutations.
VladDescriptor compute_vlad(const DescriptorMatrix& descriptors, const Vocabulary& vocab,
                            const VladOptions& options = {});

// Cosine similarity in [-1, 1]; zero descriptors sort last (returns -1).
double vlad_similarity(const VladDescriptor& a, const VladDescriptor& b);

// Fills kf.vlad for every keyframe. The parallel variant distributes frames
// across OpenMP workers; results are identical to the serial reference.
void compute_vlad_batch(SequenceDataset& dataset, const Vocabulary& vocab,
                        const VladOptions& options = {});
void compute_vlad_batch_serial(SequenceDataset& dataset, const Vocabulary& vocab,
                               const VladOptions& options = {});

// Vocabulary file: "LGVC" | u32 N_C | u32 N_KD | u8 metric | u64 seed |
// f32 centroids row-major, little-endian.
void save_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

}  // namespace lg
