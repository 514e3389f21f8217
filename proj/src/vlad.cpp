#include "loopgraph/vlad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "loopgraph/binio.hpp"
#include "loopgraph/rng.hpp"

namespace lg {

Metric metric_from_string(const std::string& s) {
  if (s == "cosine") return Metric::kCosine;
  if (s == "euclidean") return Metric::kEuclidean;
  throw InvalidArgumentError("unknown metric '" + s + "'");
}

std::string metric_to_string(Metric m) {
  return m == Metric::kCosine ? "cosine" : "euclidean";
}

void Vocabulary::validate() const {
  if (clusters() < 1) throw InvalidArgumentError("vocabulary needs at least 1 cluster");
  if (!centroids.allFinite()) throw NonFiniteError("vocabulary centroids not finite");
  if (metric == Metric::kCosine) {
    for (int j = 0; j < clusters(); ++j) {
      if (std::abs(centroids.row(j).norm() - 1.0f) > 1e-5f) {
        throw InvalidArgumentError("cosine vocabulary centroid " + std::to_string(j) +
                                   " is not unit norm");
      }
    }
  }
}

namespace {

// Canonical processing order: row indices sorted by lexicographic row
// comparison. Aggregating in this order makes the sums bitwise invariant to
// any input row permutation.
std::vector<int> canonical_row_order(const Eigen::MatrixXd& rows) {
  std::vector<int> order(rows.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int d = 0; d < rows.cols(); ++d) {
      if (rows(a, d) != rows(b, d)) return rows(a, d) < rows(b, d);
    }
    return false;
  });
  return order;
}

int nearest_centroid_sq(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& x,
                        double* best_sq = nullptr) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int j = 0; j < centroids.rows(); ++j) {
    const double d = (centroids.row(j).transpose() - x).squaredNorm();
    if (d < bd) {
      bd = d;
      best = j;
    }
  }
  if (best_sq) *best_sq = bd;
  return best;
}

}  // namespace

Eigen::MatrixXf stack_descriptors(const std::vector<const SequenceDataset*>& datasets,
                                  int max_per_image, uint64_t seed) {
  int dim = 0;
  long total = 0;
  for (const auto* ds : datasets) {
    for (const auto& kf : ds->keyframes) {
      const int nk = kf.descriptors.count();
      if (nk == 0) continue;
      if (dim == 0) dim = kf.descriptors.dim();
      total += std::min(nk, max_per_image);
    }
  }
  Eigen::MatrixXf stacked(total, dim);
  long row = 0;
  for (size_t s = 0; s < datasets.size(); ++s) {
    for (const auto& kf : datasets[s]->keyframes) {
      const int nk = kf.descriptors.count();
      if (nk == 0) continue;
      if (nk <= max_per_image) {
        stacked.middleRows(row, nk) = kf.descriptors.values;
        row += nk;
      } else {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(s), kf.id));
        std::vector<int> idx(nk);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        idx.resize(max_per_image);
        std::sort(idx.begin(), idx.end());
        for (int i : idx) stacked.row(row++) = kf.descriptors.values.row(i);
      }
    }
  }
  return stacked;
}

Vocabulary fit_vocabulary(const Eigen::MatrixXf& descriptors, int n_clusters,
                          Metric metric, uint64_t seed, const KMeansOptions& options,
                          KMeansStats* stats) {
  const int n = static_cast<int>(descriptors.rows());
  const int dim = static_cast<int>(descriptors.cols());
  if (n_clusters < 1) throw InvalidArgumentError("n_clusters must be >= 1");
  if (n < n_clusters) {
    throw InvalidArgumentError("k-means needs at least " + std::to_string(n_clusters) +
                               " rows, got " + std::to_string(n));
  }
  if (!descriptors.allFinite()) {
    throw NonFiniteError("k-means input contains non-finite values");
  }

  Eigen::MatrixXd points = descriptors.cast<double>();
  if (metric == Metric::kCosine) {
    for (int i = 0; i < n; ++i) {
      const double nm = points.row(i).norm();
      if (nm > 0) points.row(i) /= nm;
    }
  }

  Rng rng(seed);
  Eigen::MatrixXd centroids(n_clusters, dim);

  // k-means++ seeding.
  centroids.row(0) = points.row(static_cast<int>(rng.uniform_int(n)));
  Eigen::VectorXd dist_sq(n);
  for (int i = 0; i < n; ++i) {
    dist_sq(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  }
  for (int j = 1; j < n_clusters; ++j) {
    const double total = dist_sq.sum();
    int pick;
    if (total <= 0) {
      pick = static_cast<int>(rng.uniform_int(n));
    } else {
      const double r = rng.uniform() * total;
      double acc = 0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist_sq(i);
        if (acc > r) {
          pick = i;
          break;
        }
      }
    }
    centroids.row(j) = points.row(pick);
    for (int i = 0; i < n; ++i) {
      dist_sq(i) = std::min(dist_sq(i), (points.row(i) - centroids.row(j)).squaredNorm());
    }
  }

  std::vector<int> assignment(n, 0);
  if (stats) {
    stats->cost_history.clear();
    stats->iterations = 0;
  }

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    // Assignment (pure per point; distances may be evaluated in parallel, the
    // per-point argmins do not depend on order).
    double cost = 0;
#pragma omp parallel for reduction(+ : cost) schedule(static)
    for (int i = 0; i < n; ++i) {
      double d;
      assignment[i] = nearest_centroid_sq(centroids, points.row(i).transpose(), &d);
      cost += (metric == Metric::kCosine) ? 0.5 * d : d;
    }
    if (stats) {
      stats->cost_history.push_back(cost);
      stats->iterations = iter + 1;
    }

    // Update. Accumulation runs serially in point order: fixed reduction
    // order keeps the fit bit-deterministic.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_clusters, dim);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_clusters);
    for (int i = 0; i < n; ++i) {
      sums.row(assignment[i]) += points.row(i);
      counts(assignment[i]) += 1;
    }
    Eigen::MatrixXd updated(n_clusters, dim);
    std::vector<int> empty_clusters;
    for (int j = 0; j < n_clusters; ++j) {
      if (counts(j) == 0) {
        empty_clusters.push_back(j);
        updated.row(j) = centroids.row(j);
        continue;
      }
      updated.row(j) = sums.row(j) / counts(j);
      if (metric == Metric::kCosine) {
        const double nm = updated.row(j).norm();
        if (nm > 0) {
          updated.row(j) /= nm;
        } else {
          empty_clusters.push_back(j);
        }
      }
    }

    // Re-seed empty clusters from points farthest to their centroid.
    std::vector<char> taken(n, 0);
    for (int j : empty_clusters) {
      int far_idx = -1;
      double far_d = -1;
      for (int i = 0; i < n; ++i) {
        if (taken[i]) continue;
        const double d = (points.row(i) - updated.row(assignment[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far_idx = i;
        }
      }
      if (far_idx >= 0) {
        updated.row(j) = points.row(far_idx);
        taken[far_idx] = 1;
      }
    }

    double movement = 0;
    for (int j = 0; j < n_clusters; ++j) {
      movement = std::max(movement, (updated.row(j) - centroids.row(j)).norm());
    }
    centroids = updated;
    if (movement < options.tolerance) break;
  }

  Vocabulary vocab;
  vocab.centroids = centroids.cast<float>();
  if (metric == Metric::kCosine) {
    // Renormalize after the f32 quantization so the unit-norm invariant holds
    // on the stored values.
    for (int j = 0; j < n_clusters; ++j) {
      const float nm = vocab.centroids.row(j).norm();
      if (nm > 0) vocab.centroids.row(j) /= nm;
    }
  }
  vocab.metric = metric;
  vocab.seed = seed;
  vocab.validate();
  return vocab;
}

int assign(const Eigen::VectorXd& descriptor, const Vocabulary& vocab) {
  if (descriptor.size() != vocab.dim()) {
    throw DimensionError("assign: descriptor dim " + std::to_string(descriptor.size()) +
                         " != vocabulary dim " + std::to_string(vocab.dim()));
  }
  const Eigen::MatrixXd cents = vocab.centroids.cast<double>();
  if (vocab.metric == Metric::kCosine) {
    const double fn = descriptor.norm();
    int best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < cents.rows(); ++j) {
      const double cn = cents.row(j).norm();
      double sim = 0;
      if (fn > 0 && cn > 0) sim = cents.row(j).dot(descriptor) / (fn * cn);
      if (sim > best_sim) {
        best_sim = sim;
        best = j;
      }
    }
    return best;
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cents.rows(); ++j) {
    const double d = (cents.row(j).transpose() - descriptor).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

VladDescriptor compute_vlad(const DescriptorMatrix& descriptors, const Vocabulary& vocab,
                            const VladOptions& options) {
  const int nc = vocab.clusters();
  const int dim = vocab.dim();
  if (descriptors.count() > 0 && descriptors.dim() != dim) {
    throw DimensionError("compute_vlad: descriptor dim " +
                         std::to_string(descriptors.dim()) + " != vocabulary dim " +
                         std::to_string(dim));
  }

  VladDescriptor out;
  out.values = Eigen::VectorXd::Zero(static_cast<long>(nc) * dim);
  if (descriptors.count() == 0) {
    out.zero = true;
    return out;
  }

  const Eigen::MatrixXd rows = descriptors.values.cast<double>();
  const Eigen::MatrixXd cents = vocab.centroids.cast<double>();
  const std::vector<int> order = canonical_row_order(rows);

  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(nc, dim);
  for (int k : order) {
    const Eigen::VectorXd f = rows.row(k).transpose();
    const int j = assign(f, vocab);
    Eigen::VectorXd residual = f - cents.row(j).transpose();
    if (options.cosine_weighted) {
      const double fn = f.norm();
      const double cn = cents.row(j).norm();
      const double w = (fn > 0 && cn > 0) ? f.dot(cents.row(j).transpose()) / (fn * cn) : 0.0;
      residual *= w;
    }
    blocks.row(j) += residual;
  }

  if (options.intra_normalize) {
    for (int j = 0; j < nc; ++j) {
      const double nm = blocks.row(j).norm();
      if (nm > 0) blocks.row(j) /= nm;
    }
  }
  for (int j = 0; j < nc; ++j) {
    out.values.segment(static_cast<long>(j) * dim, dim) = blocks.row(j).transpose();
  }
  const double total = out.values.norm();
  if (total > 0) {
    out.values /= total;
  } else {
    out.zero = true;
  }
  return out;
}

double vlad_similarity(const VladDescriptor& a, const VladDescriptor& b) {
  if (a.values.size() != b.values.size()) {
    throw DimensionError("vlad_similarity: descriptor lengths differ");
  }
  const double na = a.values.norm();
  const double nb = b.values.norm();
  if (a.zero || b.zero || na == 0 || nb == 0) return -1.0;
  return a.values.dot(b.values) / (na * nb);
}

void compute_vlad_batch(SequenceDataset& dataset, const Vocabulary& vocab,
                        const VladOptions& options) {
  const int n = static_cast<int>(dataset.keyframes.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) {
    dataset.keyframes[i].vlad = compute_vlad(dataset.keyframes[i].descriptors, vocab, options);
  }
}

void compute_vlad_batch_serial(SequenceDataset& dataset, const Vocabulary& vocab,
                               const VladOptions& options) {
  for (auto& kf : dataset.keyframes) {
    kf.vlad = compute_vlad(kf.descriptors, vocab, options);
  }
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  BinWriter w(path);
  w.magic("LGVC");
  w.u32(static_cast<uint32_t>(vocab.clusters()));
  w.u32(static_cast<uint32_t>(vocab.dim()));
  w.u8(static_cast<uint8_t>(vocab.metric));
  w.u64(vocab.seed);
  for (int j = 0; j < vocab.clusters(); ++j) {
    for (int d = 0; d < vocab.dim(); ++d) w.f32(vocab.centroids(j, d));
  }
  w.close();
}

Vocabulary load_vocabulary(const std::string& path) {
  BinReader r(path);
  r.expect_magic("LGVC");
  const uint32_t nc = r.u32();
  const uint32_t dim = r.u32();
  const uint8_t metric = r.u8();
  if (metric > 1) throw FormatError(path + ": unknown metric byte");
  Vocabulary vocab;
  vocab.metric = static_cast<Metric>(metric);
  vocab.seed = r.u64();
  r.expect_exact_remaining(static_cast<uint64_t>(nc) * dim * 4, "centroid matrix");
  vocab.centroids.resize(nc, dim);
  for (uint32_t j = 0; j < nc; ++j) {
    for (uint32_t d = 0; d < dim; ++d) vocab.centroids(j, d) = r.f32();
  }
  vocab.validate();
  return vocab;
}

}  // namespace lg
