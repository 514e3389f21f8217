#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "loopgraph/retrieval.hpp"
#include "loopgraph/vlad.hpp"

namespace lg {

// Mutual one-to-one correspondences between two keyframes: (a, b) is kept iff
// b is a's nearest descriptor in frame j and a is b's nearest in frame i.
struct MatchSet {
  std::vector<std::pair<int, int>> pairs;
  Eigen::MatrixXd coords_i;  // M x 2 pixel coordinates in frame i
  Eigen::MatrixXd coords_j;  // M x 2 pixel coordinates in frame j

  int size() const { return static_cast<int>(pairs.size()); }
};

MatchSet mutual_match(const DescriptorMatrix& desc_i, const KeypointSet& kp_i,
                      const DescriptorMatrix& desc_j, const KeypointSet& kp_j,
                      Metric metric = Metric::kCosine);

// 3x3, rank 2, unit Frobenius norm; satisfies x_j^T F x_i = 0 for
// corresponding homogeneous pixel coordinates.
struct FundamentalMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  void validate() const;
};

// Singular values (s, s, 0) after enforcement.
struct EssentialMatrix {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  void validate() const;
};

// Maps frame-i camera coordinates into frame-j camera coordinates:
// x_j = R x_i + t, with ||t|| = 1 (scale is unobservable).
struct RelativePoseUpToScale {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::UnitX();
  double inlier_ratio = 0;
};

struct RansacConfig {
  int max_iterations = 2000;
  double inlier_threshold_px = 2.0;   // Sampson distance
  double confidence = 0.999;          // adaptive stopping target
  int min_matches = 8;
  double acceptance_inlier_ratio = 0.5;
  uint64_t seed = 0;

  void validate() const;
};

struct RansacResult {
  FundamentalMatrix fundamental;
  std::vector<char> inlier_mask;
  int inliers = 0;
  int iterations = 0;
  int degenerate_samples = 0;
};

// First-order point-to-epipolar-line distance in pixels.
double sampson_distance(const Eigen::Matrix3d& f, const Eigen::Vector2d& pt_i,
                        const Eigen::Vector2d& pt_j);

// Hypothesize-and-verify with Hartley-normalized 8-point solves, rank-2
// enforcement, adaptive iteration cap, and a final least-squares refit over
// the best inlier set. Deterministic under config.seed.
RansacResult estimate_fundamental_ransac(const MatchSet& matches,
                                         const RansacConfig& config);

EssentialMatrix essential_from_fundamental(const FundamentalMatrix& f,
                                           const CameraIntrinsics& intrinsics);

// Four-candidate SVD decomposition, disambiguated by cheirality (triangulated
// points must have positive depth in both views for a majority of inliers).
RelativePoseUpToScale decompose_essential(const EssentialMatrix& e,
                                          const MatchSet& matches,
                                          const std::vector<char>& inlier_mask,
                                          const CameraIntrinsics& intrinsics);

enum class RejectReason {
  kNone = 0,
  kInsufficientMatches,
  kLowInlierRatio,
  kDegenerateGeometry,
};

std::string reject_reason_to_string(RejectReason r);

struct VerifiedLoop {
  FundamentalMatrix fundamental;
  std::optional<EssentialMatrix> essential;
  std::optional<RelativePoseUpToScale> pose;  // absent when unrecoverable
  double inlier_ratio = 0;
  int match_count = 0;
  int inlier_count = 0;
};

struct VerifyOutcome {
  std::optional<VerifiedLoop> loop;
  RejectReason reason = RejectReason::kNone;

  bool accepted() const { return loop.has_value(); }
};

// Full per-pair verification: mutual matching, robust fundamental estimation,
// 50% inlier-ratio gate, essential recovery, and pose decomposition. A
// near-zero-parallax pair (e.g. a frame against itself) is accepted with the
// pose marked unavailable instead of returning a garbage transform.
VerifyOutcome verify_pair(const Keyframe& frame_i, const Keyframe& frame_j,
                          const CameraIntrinsics& intrinsics, const RansacConfig& config,
                          Metric metric = Metric::kCosine);

struct PairTask {
  NodeKey key_i;
  NodeKey key_j;
  const Keyframe* frame_i = nullptr;
  const Keyframe* frame_j = nullptr;
  double score = 0;
};

// Verifies pairs independently; each pair draws its RNG stream from
// hash(global seed, keys), so results do not depend on scheduling. Parallel
// and serial variants are identical.
std::vector<VerifyOutcome> verify_pairs(const std::vector<PairTask>& tasks,
                                        const CameraIntrinsics& intrinsics,
                                        const RansacConfig& config, Metric metric);
std::vector<VerifyOutcome> verify_pairs_serial(const std::vector<PairTask>& tasks,
                                               const CameraIntrinsics& intrinsics,
                                               const RansacConfig& config, Metric metric);

uint64_t pair_seed(uint64_t global_seed, const NodeKey& a, const NodeKey& b);

}  // namespace lg
