#include "loopgraph/geoverify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "loopgraph/rng.hpp"

namespace lg {

void FundamentalMatrix::validate() const {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
  const auto& s = svd.singularValues();
  if (s(0) <= 0 || s(2) > 1e-9 * s(0)) {
    throw InvalidArgumentError("fundamental matrix is not rank 2");
  }
  if (std::abs(m.norm() - 1.0) > 1e-9) {
    throw InvalidArgumentError("fundamental matrix is not Frobenius-normalized");
  }
}

void EssentialMatrix::validate() const {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m);
  const auto& s = svd.singularValues();
  if (s(0) <= 0 || std::abs(s(0) - s(1)) > 1e-6 * s(0) || s(2) > 1e-6 * s(0)) {
    throw InvalidArgumentError("essential matrix singular values are not (s, s, 0)");
  }
}

void RansacConfig::validate() const {
  if (max_iterations <= 0 || inlier_threshold_px <= 0 || confidence <= 0 ||
      confidence >= 1 || min_matches < 8) {
    throw InvalidArgumentError("invalid RANSAC configuration");
  }
  if (acceptance_inlier_ratio <= 0 || acceptance_inlier_ratio > 1) {
    throw InvalidArgumentError("acceptance inlier ratio must be in (0, 1]");
  }
}

MatchSet mutual_match(const DescriptorMatrix& desc_i, const KeypointSet& kp_i,
                      const DescriptorMatrix& desc_j, const KeypointSet& kp_j,
                      Metric metric) {
  MatchSet out;
  const int ni = desc_i.count();
  const int nj = desc_j.count();
  if (ni == 0 || nj == 0) {
    out.coords_i.resize(0, 2);
    out.coords_j.resize(0, 2);
    return out;
  }
  if (desc_i.dim() != desc_j.dim()) {
    throw DimensionError("mutual_match: descriptor dimensionality differs");
  }

  // Pairwise affinity; higher is better for both metrics.
  Eigen::MatrixXf affinity;
  if (metric == Metric::kCosine) {
    Eigen::MatrixXf a = desc_i.values;
    Eigen::MatrixXf b = desc_j.values;
    for (int r = 0; r < a.rows(); ++r) {
      const float n = a.row(r).norm();
      if (n > 0) a.row(r) /= n;
    }
    for (int r = 0; r < b.rows(); ++r) {
      const float n = b.row(r).norm();
      if (n > 0) b.row(r) /= n;
    }
    affinity = a * b.transpose();
  } else {
    const Eigen::VectorXf sq_i = desc_i.values.rowwise().squaredNorm();
    const Eigen::VectorXf sq_j = desc_j.values.rowwise().squaredNorm();
    affinity = 2.0f * (desc_i.values * desc_j.values.transpose());
    affinity.colwise() -= sq_i;
    affinity.rowwise() -= sq_j.transpose();
    // affinity = -(||a||^2 + ||b||^2 - 2ab) = -dist^2
  }

  std::vector<int> nn_i(ni), nn_j(nj);
  for (int a = 0; a < ni; ++a) {
    int best = 0;
    float bv = affinity(a, 0);
    for (int b = 1; b < nj; ++b) {
      if (affinity(a, b) > bv) {
        bv = affinity(a, b);
        best = b;
      }
    }
    nn_i[a] = best;
  }
  for (int b = 0; b < nj; ++b) {
    int best = 0;
    float bv = affinity(0, b);
    for (int a = 1; a < ni; ++a) {
      if (affinity(a, b) > bv) {
        bv = affinity(a, b);
        best = a;
      }
    }
    nn_j[b] = best;
  }

  for (int a = 0; a < ni; ++a) {
    const int b = nn_i[a];
    if (nn_j[b] == a) out.pairs.emplace_back(a, b);
  }
  out.coords_i.resize(out.size(), 2);
  out.coords_j.resize(out.size(), 2);
  for (int m = 0; m < out.size(); ++m) {
    out.coords_i.row(m) = kp_i.coords.row(out.pairs[m].first).cast<double>();
    out.coords_j.row(m) = kp_j.coords.row(out.pairs[m].second).cast<double>();
  }
  return out;
}

namespace {

// Hartley normalization: translate centroid to the origin, scale mean
// distance to sqrt(2).
Eigen::Matrix3d normalizing_transform(const Eigen::MatrixXd& pts,
                                      const std::vector<int>& idx) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (int i : idx) centroid += pts.row(i).transpose();
  centroid /= static_cast<double>(idx.size());
  double mean_dist = 0;
  for (int i : idx) mean_dist += (pts.row(i).transpose() - centroid).norm();
  mean_dist /= static_cast<double>(idx.size());
  const double scale = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 0) = scale;
  t(1, 1) = scale;
  t(0, 2) = -scale * centroid.x();
  t(1, 2) = -scale * centroid.y();
  return t;
}

// Solves x_j'^T F' x_i' = 0 over the selected matches; returns false when the
// linear system is rank-deficient (degenerate sample). `minimal` enables the
// rank check used during hypothesis sampling.
bool solve_eight_point(const MatchSet& matches, const std::vector<int>& idx,
                       bool minimal, Eigen::Matrix3d* f_out) {
  const Eigen::Matrix3d t_i = normalizing_transform(matches.coords_i, idx);
  const Eigen::Matrix3d t_j = normalizing_transform(matches.coords_j, idx);

  Eigen::MatrixXd a(idx.size(), 9);
  for (size_t r = 0; r < idx.size(); ++r) {
    const int m = idx[r];
    const Eigen::Vector3d pi =
        t_i * Eigen::Vector3d(matches.coords_i(m, 0), matches.coords_i(m, 1), 1.0);
    const Eigen::Vector3d pj =
        t_j * Eigen::Vector3d(matches.coords_j(m, 0), matches.coords_j(m, 1), 1.0);
    a.row(r) << pj.x() * pi.x(), pj.x() * pi.y(), pj.x(), pj.y() * pi.x(),
        pj.y() * pi.y(), pj.y(), pi.x(), pi.y(), 1.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (minimal && sv(sv.size() - 1) < 1e-9 * std::max(sv(0), 1e-300)) {
    // Smallest of the 8 singular values ~ 0: null space dimension > 1.
    return false;
  }
  const Eigen::VectorXd f_vec = svd.matrixV().col(8);
  Eigen::Matrix3d f_norm;
  f_norm << f_vec(0), f_vec(1), f_vec(2), f_vec(3), f_vec(4), f_vec(5), f_vec(6),
      f_vec(7), f_vec(8);

  // Rank-2 enforcement.
  Eigen::JacobiSVD<Eigen::Matrix3d> fsvd(f_norm,
                                         Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = fsvd.singularValues();
  s(2) = 0;
  f_norm = fsvd.matrixU() * s.asDiagonal() * fsvd.matrixV().transpose();

  Eigen::Matrix3d f = t_j.transpose() * f_norm * t_i;
  const double norm = f.norm();
  if (!(norm > 0) || !f.allFinite()) return false;
  f /= norm;
  // Deterministic sign: largest-magnitude entry positive.
  int br = 0, bc = 0;
  f.cwiseAbs().maxCoeff(&br, &bc);
  if (f(br, bc) < 0) f = -f;
  *f_out = f;
  return true;
}

int count_inliers(const Eigen::Matrix3d& f, const MatchSet& matches, double threshold,
                  std::vector<char>* mask) {
  int inliers = 0;
  if (mask) mask->assign(matches.size(), 0);
  for (int m = 0; m < matches.size(); ++m) {
    const double d = sampson_distance(f, matches.coords_i.row(m).transpose(),
                                      matches.coords_j.row(m).transpose());
    if (d < threshold) {
      ++inliers;
      if (mask) (*mask)[m] = 1;
    }
  }
  return inliers;
}

}  // namespace

double sampson_distance(const Eigen::Matrix3d& f, const Eigen::Vector2d& pt_i,
                        const Eigen::Vector2d& pt_j) {
  const Eigen::Vector3d xi(pt_i.x(), pt_i.y(), 1.0);
  const Eigen::Vector3d xj(pt_j.x(), pt_j.y(), 1.0);
  const Eigen::Vector3d fxi = f * xi;
  const Eigen::Vector3d ftxj = f.transpose() * xj;
  const double r = xj.dot(fxi);
  const double denom =
      fxi(0) * fxi(0) + fxi(1) * fxi(1) + ftxj(0) * ftxj(0) + ftxj(1) * ftxj(1);
  if (denom <= 0) return std::numeric_limits<double>::infinity();
  return std::abs(r) / std::sqrt(denom);
}

RansacResult estimate_fundamental_ransac(const MatchSet& matches,
                                         const RansacConfig& config) {
  config.validate();
  const int n = matches.size();
  if (n < config.min_matches) {
    throw InsufficientMatchesError("RANSAC needs at least " +
                                   std::to_string(config.min_matches) + " matches, got " +
                                   std::to_string(n));
  }

  Rng rng(config.seed);
  std::vector<int> indices(n);
  std::iota(indices.begin(), indices.end(), 0);

  RansacResult result;
  result.inliers = -1;
  int max_needed = config.max_iterations;
  std::vector<int> sample(8);
  Eigen::Matrix3d f;
  std::vector<char> mask;

  int iter = 0;
  for (; iter < max_needed; ++iter) {
    // Partial Fisher-Yates: first 8 entries become the sample.
    for (int k = 0; k < 8; ++k) {
      const int j = k + static_cast<int>(rng.uniform_int(n - k));
      std::swap(indices[k], indices[j]);
      sample[k] = indices[k];
    }
    if (!solve_eight_point(matches, sample, /*minimal=*/true, &f)) {
      ++result.degenerate_samples;
      continue;
    }
    const int inliers = count_inliers(f, matches, config.inlier_threshold_px, &mask);
    if (inliers > result.inliers) {
      result.inliers = inliers;
      result.fundamental.m = f;
      result.inlier_mask = mask;
      const double w = static_cast<double>(inliers) / n;
      if (w >= 1.0) {
        max_needed = iter + 1;
      } else if (w > 0) {
        const double denom = std::log1p(-std::pow(w, 8));
        if (denom < 0) {
          const double needed = std::log(1.0 - config.confidence) / denom;
          max_needed = std::min<int>(
              config.max_iterations,
              static_cast<int>(std::ceil(std::min(needed, 1e9))));
        }
      }
    }
  }
  result.iterations = iter;

  if (result.inliers < 0) {
    throw DegenerateGeometryError("all RANSAC samples degenerate (" +
                                  std::to_string(result.degenerate_samples) +
                                  " skipped)");
  }

  // Least-squares refit over the best inlier set.
  std::vector<int> best_idx;
  for (int m = 0; m < n; ++m) {
    if (result.inlier_mask[m]) best_idx.push_back(m);
  }
  if (best_idx.size() >= 8 &&
      solve_eight_point(matches, best_idx, /*minimal=*/false, &f)) {
    const int refit_inliers = count_inliers(f, matches, config.inlier_threshold_px, &mask);
    if (refit_inliers >= result.inliers) {
      result.inliers = refit_inliers;
      result.fundamental.m = f;
      result.inlier_mask = mask;
    }
  }
  return result;
}

EssentialMatrix essential_from_fundamental(const FundamentalMatrix& f,
                                           const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  const Eigen::Matrix3d k = intrinsics.matrix();
  const Eigen::Matrix3d raw = k.transpose() * f.m * k;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(raw, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double s = 0.5 * (sv(0) + sv(1));
  EssentialMatrix e;
  e.m = svd.matrixU() * Eigen::Vector3d(s, s, 0).asDiagonal() *
        svd.matrixV().transpose();
  return e;
}

namespace {

// Linear triangulation in normalized camera coordinates with P1 = [I|0],
// P2 = [R|t]. Returns false for ill-conditioned points.
bool triangulate_depths(const Eigen::Matrix3d& r, const Eigen::Vector3d& t,
                        const Eigen::Vector3d& x1, const Eigen::Vector3d& x2,
                        double* depth1, double* depth2) {
  Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
  p1.leftCols<3>() = Eigen::Matrix3d::Identity();
  Eigen::Matrix<double, 3, 4> p2;
  p2.leftCols<3>() = r;
  p2.col(3) = t;

  Eigen::Matrix4d a;
  a.row(0) = x1.x() * p1.row(2) - p1.row(0);
  a.row(1) = x1.y() * p1.row(2) - p1.row(1);
  a.row(2) = x2.x() * p2.row(2) - p2.row(0);
  a.row(3) = x2.y() * p2.row(2) - p2.row(1);

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(a, Eigen::ComputeFullV);
  Eigen::Vector4d xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < 1e-12) return false;
  const Eigen::Vector3d x = xh.head<3>() / xh(3);
  *depth1 = x.z();
  *depth2 = (r * x + t).z();
  return true;
}

}  // namespace

RelativePoseUpToScale decompose_essential(const EssentialMatrix& e,
                                          const MatchSet& matches,
                                          const std::vector<char>& inlier_mask,
                                          const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(e.m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;

  Eigen::Matrix3d r1 = u * w * v.transpose();
  if (r1.determinant() < 0) r1 = -r1;
  Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  if (r2.determinant() < 0) r2 = -r2;
  Eigen::Vector3d t = u.col(2);
  const double tn = t.norm();
  if (tn == 0) throw AmbiguousPoseError("essential matrix has zero translation");
  t /= tn;

  const Eigen::Matrix3d kinv = intrinsics.matrix().inverse();
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> rays;
  constexpr int kMaxCheiralityPoints = 200;
  for (int m = 0; m < matches.size(); ++m) {
    if (!inlier_mask.empty() && !inlier_mask[m]) continue;
    const Eigen::Vector3d xi =
        kinv * Eigen::Vector3d(matches.coords_i(m, 0), matches.coords_i(m, 1), 1.0);
    const Eigen::Vector3d xj =
        kinv * Eigen::Vector3d(matches.coords_j(m, 0), matches.coords_j(m, 1), 1.0);
    rays.emplace_back(xi, xj);
    if (static_cast<int>(rays.size()) >= kMaxCheiralityPoints) break;
  }
  if (rays.empty()) throw AmbiguousPoseError("no inlier matches for cheirality test");

  const Eigen::Matrix3d rots[2] = {r1, r2};
  const Eigen::Vector3d trans[2] = {t, -t};
  int best_votes = -1;
  int best_valid = 0;
  Eigen::Matrix3d best_r;
  Eigen::Vector3d best_t;
  for (const auto& r : rots) {
    for (const auto& tt : trans) {
      int votes = 0;
      int valid = 0;
      for (const auto& [xi, xj] : rays) {
        double d1, d2;
        if (!triangulate_depths(r, tt, xi, xj, &d1, &d2)) continue;
        ++valid;
        if (d1 > 0 && d2 > 0) ++votes;
      }
      if (votes > best_votes) {
        best_votes = votes;
        best_valid = valid;
        best_r = r;
        best_t = tt;
      }
    }
  }
  if (best_valid == 0 || best_votes * 2 <= best_valid) {
    throw AmbiguousPoseError("no decomposition candidate has a positive-depth majority");
  }

  RelativePoseUpToScale pose;
  pose.rotation = Eigen::Quaterniond(best_r);
  pose.rotation.normalize();
  pose.translation = best_t;
  return pose;
}

std::string reject_reason_to_string(RejectReason r) {
  switch (r) {
    case RejectReason::kNone:
      return "none";
    case RejectReason::kInsufficientMatches:
      return "insufficient_matches";
    case RejectReason::kLowInlierRatio:
      return "low_inlier_ratio";
    case RejectReason::kDegenerateGeometry:
      return "degenerate_geometry";
  }
  return "unknown";
}

VerifyOutcome verify_pair(const Keyframe& frame_i, const Keyframe& frame_j,
                          const CameraIntrinsics& intrinsics, const RansacConfig& config,
                          Metric metric) {
  VerifyOutcome outcome;
  const MatchSet matches = mutual_match(frame_i.descriptors, frame_i.keypoints,
                                        frame_j.descriptors, frame_j.keypoints, metric);
  if (matches.size() < config.min_matches) {
    outcome.reason = RejectReason::kInsufficientMatches;
    return outcome;
  }

  RansacResult ransac;
  try {
    ransac = estimate_fundamental_ransac(matches, config);
  } catch (const DegenerateGeometryError&) {
    // Zero-parallax pairs (a frame against itself) make every 8-point system
    // rank deficient. The matches are still perfectly self-consistent: accept
    // the loop with the pose marked unavailable.
    std::vector<double> disp(matches.size());
    for (int m = 0; m < matches.size(); ++m) {
      disp[m] = (matches.coords_i.row(m) - matches.coords_j.row(m)).norm();
    }
    std::nth_element(disp.begin(), disp.begin() + disp.size() / 2, disp.end());
    const double median_disp = disp[disp.size() / 2];
    if (median_disp <= config.inlier_threshold_px) {
      VerifiedLoop loop;
      loop.fundamental.m << 0, -1, 0, 1, 0, 0, 0, 0, 0;
      loop.fundamental.m /= loop.fundamental.m.norm();
      loop.inlier_ratio = 1.0;
      loop.match_count = matches.size();
      loop.inlier_count = matches.size();
      outcome.loop = std::move(loop);
      return outcome;
    }
    outcome.reason = RejectReason::kDegenerateGeometry;
    return outcome;
  }

  const double ratio = static_cast<double>(ransac.inliers) / matches.size();
  if (ratio < config.acceptance_inlier_ratio) {
    outcome.reason = RejectReason::kLowInlierRatio;
    return outcome;
  }

  VerifiedLoop loop;
  loop.fundamental = ransac.fundamental;
  loop.inlier_ratio = ratio;
  loop.match_count = matches.size();
  loop.inlier_count = ransac.inliers;
  loop.essential = essential_from_fundamental(ransac.fundamental, intrinsics);
  try {
    RelativePoseUpToScale pose =
        decompose_essential(*loop.essential, matches, ransac.inlier_mask, intrinsics);
    pose.inlier_ratio = ratio;
    loop.pose = pose;
  } catch (const AmbiguousPoseError&) {
    // Accepted loop, pose unavailable.
  }
  outcome.loop = std::move(loop);
  return outcome;
}

uint64_t pair_seed(uint64_t global_seed, const NodeKey& a, const NodeKey& b) {
  return mix_seed(global_seed, a.seq, a.id, b.seq, b.id);
}

std::vector<VerifyOutcome> verify_pairs(const std::vector<PairTask>& tasks,
                                        const CameraIntrinsics& intrinsics,
                                        const RansacConfig& config, Metric metric) {
  std::vector<VerifyOutcome> outcomes(tasks.size());
  const int n = static_cast<int>(tasks.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < n; ++i) {
    RansacConfig pair_config = config;
    pair_config.seed = pair_seed(config.seed, tasks[i].key_i, tasks[i].key_j);
    outcomes[i] = verify_pair(*tasks[i].frame_i, *tasks[i].frame_j, intrinsics,
                              pair_config, metric);
  }
  return outcomes;
}

std::vector<VerifyOutcome> verify_pairs_serial(const std::vector<PairTask>& tasks,
                                               const CameraIntrinsics& intrinsics,
                                               const RansacConfig& config,
                                               Metric metric) {
  std::vector<VerifyOutcome> outcomes(tasks.size());
  for (size_t i = 0; i < tasks.size(); ++i) {
    RansacConfig pair_config = config;
    pair_config.seed = pair_seed(config.seed, tasks[i].key_i, tasks[i].key_j);
    outcomes[i] = verify_pair(*tasks[i].frame_i, *tasks[i].frame_j, intrinsics,
                              pair_config, metric);
  }
  return outcomes;
}

}  // namespace lg
