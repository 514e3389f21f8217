#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loopgraph/retrieval.hpp"

namespace lg {

constexpr double kLoopDistThreshM = 4.0;
constexpr double kLoopAngleThreshDeg = 30.0;

// Ground-truth loop rule: both the relative distance and the relative
// geodesic angle strictly below their thresholds.
inline bool is_loop_pair(const Pose& a, const Pose& b, double dist_thresh_m,
                         double angle_thresh_deg) {
  const double dist = (a.position - b.position).norm();
  const double ang = rotation_angle_deg(a.orientation, b.orientation);
  return dist < dist_thresh_m && ang < angle_thresh_deg;
}

// Step-interpolated (information retrieval) average precision. Ties in score
// are broken by item index so the value is deterministic.
double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels);

// Highest recall over score thresholds whose prediction set contains zero
// false positives. Items sharing a score enter the prediction set together.
double max_recall_full_precision(const std::vector<double>& scores,
                                 const std::vector<int>& labels);

// Geodesic distance on SO(3) between two rotations, in degrees.
double rpe_deg(const Eigen::Matrix3d& r_gt, const Eigen::Matrix3d& r_pred);

// L2 distance between the unit-normalized translations, in [0, 2].
double ate_up_to_scale(const Eigen::Vector3d& t_gt, const Eigen::Vector3d& t_pred);

struct PrCurve {
  std::vector<double> thresholds;  // descending distinct scores
  std::vector<double> precisions;
  std::vector<double> recalls;
  int positives = 0;
  int total = 0;
};

PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels);

void save_pr_curve(const PrCurve& curve, const std::string& path);
PrCurve load_pr_curve(const std::string& path);

// Predicted relative pose of a pair: maps query-frame coordinates into
// candidate-frame coordinates; translation is up to scale.
struct PredictedPose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::UnitX();
};

struct PairPrediction {
  NodeKey query;
  NodeKey candidate;
  double score = 0;
  std::optional<PredictedPose> pose;
};

struct SequenceEval {
  std::string sequence;
  std::optional<double> ap;        // absent when the sequence has no positives
  std::optional<double> mr;
  std::optional<double> mean_rpe_deg;
  std::optional<double> mean_ate;
  int pairs = 0;
  int positives = 0;
  int pose_pairs = 0;              // true positives carrying a valid pose
  PrCurve curve;
};

struct EvalReport {
  std::vector<SequenceEval> per_sequence;
  std::optional<double> avg_ap;
  std::optional<double> avg_mr;
  std::optional<double> avg_rpe_deg;
  std::optional<double> avg_ate;
  double runtime_sec = 0;
};

// Groups predictions by the query's sequence, labels each pair from ground
// truth poses, and aggregates AP/MR plus pose errors over true positives.
EvalReport evaluate(const std::vector<PairPrediction>& predictions,
                    const DatasetRegistry& registry,
                    double dist_thresh_m = kLoopDistThreshM,
                    double angle_thresh_deg = kLoopAngleThreshDeg);

std::string report_to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::string& path);

}  // namespace lg
