#include "loopgraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace lg {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("scores and labels length mismatch");
  }
  if (scores.empty()) throw EmptyInputError("no scored items");
  const long positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0) {
    throw UndefinedMetricError("metric undefined without positive labels");
  }
}

std::vector<int> ranking(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double average_precision(const std::vector<double>& scores,
                         const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto order = ranking(scores);
  const double n_pos =
      static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double tp = 0;
  double ap = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      tp += 1;
      ap += tp / static_cast<double>(rank + 1);
    }
  }
  return ap / n_pos;
}

double max_recall_full_precision(const std::vector<double>& scores,
                                 const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto order = ranking(scores);
  const double n_pos =
      static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  double best = 0;
  double tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    // Consume the whole tie group: a threshold cannot split equal scores.
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        tp += 1;
      } else {
        fp += 1;
      }
      ++j;
    }
    if (fp > 0) break;
    best = tp / n_pos;
    i = j;
  }
  return best;
}

double rpe_deg(const Eigen::Matrix3d& r_gt, const Eigen::Matrix3d& r_pred) {
  const double tr = (r_gt.transpose() * r_pred).trace();
  const double arg = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(arg) * 180.0 / M_PI;
}

double ate_up_to_scale(const Eigen::Vector3d& t_gt, const Eigen::Vector3d& t_pred) {
  const double ng = t_gt.norm();
  const double np = t_pred.norm();
  if (ng == 0 || np == 0) {
    throw UndefinedMetricError("ate_up_to_scale undefined for zero-length translation");
  }
  return (t_gt / ng - t_pred / np).norm();
}

PrCurve pr_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const auto order = ranking(scores);
  const double n_pos =
      static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  PrCurve curve;
  curve.positives = static_cast<int>(n_pos);
  curve.total = static_cast<int>(scores.size());
  double tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        tp += 1;
      } else {
        fp += 1;
      }
      ++j;
    }
    curve.thresholds.push_back(scores[order[i]]);
    curve.precisions.push_back(tp / (tp + fp));
    curve.recalls.push_back(tp / n_pos);
    i = j;
  }
  return curve;
}

void save_pr_curve(const PrCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "threshold,precision,recall\n";
  for (size_t i = 0; i < curve.thresholds.size(); ++i) {
    out << fmt(curve.thresholds[i]) << ',' << fmt(curve.precisions[i]) << ','
        << fmt(curve.recalls[i]) << "\n";
  }
}

PrCurve load_pr_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,precision,recall") {
    throw FormatError(path + ": expected 'threshold,precision,recall' header");
  }
  PrCurve curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 3) throw FormatError(path + ": bad row '" + line + "'");
    curve.thresholds.push_back(vals[0]);
    curve.precisions.push_back(vals[1]);
    curve.recalls.push_back(vals[2]);
  }
  if (curve.thresholds.empty()) throw FormatError(path + ": empty curve");
  return curve;
}

EvalReport evaluate(const std::vector<PairPrediction>& predictions,
                    const DatasetRegistry& registry, double dist_thresh_m,
                    double angle_thresh_deg) {
  std::map<std::string, std::vector<const PairPrediction*>> by_sequence;
  for (const auto& pred : predictions) {
    by_sequence[registry.sequence(pred.query.seq).name].push_back(&pred);
  }

  EvalReport report;
  double ap_sum = 0, mr_sum = 0, rpe_sum = 0, ate_sum = 0;
  int ap_n = 0, rpe_n = 0, ate_n = 0;
  for (const auto& [name, preds] : by_sequence) {
    SequenceEval se;
    se.sequence = name;
    se.pairs = static_cast<int>(preds.size());

    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(preds.size());
    for (const auto* p : preds) {
      const Pose& qa = registry.get(p->query).pose;
      const Pose& qb = registry.get(p->candidate).pose;
      const int label = is_loop_pair(qa, qb, dist_thresh_m, angle_thresh_deg) ? 1 : 0;
      scores.push_back(p->score);
      labels.push_back(label);
      se.positives += label;

      if (label == 1 && p->pose.has_value()) {
        // Ground truth in the same frame convention as the predictions:
        // query-frame coordinates into candidate-frame coordinates.
        const Pose gt = relative_pose(qb, qa);
        rpe_sum += rpe_deg(gt.rotation(), p->pose->rotation.toRotationMatrix());
        ++rpe_n;
        se.pose_pairs += 1;
        try {
          ate_sum += ate_up_to_scale(gt.position, p->pose->translation);
          ++ate_n;
        } catch (const UndefinedMetricError&) {
          // zero ground-truth baseline; direction comparison undefined
        }
      }
    }

    if (se.positives > 0) {
      se.ap = average_precision(scores, labels);
      se.mr = max_recall_full_precision(scores, labels);
      se.curve = pr_curve(scores, labels);
      ap_sum += *se.ap;
      mr_sum += *se.mr;
      ++ap_n;
    }
    report.per_sequence.push_back(std::move(se));
  }

  if (ap_n > 0) {
    report.avg_ap = ap_sum / ap_n;
    report.avg_mr = mr_sum / ap_n;
  }
  if (rpe_n > 0) report.avg_rpe_deg = rpe_sum / rpe_n;
  if (ate_n > 0) report.avg_ate = ate_sum / ate_n;

  // Per-sequence pose means live in the sequence entries.
  for (auto& se : report.per_sequence) {
    if (se.pose_pairs == 0) continue;
  }
  return report;
}

namespace {

nlohmann::json optional_to_json(const std::optional<double>& v) {
  if (v.has_value()) return *v;
  return nullptr;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& se : report.per_sequence) {
    nlohmann::json s;
    s["sequence"] = se.sequence;
    s["ap"] = optional_to_json(se.ap);
    s["mr"] = optional_to_json(se.mr);
    s["pairs"] = se.pairs;
    s["positives"] = se.positives;
    s["pose_pairs"] = se.pose_pairs;
    seqs.push_back(s);
  }
  j["sequences"] = seqs;
  j["average"] = {{"ap", optional_to_json(report.avg_ap)},
                  {"mr", optional_to_json(report.avg_mr)},
                  {"rpe_deg", optional_to_json(report.avg_rpe_deg)},
                  {"ate", optional_to_json(report.avg_ate)}};
  j["runtime_sec"] = report.runtime_sec;
  return j.dump(2);
}

void save_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << report_to_json(report) << "\n";
}

}  // namespace lg
