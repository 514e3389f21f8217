#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loopgraph/pose.hpp"

namespace lg {

// Image-level aggregated descriptor. `zero` marks the descriptor of a frame
// without keypoints; such descriptors are all-zero instead of unit norm and
// sort last in similarity rankings.
struct VladDescriptor {
  Eigen::VectorXd values;
  bool zero = false;
};

struct KeypointSet {
  Eigen::MatrixXf coords;  // N_K x 2 pixel coordinates (u, v)
  int width = 0;
  int height = 0;

  int count() const { return static_cast<int>(coords.rows()); }
  void validate() const;
};

struct DescriptorMatrix {
  Eigen::MatrixXf values;  // N_K x N_KD, row k belongs to keypoint k

  int count() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }
  void validate(int expected_rows) const;
};

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) {
      throw InvalidArgumentError("camera intrinsics require fx > 0 and fy > 0");
    }
  }

  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }
};

struct Keyframe {
  uint32_t id = 0;
  std::string sequence;
  Pose pose;
  KeypointSet keypoints;
  DescriptorMatrix descriptors;
  std::optional<VladDescriptor> vlad;
  // The source image is not stored; keep only an opaque reference to it.
  std::string frame_ref;
};

struct SequenceDataset {
  std::string name;
  CameraIntrinsics intrinsics;
  int width = 0;
  int height = 0;
  std::vector<Keyframe> keyframes;

  void validate() const;
  int descriptor_dim() const;
  const Keyframe* find(uint32_t id) const;
};

// Selects keyframe indices from a pose stream: the first frame is always
// selected, afterwards a frame is selected whenever the cumulative travelled
// distance since the last selection reaches threshold_m (accumulator resets).
std::vector<size_t> sample_keyframes(
    const std::vector<std::pair<Pose, std::string>>& frames, double threshold_m);

constexpr double kDefaultKeyframeSpacingM = 0.5;

// Keyframe bundle directory layout:
//   manifest.json   sequence name, intrinsics, image size, keyframe count
//   poses.csv       id,tx,ty,tz,qw,qx,qy,qz
//   desc/<id>.bin   "LGKP" | u32 N_K | u32 N_KD | f32 coords | f32 descriptors
void save_dataset(const SequenceDataset& dataset, const std::string& dir);
SequenceDataset load_dataset(const std::string& dir);

}  // namespace lg
