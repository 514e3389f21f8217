#include "loopgraph/keyframe.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "loopgraph/binio.hpp"

namespace fs = std::filesystem;

namespace lg {

void KeypointSet::validate() const {
  if (coords.rows() > 0 && coords.cols() != 2) {
    throw DimensionError("keypoint coordinates must be N_K x 2");
  }
  for (int k = 0; k < coords.rows(); ++k) {
    const float u = coords(k, 0), v = coords(k, 1);
    if (!std::isfinite(u) || !std::isfinite(v)) {
      throw NonFiniteError("keypoint coordinate is not finite");
    }
    if (u < 0.0f || u >= static_cast<float>(width) || v < 0.0f ||
        v >= static_cast<float>(height)) {
      throw InvalidArgumentError("keypoint " + std::to_string(k) +
                                 " outside image bounds");
    }
  }
}

void DescriptorMatrix::validate(int expected_rows) const {
  if (static_cast<int>(values.rows()) != expected_rows) {
    throw DimensionError("descriptor row count does not match keypoint count");
  }
  if (!values.allFinite()) {
    throw NonFiniteError("descriptor matrix contains non-finite entries");
  }
}

void SequenceDataset::validate() const {
  int dim = -1;
  int64_t prev_id = -1;
  for (const auto& kf : keyframes) {
    if (static_cast<int64_t>(kf.id) <= prev_id) {
      throw InvalidArgumentError("keyframe ids must be strictly increasing");
    }
    prev_id = kf.id;
    kf.keypoints.validate();
    kf.descriptors.validate(kf.keypoints.count());
    if (dim < 0) {
      dim = kf.descriptors.dim();
    } else if (kf.descriptors.dim() != dim && kf.descriptors.count() > 0) {
      throw DimensionError("descriptor dimensionality differs across keyframes");
    }
  }
  if (!keyframes.empty()) intrinsics.validate();
}

int SequenceDataset::descriptor_dim() const {
  for (const auto& kf : keyframes) {
    if (kf.descriptors.count() > 0) return kf.descriptors.dim();
  }
  return 0;
}

const Keyframe* SequenceDataset::find(uint32_t id) const {
  auto it = std::lower_bound(keyframes.begin(), keyframes.end(), id,
                             [](const Keyframe& kf, uint32_t v) { return kf.id < v; });
  if (it == keyframes.end() || it->id != id) return nullptr;
  return &*it;
}

std::vector<size_t> sample_keyframes(
    const std::vector<std::pair<Pose, std::string>>& frames, double threshold_m) {
  if (frames.empty()) throw EmptyInputError("sample_keyframes: no input frames");
  if (!(threshold_m > 0)) {
    throw InvalidArgumentError("sample_keyframes: threshold must be positive");
  }
  std::vector<size_t> selected = {0};
  double acc = 0.0;
  for (size_t i = 1; i < frames.size(); ++i) {
    acc += (frames[i].first.position - frames[i - 1].first.position).norm();
    if (acc >= threshold_m) {
      selected.push_back(i);
      acc = 0.0;
    }
  }
  return selected;
}

namespace {

constexpr char kDescMagic[4] = {'L', 'G', 'K', 'P'};

std::string desc_path(const std::string& dir, uint32_t id) {
  return dir + "/desc/" + std::to_string(id) + ".bin";
}

void write_desc_file(const std::string& path, const Keyframe& kf) {
  BinWriter w(path);
  w.magic(kDescMagic);
  const uint32_t nk = static_cast<uint32_t>(kf.keypoints.count());
  const uint32_t nd = static_cast<uint32_t>(kf.descriptors.values.cols());
  w.u32(nk);
  w.u32(nd);
  for (uint32_t k = 0; k < nk; ++k) {
    w.f32(kf.keypoints.coords(k, 0));
    w.f32(kf.keypoints.coords(k, 1));
  }
  for (uint32_t k = 0; k < nk; ++k) {
    for (uint32_t d = 0; d < nd; ++d) w.f32(kf.descriptors.values(k, d));
  }
  w.close();
}

void read_desc_file(const std::string& path, Keyframe& kf, int width, int height) {
  BinReader r(path);
  r.expect_magic(kDescMagic);
  const uint32_t nk = r.u32();
  const uint32_t nd = r.u32();
  r.expect_exact_remaining(static_cast<uint64_t>(nk) * (2 + nd) * 4,
                           "N_K=" + std::to_string(nk) + " N_KD=" + std::to_string(nd));
  kf.keypoints.coords.resize(nk, 2);
  kf.keypoints.width = width;
  kf.keypoints.height = height;
  for (uint32_t k = 0; k < nk; ++k) {
    kf.keypoints.coords(k, 0) = r.f32();
    kf.keypoints.coords(k, 1) = r.f32();
  }
  kf.descriptors.values.resize(nk, nd);
  for (uint32_t k = 0; k < nk; ++k) {
    for (uint32_t d = 0; d < nd; ++d) kf.descriptors.values(k, d) = r.f32();
  }
  if (!kf.keypoints.coords.allFinite()) {
    throw NonFiniteError(path + ": keypoint coordinates contain non-finite values");
  }
  if (!kf.descriptors.values.allFinite()) {
    throw NonFiniteError(path + ": descriptors contain non-finite values");
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_dataset(const SequenceDataset& dataset, const std::string& dir) {
  dataset.validate();
  fs::create_directories(fs::path(dir) / "desc");

  nlohmann::json manifest;
  manifest["sequence"] = dataset.name;
  manifest["intrinsics"] = {{"fx", dataset.intrinsics.fx},
                            {"fy", dataset.intrinsics.fy},
                            {"cx", dataset.intrinsics.cx},
                            {"cy", dataset.intrinsics.cy}};
  manifest["width"] = dataset.width;
  manifest["height"] = dataset.height;
  manifest["count"] = dataset.keyframes.size();
  {
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IoError("cannot write " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
  }

  std::ofstream poses(dir + "/poses.csv");
  if (!poses) throw IoError("cannot write " + dir + "/poses.csv");
  poses << "id,tx,ty,tz,qw,qx,qy,qz\n";
  for (const auto& kf : dataset.keyframes) {
    const auto& p = kf.pose.position;
    const auto& q = kf.pose.orientation;
    poses << kf.id << ',' << fmt_double(p.x()) << ',' << fmt_double(p.y()) << ','
          << fmt_double(p.z()) << ',' << fmt_double(q.w()) << ',' << fmt_double(q.x())
          << ',' << fmt_double(q.y()) << ',' << fmt_double(q.z()) << "\n";
    write_desc_file(desc_path(dir, kf.id), kf);
  }
}

SequenceDataset load_dataset(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.json";
  std::ifstream min(manifest_path);
  if (!min) throw IoError("missing manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }

  SequenceDataset ds;
  try {
    ds.name = manifest.at("sequence").get<std::string>();
    const auto& intr = manifest.at("intrinsics");
    ds.intrinsics.fx = intr.at("fx").get<double>();
    ds.intrinsics.fy = intr.at("fy").get<double>();
    ds.intrinsics.cx = intr.at("cx").get<double>();
    ds.intrinsics.cy = intr.at("cy").get<double>();
    ds.width = manifest.at("width").get<int>();
    ds.height = manifest.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
  const size_t count = manifest.at("count").get<size_t>();

  const std::string poses_path = dir + "/poses.csv";
  std::ifstream poses(poses_path);
  if (!poses) throw IoError("missing poses: " + poses_path);
  std::string line;
  if (!std::getline(poses, line)) throw FormatError(poses_path + ": empty file");
  if (line != "id,tx,ty,tz,qw,qx,qy,qz") {
    throw FormatError(poses_path + ": unexpected header '" + line + "'");
  }
  while (std::getline(poses, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    uint32_t id = 0;
    bool first = true;
    while (std::getline(ss, tok, ',')) {
      if (first) {
        id = static_cast<uint32_t>(std::stoul(tok));
        first = false;
      } else {
        vals.push_back(std::stod(tok));
      }
    }
    if (vals.size() != 7) {
      throw FormatError(poses_path + ": expected 8 columns, got line '" + line + "'");
    }
    Keyframe kf;
    kf.id = id;
    kf.sequence = ds.name;
    kf.pose = Pose(Eigen::Vector3d(vals[0], vals[1], vals[2]),
                   Eigen::Quaterniond(vals[3], vals[4], vals[5], vals[6]));
    read_desc_file(desc_path(dir, id), kf, ds.width, ds.height);
    ds.keyframes.push_back(std::move(kf));
  }
  if (ds.keyframes.size() != count) {
    throw DimensionError(manifest_path + ": manifest count " + std::to_string(count) +
                         " != " + std::to_string(ds.keyframes.size()) + " pose rows");
  }
  ds.validate();
  return ds;
}

}  // namespace lg
