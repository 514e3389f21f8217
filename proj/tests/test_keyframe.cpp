#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "loopgraph/keyframe.hpp"
#include "loopgraph/rng.hpp"

using namespace lg;
namespace fs = std::filesystem;

namespace {

Pose pose_at(double x, double y = 0, double z = 0) {
  return Pose(Eigen::Vector3d(x, y, z), Eigen::Quaterniond::Identity());
}

SequenceDataset tiny_dataset(int frames, int keypoints, int dim, uint64_t seed) {
  SequenceDataset ds;
  ds.name = "tiny";
  ds.intrinsics = {320, 320, 320, 240};
  ds.width = 640;
  ds.height = 480;
  Rng rng(seed);
  for (int i = 0; i < frames; ++i) {
    Keyframe kf;
    kf.id = static_cast<uint32_t>(i * 2);  // increasing, not contiguous
    kf.sequence = ds.name;
    kf.pose = Pose(Eigen::Vector3d(i * 0.5, rng.uniform(), 0),
                   Eigen::Quaterniond::Identity());
    kf.keypoints.width = ds.width;
    kf.keypoints.height = ds.height;
    kf.keypoints.coords.resize(keypoints, 2);
    kf.descriptors.values.resize(keypoints, dim);
    for (int k = 0; k < keypoints; ++k) {
      kf.keypoints.coords(k, 0) = static_cast<float>(rng.uniform(0, 639));
      kf.keypoints.coords(k, 1) = static_cast<float>(rng.uniform(0, 479));
      for (int d = 0; d < dim; ++d) {
        kf.descriptors.values(k, d) = static_cast<float>(rng.normal());
      }
    }
    ds.keyframes.push_back(std::move(kf));
  }
  return ds;
}

}  // namespace

TEST_CASE("pose quaternion is normalized and validated") {
  const Pose p(Eigen::Vector3d::Zero(), Eigen::Quaterniond(2, 0, 0, 0));
  CHECK(p.orientation.w() == doctest::Approx(1.0));
  CHECK_THROWS_AS(Pose(Eigen::Vector3d::Zero(), Eigen::Quaterniond(0, 0, 0, 0)),
                  InvalidArgumentError);
}

TEST_CASE("relative_pose identities") {
  const Pose identity;
  const Pose moved = pose_at(1, 0, 0);
  const Pose rel_id = relative_pose(identity, identity);
  CHECK(rel_id.position.norm() == doctest::Approx(0.0));
  CHECK(rotation_angle_deg(rel_id.orientation, Eigen::Quaterniond::Identity()) ==
        doctest::Approx(0.0));

  const Pose rel = relative_pose(identity, moved);
  CHECK(rel.position.x() == doctest::Approx(1.0));
  CHECK(rel.position.y() == doctest::Approx(0.0));
}

TEST_CASE("relative_pose matches 4x4 matrix-product oracle") {
  // a: rotated 90 deg about z at the origin; b: translated (1,0,0).
  const Eigen::Quaterniond qa(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()));
  const Pose a(Eigen::Vector3d::Zero(), qa);
  const Pose b = pose_at(1, 0, 0);
  const Pose rel = relative_pose(a, b);
  CHECK(rel.position.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rel.position.y() == doctest::Approx(-1.0).epsilon(1e-12));

  // Oracle: T_a^{-1} * T_b as homogeneous 4x4 matrices, randomized.
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Quaterniond q1 =
        Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal())
            .normalized();
    const Eigen::Quaterniond q2 =
        Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal())
            .normalized();
    const Pose pa(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()), q1);
    const Pose pb(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()), q2);

    Eigen::Matrix4d ta = Eigen::Matrix4d::Identity();
    ta.topLeftCorner<3, 3>() = pa.rotation();
    ta.topRightCorner<3, 1>() = pa.position;
    Eigen::Matrix4d tb = Eigen::Matrix4d::Identity();
    tb.topLeftCorner<3, 3>() = pb.rotation();
    tb.topRightCorner<3, 1>() = pb.position;
    const Eigen::Matrix4d expected = ta.inverse() * tb;

    const Pose rel2 = relative_pose(pa, pb);
    CHECK((rel2.rotation() - expected.topLeftCorner<3, 3>()).norm() < 1e-9);
    CHECK((rel2.position - expected.topRightCorner<3, 1>()).norm() < 1e-9);
  }
}

TEST_CASE("sample_keyframes accumulator") {
  std::vector<std::pair<Pose, std::string>> frames;
  for (double x : {0.0, 0.3, 0.6, 0.9, 1.2}) frames.emplace_back(pose_at(x), "f");
  const auto picked = sample_keyframes(frames, 0.5);
  CHECK(picked == std::vector<size_t>{0, 2, 4});

  SUBCASE("single frame is always a keyframe") {
    const auto single = sample_keyframes({{pose_at(0), "f"}}, 0.5);
    CHECK(single == std::vector<size_t>{0});
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(sample_keyframes({}, 0.5), EmptyInputError);
  }
  SUBCASE("indices strictly increasing and spaced by threshold") {
    Rng rng(3);
    std::vector<std::pair<Pose, std::string>> walk;
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    for (int i = 0; i < 300; ++i) {
      pos += Eigen::Vector3d(rng.uniform(0, 0.2), rng.uniform(0, 0.2), 0);
      walk.emplace_back(Pose(pos, Eigen::Quaterniond::Identity()), "f");
    }
    const auto idx = sample_keyframes(walk, 0.5);
    for (size_t i = 1; i < idx.size(); ++i) {
      CHECK(idx[i] > idx[i - 1]);
      double acc = 0;
      for (size_t f = idx[i - 1] + 1; f <= idx[i]; ++f) {
        acc += (walk[f].first.position - walk[f - 1].first.position).norm();
      }
      CHECK(acc >= 0.5);
    }
  }
}

TEST_CASE("bundle round-trip is the identity") {
  const auto dir = fs::temp_directory_path() / "lg_bundle_test";
  fs::remove_all(dir);
  const SequenceDataset ds = tiny_dataset(3, 17, 8, 99);
  save_dataset(ds, dir.string());
  const SequenceDataset loaded = load_dataset(dir.string());

  REQUIRE(loaded.keyframes.size() == ds.keyframes.size());
  CHECK(loaded.name == ds.name);
  CHECK(loaded.intrinsics.fx == ds.intrinsics.fx);
  for (size_t i = 0; i < ds.keyframes.size(); ++i) {
    const auto& a = ds.keyframes[i];
    const auto& b = loaded.keyframes[i];
    CHECK(a.id == b.id);
    CHECK(a.keypoints.coords == b.keypoints.coords);      // bit-exact f32
    CHECK(a.descriptors.values == b.descriptors.values);  // bit-exact f32
    CHECK((a.pose.position - b.pose.position).norm() == 0.0);
    CHECK(a.pose.orientation.coeffs() == b.pose.orientation.coeffs());
  }
  fs::remove_all(dir);
}

TEST_CASE("empty dataset round-trips") {
  const auto dir = fs::temp_directory_path() / "lg_bundle_empty";
  fs::remove_all(dir);
  SequenceDataset ds;
  ds.name = "empty";
  ds.intrinsics = {100, 100, 50, 50};
  ds.width = 100;
  ds.height = 100;
  save_dataset(ds, dir.string());
  const SequenceDataset loaded = load_dataset(dir.string());
  CHECK(loaded.keyframes.empty());
  fs::remove_all(dir);
}

TEST_CASE("bundle loading error taxonomy") {
  const auto dir = fs::temp_directory_path() / "lg_bundle_err";
  fs::remove_all(dir);
  const SequenceDataset ds = tiny_dataset(2, 10, 4, 5);
  save_dataset(ds, dir.string());

  SUBCASE("missing manifest") {
    fs::remove(dir / "manifest.json");
    CHECK_THROWS_AS(load_dataset(dir.string()), IoError);
  }
  SUBCASE("magic mismatch") {
    std::ofstream f(dir / "desc" / "0.bin", std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    CHECK_THROWS_AS(load_dataset(dir.string()), FormatError);
  }
  SUBCASE("payload shorter than header") {
    // Rewrite keyframe 0 with N_K = 10 in the header but 9 rows of payload.
    const auto path = (dir / "desc" / "0.bin").string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write("LGKP", 4);
    const uint32_t nk = 10, nd = 4;
    f.write(reinterpret_cast<const char*>(&nk), 4);
    f.write(reinterpret_cast<const char*>(&nd), 4);
    std::vector<float> payload(9 * (2 + nd), 0.5f);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * 4));
    f.close();
    CHECK_THROWS_AS(load_dataset(dir.string()), DimensionError);
  }
  SUBCASE("non-finite descriptor payload") {
    const auto path = (dir / "desc" / "0.bin").string();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write("LGKP", 4);
    const uint32_t nk = 1, nd = 4;
    f.write(reinterpret_cast<const char*>(&nk), 4);
    f.write(reinterpret_cast<const char*>(&nd), 4);
    const float coords[2] = {1.0f, 1.0f};
    f.write(reinterpret_cast<const char*>(coords), 8);
    const float bad = std::numeric_limits<float>::quiet_NaN();
    const float desc[4] = {bad, 0, 0, 0};
    f.write(reinterpret_cast<const char*>(desc), 16);
    f.close();
    CHECK_THROWS_AS(load_dataset(dir.string()), NonFiniteError);
  }
  fs::remove_all(dir);
}

TEST_CASE("dataset invariants") {
  SequenceDataset ds = tiny_dataset(3, 5, 4, 1);
  SUBCASE("ids must strictly increase") {
    ds.keyframes[2].id = ds.keyframes[1].id;
    CHECK_THROWS_AS(ds.validate(), InvalidArgumentError);
  }
  SUBCASE("keypoints must stay in bounds") {
    ds.keyframes[0].keypoints.coords(0, 0) = 1e6f;
    CHECK_THROWS_AS(ds.validate(), InvalidArgumentError);
  }
  SUBCASE("descriptor rows must match keypoints") {
    ds.keyframes[0].descriptors.values.conservativeResize(3, Eigen::NoChange);
    CHECK_THROWS_AS(ds.validate(), DimensionError);
  }
}
