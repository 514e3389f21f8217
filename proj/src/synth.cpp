#include "loopgraph/synth.hpp"

#include <algorithm>
#include <cmath>

#include "loopgraph/rng.hpp"

namespace lg {

namespace {

// Lemniscate of Gerono, unit amplitude: (sin(2*pi*u), sin(4*pi*u)/2).
Eigen::Vector2d curve_point(double u) {
  return {std::sin(2 * M_PI * u), 0.5 * std::sin(4 * M_PI * u)};
}

double unit_cycle_length() {
  double len = 0;
  const int steps = 20000;
  Eigen::Vector2d prev = curve_point(0);
  for (int i = 1; i <= steps; ++i) {
    const Eigen::Vector2d p = curve_point(static_cast<double>(i) / steps);
    len += (p - prev).norm();
    prev = p;
  }
  return len;
}

Eigen::Quaterniond yaw_to_camera(double yaw) {
  // Camera forward (+z) along the heading, +y pointing down.
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d(s, -c, 0);   // camera x (right)
  r.col(1) = Eigen::Vector3d(0, 0, -1);   // camera y (down)
  r.col(2) = Eigen::Vector3d(c, s, 0);    // camera z (forward)
  return Eigen::Quaterniond(r);
}

struct TrackSample {
  Eigen::Vector2d position;
  double yaw = 0;
  double cycle_arclength = 0;  // arclength within the current cycle
};

// Walks the scaled curve emitting one sample per keyframe spacing.
std::vector<TrackSample> march(double amplitude, double cycle_len, int count,
                               double spacing) {
  std::vector<TrackSample> samples;
  samples.reserve(count);
  const int fine = 200000;
  double acc = spacing;  // emit the first sample immediately
  double total = 0;
  Eigen::Vector2d prev = amplitude * curve_point(0);
  for (long i = 0; static_cast<int>(samples.size()) < count; ++i) {
    const double u = static_cast<double>(i % fine) / fine;
    const Eigen::Vector2d p = amplitude * curve_point(u);
    if (i > 0) {
      acc += (p - prev).norm();
      total += (p - prev).norm();
    }
    if (acc >= spacing) {
      const Eigen::Vector2d ahead =
          amplitude * curve_point(u + 1e-5);
      const Eigen::Vector2d tangent = (ahead - p).normalized();
      TrackSample s;
      s.position = p;
      s.yaw = std::atan2(tangent.y(), tangent.x());
      s.cycle_arclength = std::fmod(total, cycle_len);
      samples.push_back(s);
      acc = 0;
    }
    prev = p;
  }
  return samples;
}

struct Place {
  Pose canonical;                      // camera pose the landmarks were laid out from
  std::vector<Eigen::Vector3d> world;  // landmark positions
  Eigen::MatrixXd latents;             // landmark descriptors (unit rows)
};

}  // namespace

SyntheticWorld generate_world(const SyntheticWorldSpec& spec) {
  if (spec.keyframes_per_sequence < 2 || spec.passes < 1 || spec.descriptor_dim < 2 ||
      spec.landmarks_per_place < 8) {
    throw InvalidArgumentError("synthetic world spec out of range");
  }
  const double cycle_len =
      spec.keyframes_per_sequence * spec.keyframe_spacing_m / spec.passes;
  const double amplitude = cycle_len / unit_cycle_length();
  const int n_places =
      std::max(1, static_cast<int>(std::ceil(cycle_len / spec.place_spacing_m)));

  CameraIntrinsics intr;
  intr.fx = spec.focal;
  intr.fy = spec.focal;
  intr.cx = spec.width / 2.0;
  intr.cy = spec.height / 2.0;
  const Eigen::Matrix3d kinv = intr.matrix().inverse();

  // Canonical per-place poses from the unjittered cycle.
  const auto base =
      march(amplitude, cycle_len, spec.keyframes_per_sequence / spec.passes,
            spec.keyframe_spacing_m);
  std::vector<Place> places(n_places);
  std::vector<char> seen(n_places, 0);
  for (const auto& s : base) {
    const int p = std::min(n_places - 1,
                           static_cast<int>(s.cycle_arclength / spec.place_spacing_m));
    if (seen[p]) continue;
    seen[p] = 1;
    places[p].canonical =
        Pose(Eigen::Vector3d(s.position.x(), s.position.y(), 0), yaw_to_camera(s.yaw));
  }
  for (int p = 0; p < n_places; ++p) {
    if (!seen[p]) places[p].canonical = places[std::max(0, p - 1)].canonical;
  }

  // Landmarks and latent descriptors.
  for (int p = 0; p < n_places; ++p) {
    Rng rng(mix_seed(spec.seed, 0x9a11u, static_cast<uint64_t>(p)));
    places[p].world.resize(spec.landmarks_per_place);
    places[p].latents.resize(spec.landmarks_per_place, spec.descriptor_dim);
    const double margin = 60;
    for (int l = 0; l < spec.landmarks_per_place; ++l) {
      const double u = rng.uniform(margin, spec.width - margin);
      const double v = rng.uniform(margin, spec.height - margin);
      const double depth = rng.uniform(6.0, 14.0);
      const Eigen::Vector3d cam = depth * (kinv * Eigen::Vector3d(u, v, 1.0));
      places[p].world[l] = places[p].canonical.apply(cam);
      Eigen::VectorXd latent(spec.descriptor_dim);
      for (int d = 0; d < spec.descriptor_dim; ++d) latent(d) = rng.normal();
      places[p].latents.row(l) = latent.normalized().transpose();
    }
  }

  // Twin (aliased) places: the second half of the cycle borrows perturbed
  // latents from the first half, geographically far from the donor.
  SyntheticWorld world;
  world.place_count = n_places;
  world.twin_of.assign(n_places, -1);
  const int twins = static_cast<int>(std::floor(spec.aliased_fraction * n_places));
  {
    Rng rng(mix_seed(spec.seed, 0xa11a5u));
    std::vector<int> pool;
    for (int p = n_places / 2; p < n_places; ++p) pool.push_back(p);
    rng.shuffle(pool);
    for (int i = 0; i < twins && i < static_cast<int>(pool.size()); ++i) {
      const int twin = pool[i];
      const int donor = static_cast<int>(rng.uniform_int(n_places / 2));
      world.twin_of[twin] = donor;
      for (int l = 0; l < spec.landmarks_per_place; ++l) {
        Eigen::VectorXd lat = places[donor].latents.row(l).transpose();
        for (int d = 0; d < spec.descriptor_dim; ++d) {
          lat(d) += spec.alias_perturbation * rng.normal();
        }
        places[twin].latents.row(l) = lat.normalized().transpose();
      }
    }
  }

  // Sequences: jittered traversals observing the shared places.
  for (size_t sq = 0; sq < spec.sequence_names.size(); ++sq) {
    SequenceDataset ds;
    ds.name = spec.sequence_names[sq];
    ds.intrinsics = intr;
    ds.width = spec.width;
    ds.height = spec.height;

    const auto track = march(amplitude, cycle_len, spec.keyframes_per_sequence,
                             spec.keyframe_spacing_m);
    const double phase = 2 * M_PI * static_cast<double>(sq) / 3.0;
    for (size_t i = 0; i < track.size(); ++i) {
      Rng rng(mix_seed(spec.seed, 0x4fu, static_cast<uint64_t>(sq),
                       static_cast<uint64_t>(i)));
      const auto& s = track[i];
      const Eigen::Vector2d normal(-std::sin(s.yaw), std::cos(s.yaw));
      const double lateral =
          spec.lateral_jitter_m *
          std::sin(2 * M_PI * 2.0 * s.cycle_arclength / cycle_len + phase);
      Eigen::Vector3d pos(s.position.x() + normal.x() * lateral,
                          s.position.y() + normal.y() * lateral, 0);
      pos.x() += spec.position_noise_m * rng.normal();
      pos.y() += spec.position_noise_m * rng.normal();
      const double yaw =
          s.yaw + spec.yaw_noise_deg * M_PI / 180.0 * rng.normal();

      Keyframe kf;
      kf.id = static_cast<uint32_t>(i);
      kf.sequence = ds.name;
      kf.pose = Pose(pos, yaw_to_camera(yaw));

      const int p = std::min(n_places - 1,
                             static_cast<int>(s.cycle_arclength / spec.place_spacing_m));
      const Pose cam_from_world = kf.pose.inverse();
      std::vector<Eigen::Vector2f> px;
      std::vector<Eigen::VectorXf> desc;
      for (int l = 0; l < spec.landmarks_per_place; ++l) {
        if (rng.uniform() >= spec.visible_fraction) continue;
        const Eigen::Vector3d cam = cam_from_world.apply(places[p].world[l]);
        if (cam.z() < 0.5) continue;
        double u = intr.fx * cam.x() / cam.z() + intr.cx;
        double v = intr.fy * cam.y() / cam.z() + intr.cy;
        u += spec.pixel_noise * rng.normal();
        v += spec.pixel_noise * rng.normal();
        if (u < 0 || u >= spec.width - 1 || v < 0 || v >= spec.height - 1) continue;
        px.emplace_back(static_cast<float>(u), static_cast<float>(v));
        Eigen::VectorXd obs = places[p].latents.row(l).transpose();
        for (int d = 0; d < spec.descriptor_dim; ++d) {
          obs(d) += spec.descriptor_noise * rng.normal();
        }
        obs.normalize();
        desc.push_back(obs.cast<float>());
      }

      kf.keypoints.width = spec.width;
      kf.keypoints.height = spec.height;
      kf.keypoints.coords.resize(px.size(), 2);
      kf.descriptors.values.resize(px.size(), spec.descriptor_dim);
      for (size_t k = 0; k < px.size(); ++k) {
        kf.keypoints.coords(k, 0) = px[k].x();
        kf.keypoints.coords(k, 1) = px[k].y();
        kf.descriptors.values.row(k) = desc[k].transpose();
      }
      ds.keyframes.push_back(std::move(kf));
    }
    ds.validate();
    world.sequences.push_back(std::move(ds));
  }
  return world;
}

void write_world(const SyntheticWorld& world, const std::string& out_dir) {
  for (const auto& ds : world.sequences) {
    save_dataset(ds, out_dir + "/" + ds.name);
  }
}

}  // namespace lg
