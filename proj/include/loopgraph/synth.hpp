#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loopgraph/keyframe.hpp"

namespace lg {

// Figure-8 world with repeated passes. Places are fixed patches of the cycle;
// every place owns a set of 3D landmarks with latent descriptors, so frames
// revisiting a place share both appearance and true two-view geometry. A
// fraction of places reuses (perturbed) latents from a distant donor place:
// such twins look alike but are geometrically inconsistent.
struct SyntheticWorldSpec {
  std::vector<std::string> sequence_names = {"train", "test"};
  int keyframes_per_sequence = 500;
  int passes = 2;  // trips around the figure-8 per sequence
  double keyframe_spacing_m = 0.5;
  double place_spacing_m = 3.5;

  int descriptor_dim = 16;
  int landmarks_per_place = 120;
  double visible_fraction = 0.7;     // landmark subset observed per frame
  double descriptor_noise = 0.05;    // per-observation latent perturbation
  double pixel_noise = 0.3;          // projection noise sigma, pixels
  double aliased_fraction = 0.2;     // fraction of places with a twin
  double alias_perturbation = 0.12;  // latent distance between twins
  double lateral_jitter_m = 0.3;     // per-sequence path offset amplitude
  double position_noise_m = 0.05;
  double yaw_noise_deg = 1.0;

  int width = 640;
  int height = 480;
  double focal = 320.0;
  uint64_t seed = 0;
};

struct SyntheticWorld {
  std::vector<SequenceDataset> sequences;
  int place_count = 0;
  std::vector<int> twin_of;  // per place: donor place index, or -1
};

SyntheticWorld generate_world(const SyntheticWorldSpec& spec);

// Writes one keyframe bundle per sequence under out_dir/<sequence_name>/.
void write_world(const SyntheticWorld& world, const std::string& out_dir);

}  // namespace lg
