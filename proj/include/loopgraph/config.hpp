#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "loopgraph/geoverify.hpp"
#include "loopgraph/gnn.hpp"
#include "loopgraph/synth.hpp"

namespace lg {

// Minimal TOML-style reader: [sections], key = value, with strings, numbers,
// booleans, and flat arrays. Enough for one human-editable config file.
class ConfigFile {
 public:
  using Value = std::variant<std::string, double, bool, std::vector<std::string>,
                             std::vector<double>>;

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_number(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<std::string> get_string_list(const std::string& section,
                                           const std::string& key) const;
  std::vector<double> get_number_list(const std::string& section,
                                      const std::string& key) const;

  const std::string& raw() const { return raw_; }

 private:
  std::map<std::string, std::map<std::string, Value>> sections_;
  std::string raw_;
};

struct PipelineConfig {
  // data
  std::vector<std::string> train_bundles;
  std::vector<std::string> eval_bundles;

  // vocabulary
  int vocab_clusters = kDefaultVladClusters;
  Metric metric = Metric::kCosine;
  int max_keypoints = kMaxKeypointsPerImage;
  bool vlad_intra_norm = true;
  bool vlad_cosine_weighted = false;

  // retrieval
  double k_pct = kDefaultRetrievalPct;
  int exclusion_window = kDefaultExclusionWindow;

  // model
  ModelHyper model;

  // training
  TrainConfig training;
  double val_fraction = 0.15;

  // verification
  RansacConfig ransac;
  double candidate_fraction = kDefaultCandidateFraction;
  std::optional<double> candidate_threshold;  // overrides fraction mode

  // evaluation
  double dist_thresh_m = kLoopDistThreshM;
  double angle_thresh_deg = kLoopAngleThreshDeg;
  std::vector<double> sweep_fractions;

  // synth
  SyntheticWorldSpec synth;

  uint64_t seed = 0;
  int workers = 0;  // 0: library default
  uint64_t config_hash = 0;

  static PipelineConfig from_file(const std::string& path);
  static PipelineConfig from_config(const ConfigFile& file);
  void validate() const;
};

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL);
std::string hash_hex(uint64_t h);

}  // namespace lg
