#include "loopgraph/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lg {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

ConfigFile::Value parse_scalar(const std::string& token, const std::string& context) {
  if (token.size() >= 2 && token.front() == '"' && token.back() == '"') {
    return token.substr(1, token.size() - 2);
  }
  if (token == "true") return true;
  if (token == "false") return false;
  try {
    size_t used = 0;
    const double v = std::stod(token, &used);
    if (used == token.size()) return v;
  } catch (...) {
  }
  throw ConfigError("cannot parse value '" + token + "' (" + context + ")");
}

std::vector<std::string> split_array_items(const std::string& inner) {
  std::vector<std::string> items;
  std::string cur;
  bool in_string = false;
  for (char c : inner) {
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::string last = trim(cur);
  if (!last.empty()) items.push_back(last);
  return items;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile cfg;
  cfg.raw_ = text;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string context = section + "." + key;
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    }
    if (value.front() == '[') {
      if (value.back() != ']') {
        throw ConfigError(context + ": unterminated array");
      }
      const auto items = split_array_items(value.substr(1, value.size() - 2));
      bool strings = !items.empty() && items.front().front() == '"';
      if (strings) {
        std::vector<std::string> out;
        for (const auto& item : items) {
          out.push_back(std::get<std::string>(parse_scalar(item, context)));
        }
        cfg.sections_[section][key] = out;
      } else {
        std::vector<double> out;
        for (const auto& item : items) {
          out.push_back(std::get<double>(parse_scalar(item, context)));
        }
        cfg.sections_[section][key] = out;
      }
    } else {
      cfg.sections_[section][key] = parse_scalar(value, context);
    }
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  if (!has(section, key)) return fallback;
  const auto& v = sections_.at(section).at(key);
  if (!std::holds_alternative<std::string>(v)) {
    throw ConfigError(section + "." + key + ": expected a string");
  }
  return std::get<std::string>(v);
}

double ConfigFile::get_number(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  const auto& v = sections_.at(section).at(key);
  if (!std::holds_alternative<double>(v)) {
    throw ConfigError(section + "." + key + ": expected a number");
  }
  return std::get<double>(v);
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const auto& v = sections_.at(section).at(key);
  if (!std::holds_alternative<bool>(v)) {
    throw ConfigError(section + "." + key + ": expected a boolean");
  }
  return std::get<bool>(v);
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& section,
                                                     const std::string& key) const {
  if (!has(section, key)) return {};
  const auto& v = sections_.at(section).at(key);
  if (std::holds_alternative<std::vector<std::string>>(v)) {
    return std::get<std::vector<std::string>>(v);
  }
  if (std::holds_alternative<std::string>(v)) {
    return {std::get<std::string>(v)};
  }
  throw ConfigError(section + "." + key + ": expected a string array");
}

std::vector<double> ConfigFile::get_number_list(const std::string& section,
                                                const std::string& key) const {
  if (!has(section, key)) return {};
  const auto& v = sections_.at(section).at(key);
  if (std::holds_alternative<std::vector<double>>(v)) {
    return std::get<std::vector<double>>(v);
  }
  if (std::holds_alternative<double>(v)) {
    return {std::get<double>(v)};
  }
  throw ConfigError(section + "." + key + ": expected a number array");
}

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  return from_config(ConfigFile::parse_file(path));
}

PipelineConfig PipelineConfig::from_config(const ConfigFile& file) {
  PipelineConfig cfg;
  cfg.config_hash = fnv1a(file.raw().data(), file.raw().size());

  cfg.train_bundles = file.get_string_list("data", "train_bundles");
  cfg.eval_bundles = file.get_string_list("data", "eval_bundles");

  cfg.vocab_clusters =
      static_cast<int>(file.get_number("vocabulary", "clusters", cfg.vocab_clusters));
  cfg.metric = metric_from_string(file.get_string("vocabulary", "metric", "cosine"));
  cfg.max_keypoints =
      static_cast<int>(file.get_number("vocabulary", "max_keypoints", cfg.max_keypoints));
  cfg.vlad_intra_norm = file.get_bool("vocabulary", "intra_normalize", true);
  cfg.vlad_cosine_weighted = file.get_bool("vocabulary", "cosine_weighted", false);

  cfg.k_pct = file.get_number("retrieval", "k_pct", cfg.k_pct);
  cfg.exclusion_window = static_cast<int>(
      file.get_number("retrieval", "exclusion_window", cfg.exclusion_window));

  cfg.model.message_passing_steps = static_cast<int>(
      file.get_number("model", "message_passing_steps", cfg.model.message_passing_steps));
  cfg.model.heads = static_cast<int>(file.get_number("model", "heads", cfg.model.heads));
  cfg.model.netvlad_clusters = static_cast<int>(
      file.get_number("model", "netvlad_clusters", cfg.model.netvlad_clusters));
  cfg.model.node_dim =
      static_cast<int>(file.get_number("model", "node_dim", cfg.model.node_dim));
  cfg.model.mlp_hidden =
      static_cast<int>(file.get_number("model", "mlp_hidden", cfg.model.mlp_hidden));
  cfg.model.leaky_slope = file.get_number("model", "leaky_slope", cfg.model.leaky_slope);
  cfg.model.edge_dropout = file.get_bool("model", "edge_dropout", false);

  cfg.training.learning_rate =
      file.get_number("training", "learning_rate", cfg.training.learning_rate);
  cfg.training.batch_size =
      static_cast<int>(file.get_number("training", "batch_size", cfg.training.batch_size));
  cfg.training.epochs =
      static_cast<int>(file.get_number("training", "epochs", cfg.training.epochs));
  cfg.training.dropout = file.get_number("training", "dropout", cfg.training.dropout);
  cfg.training.early_stopping_metric =
      file.get_string("training", "early_stopping_metric", "ap");
  cfg.training.patience =
      static_cast<int>(file.get_number("training", "patience", cfg.training.patience));
  cfg.val_fraction = file.get_number("training", "val_fraction", cfg.val_fraction);

  cfg.ransac.max_iterations = static_cast<int>(
      file.get_number("verification", "max_iterations", cfg.ransac.max_iterations));
  cfg.ransac.inlier_threshold_px = file.get_number("verification", "inlier_threshold_px",
                                                   cfg.ransac.inlier_threshold_px);
  cfg.ransac.confidence =
      file.get_number("verification", "confidence", cfg.ransac.confidence);
  cfg.ransac.min_matches = static_cast<int>(
      file.get_number("verification", "min_matches", cfg.ransac.min_matches));
  cfg.ransac.acceptance_inlier_ratio = file.get_number(
      "verification", "acceptance_inlier_ratio", cfg.ransac.acceptance_inlier_ratio);
  cfg.candidate_fraction =
      file.get_number("verification", "candidate_fraction", cfg.candidate_fraction);
  if (file.has("verification", "candidate_threshold")) {
    cfg.candidate_threshold =
        file.get_number("verification", "candidate_threshold", 0.0);
  }

  cfg.dist_thresh_m = file.get_number("evaluation", "dist_thresh_m", cfg.dist_thresh_m);
  cfg.angle_thresh_deg =
      file.get_number("evaluation", "angle_thresh_deg", cfg.angle_thresh_deg);
  cfg.sweep_fractions = file.get_number_list("evaluation", "sweep_fractions");

  auto synth_names = file.get_string_list("synth", "sequences");
  if (!synth_names.empty()) cfg.synth.sequence_names = synth_names;
  cfg.synth.keyframes_per_sequence = static_cast<int>(
      file.get_number("synth", "keyframes", cfg.synth.keyframes_per_sequence));
  cfg.synth.passes = static_cast<int>(file.get_number("synth", "passes", cfg.synth.passes));
  cfg.synth.place_spacing_m =
      file.get_number("synth", "place_spacing_m", cfg.synth.place_spacing_m);
  cfg.synth.descriptor_dim = static_cast<int>(
      file.get_number("synth", "descriptor_dim", cfg.synth.descriptor_dim));
  cfg.synth.landmarks_per_place = static_cast<int>(
      file.get_number("synth", "landmarks_per_place", cfg.synth.landmarks_per_place));
  cfg.synth.visible_fraction =
      file.get_number("synth", "visible_fraction", cfg.synth.visible_fraction);
  cfg.synth.descriptor_noise =
      file.get_number("synth", "descriptor_noise", cfg.synth.descriptor_noise);
  cfg.synth.pixel_noise = file.get_number("synth", "pixel_noise", cfg.synth.pixel_noise);
  cfg.synth.aliased_fraction =
      file.get_number("synth", "aliased_fraction", cfg.synth.aliased_fraction);
  cfg.synth.alias_perturbation =
      file.get_number("synth", "alias_perturbation", cfg.synth.alias_perturbation);
  cfg.synth.lateral_jitter_m =
      file.get_number("synth", "lateral_jitter_m", cfg.synth.lateral_jitter_m);

  cfg.seed = static_cast<uint64_t>(file.get_number("pipeline", "seed", 0));
  cfg.workers = static_cast<int>(file.get_number("pipeline", "workers", 0));
  cfg.training.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;
  cfg.ransac.seed = cfg.seed;

  cfg.validate();
  return cfg;
}

void PipelineConfig::validate() const {
  if (vocab_clusters < 1 || max_keypoints < 1) {
    throw ConfigError("vocabulary settings out of range");
  }
  if (!(k_pct > 0) || k_pct > 100 || exclusion_window < 0) {
    throw ConfigError("retrieval settings out of range");
  }
  if (model.descriptor_dim == 0) {
    // descriptor_dim is derived from the data at training time.
    ModelHyper probe = model;
    probe.descriptor_dim = 1;
    probe.validate();
  } else {
    model.validate();
  }
  training.validate();
  if (val_fraction < 0 || val_fraction >= 1) {
    throw ConfigError("training.val_fraction must be in [0, 1)");
  }
  ransac.validate();
  if (!(candidate_fraction > 0) || candidate_fraction > 1) {
    throw ConfigError("verification.candidate_fraction must be in (0, 1]");
  }
  if (candidate_threshold && (*candidate_threshold < 0 || *candidate_threshold > 1)) {
    throw ConfigError("verification.candidate_threshold must be in [0, 1]");
  }
  if (!(dist_thresh_m > 0) || !(angle_thresh_deg > 0)) {
    throw ConfigError("evaluation thresholds must be positive");
  }
  for (double f : sweep_fractions) {
    if (!(f > 0) || f > 1) throw ConfigError("sweep fractions must be in (0, 1]");
  }
}

}  // namespace lg
