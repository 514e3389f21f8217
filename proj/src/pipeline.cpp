#include "loopgraph/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "loopgraph/rng.hpp"
#include "loopgraph/svgplot.hpp"

namespace fs = std::filesystem;

namespace lg {

namespace {

std::string fmt_g(double v, int digits = 17) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

}  // namespace

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "query_seq,query_id,cand_seq,cand_id,score\n";
  for (const auto& r : rows) {
    out << r.query_seq << ',' << r.query_id << ',' << r.cand_seq << ',' << r.cand_id
        << ',' << fmt_g(r.score, 9) << "\n";
  }
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || line != "query_seq,query_id,cand_seq,cand_id,score") {
    throw FormatError(path + ": unexpected score header");
  }
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    if (cols.size() != 5) throw FormatError(path + ": bad row '" + line + "'");
    ScoreRow r;
    r.query_seq = cols[0];
    r.query_id = static_cast<uint32_t>(std::stoul(cols[1]));
    r.cand_seq = cols[2];
    r.cand_id = static_cast<uint32_t>(std::stoul(cols[3]));
    r.score = std::stod(cols[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_verified_csv(const std::vector<VerifiedRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "seq_i,id_i,seq_j,id_j,score,inlier_ratio,qw,qx,qy,qz,tx,ty,tz,pose_valid\n";
  for (const auto& r : rows) {
    out << r.seq_i << ',' << r.id_i << ',' << r.seq_j << ',' << r.id_j << ','
        << fmt_g(r.score, 9) << ',' << fmt_g(r.inlier_ratio, 9) << ',' << fmt_g(r.qw)
        << ',' << fmt_g(r.qx) << ',' << fmt_g(r.qy) << ',' << fmt_g(r.qz) << ','
        << fmt_g(r.tx) << ',' << fmt_g(r.ty) << ',' << fmt_g(r.tz) << ','
        << r.pose_valid << "\n";
  }
}

std::vector<VerifiedRow> read_verified_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "seq_i,id_i,seq_j,id_j,score,inlier_ratio,qw,qx,qy,qz,tx,ty,tz,pose_valid") {
    throw FormatError(path + ": unexpected verified header");
  }
  std::vector<VerifiedRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    if (cols.size() != 14) throw FormatError(path + ": bad row '" + line + "'");
    VerifiedRow r;
    r.seq_i = cols[0];
    r.id_i = static_cast<uint32_t>(std::stoul(cols[1]));
    r.seq_j = cols[2];
    r.id_j = static_cast<uint32_t>(std::stoul(cols[3]));
    r.score = std::stod(cols[4]);
    r.inlier_ratio = std::stod(cols[5]);
    r.qw = std::stod(cols[6]);
    r.qx = std::stod(cols[7]);
    r.qy = std::stod(cols[8]);
    r.qz = std::stod(cols[9]);
    r.tx = std::stod(cols[10]);
    r.ty = std::stod(cols[11]);
    r.tz = std::stod(cols[12]);
    r.pose_valid = std::stoi(cols[13]);
    rows.push_back(std::move(r));
  }
  return rows;
}

Pipeline::Pipeline(PipelineConfig config, std::string workdir)
    : config_(std::move(config)), workdir_(std::move(workdir)) {
  fs::create_directories(fs::path(workdir_) / "stamps");
#ifdef _OPENMP
  if (config_.workers > 0) omp_set_num_threads(config_.workers);
#endif
}

std::string Pipeline::path(const std::string& name) const {
  return (fs::path(workdir_) / name).string();
}

void Pipeline::write_stamp(const std::string& stage,
                           const std::vector<std::string>& input_files) const {
  nlohmann::json j;
  j["stage"] = stage;
  j["config_hash"] = hash_hex(config_.config_hash);
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& f : input_files) {
    inputs[fs::path(f).filename().string()] = hash_hex(file_hash(f));
  }
  j["inputs"] = inputs;
  std::ofstream out(path("stamps/" + stage + ".json"));
  if (!out) throw IoError("cannot write stamp for stage " + stage);
  out << j.dump(2) << "\n";
}

void Pipeline::check_upstream(const std::string& stage) const {
  const std::string p = path("stamps/" + stage + ".json");
  std::ifstream in(p);
  if (!in) return;
  try {
    nlohmann::json j;
    in >> j;
    const std::string recorded = j.value("config_hash", "");
    if (!recorded.empty() && recorded != hash_hex(config_.config_hash)) {
      std::cerr << "warning: stage '" << stage
                << "' artifacts were produced under a different config (hash "
                << recorded << " != " << hash_hex(config_.config_hash) << ")\n";
    }
  } catch (...) {
    std::cerr << "warning: unreadable stamp for stage '" << stage << "'\n";
  }
}

void Pipeline::require_file(const std::string& p, const std::string& producer) const {
  if (!fs::exists(p)) {
    throw MissingArtifactError("missing artifact '" + p + "'; run the '" + producer +
                               "' stage first");
  }
}

void Pipeline::ensure_loaded() {
  if (loaded_) return;
  for (const auto& dir : config_.train_bundles) {
    datasets_.push_back(load_dataset(dir));
  }
  train_count_ = datasets_.size();
  for (const auto& dir : config_.eval_bundles) {
    datasets_.push_back(load_dataset(dir));
  }
  if (datasets_.empty()) {
    throw ConfigError("no bundles configured under [data]");
  }
  for (const auto& ds : datasets_) registry_.add(&ds);
  loaded_ = true;
}

uint32_t Pipeline::ordinal_of(const std::string& sequence_name) const {
  for (uint32_t i = 0; i < registry_.datasets.size(); ++i) {
    if (registry_.datasets[i]->name == sequence_name) return i;
  }
  throw InvalidArgumentError("unknown sequence '" + sequence_name + "'");
}

void Pipeline::synth() {
  SyntheticWorldSpec spec = config_.synth;
  spec.seed = config_.seed;
  const SyntheticWorld world = generate_world(spec);
  write_world(world, path("bundles"));
  std::vector<std::string> outputs;
  for (const auto& ds : world.sequences) {
    outputs.push_back(path("bundles/" + ds.name + "/manifest.json"));
  }
  write_stamp("synth", outputs);
}

void Pipeline::fit_vocab() {
  ensure_loaded();
  std::vector<const SequenceDataset*> train;
  for (size_t i = 0; i < train_count_; ++i) train.push_back(&datasets_[i]);
  if (train.empty()) throw ConfigError("fit-vocab requires [data].train_bundles");
  const Eigen::MatrixXf stacked =
      stack_descriptors(train, config_.max_keypoints, config_.seed);
  const Vocabulary vocab =
      fit_vocabulary(stacked, config_.vocab_clusters, config_.metric, config_.seed);
  save_vocabulary(vocab, path("vocab.bin"));
  write_stamp("fit-vocab", {path("vocab.bin")});
}

void Pipeline::extract_vlad() {
  ensure_loaded();
  require_file(path("vocab.bin"), "fit-vocab");
  check_upstream("fit-vocab");
  const Vocabulary vocab = load_vocabulary(path("vocab.bin"));
  VladOptions options;
  options.intra_normalize = config_.vlad_intra_norm;
  options.cosine_weighted = config_.vlad_cosine_weighted;

  std::vector<std::string> outputs;
  for (uint32_t ord = 0; ord < datasets_.size(); ++ord) {
    auto& ds = datasets_[ord];
    compute_vlad_batch(ds, vocab, options);
    DescriptorIndex index;
    DatasetRegistry solo;
    solo.add(&ds);
    index = build_index(solo);
    for (auto& key : index.keys) key.seq = ord;  // global ordinals
    index.row_of.clear();
    for (size_t r = 0; r < index.keys.size(); ++r) {
      index.row_of.emplace(index.keys[r], static_cast<int>(r));
    }
    const std::string out = path("vlads_" + ds.name + ".bin");
    save_index(index, out);
    outputs.push_back(out);
  }
  write_stamp("extract-vlad", outputs);
}

void Pipeline::load_vlads() {
  ensure_loaded();
  for (auto& ds : datasets_) {
    const std::string p = path("vlads_" + ds.name + ".bin");
    require_file(p, "extract-vlad");
    const DescriptorIndex index = load_index(p);
    if (index.rows() != static_cast<int>(ds.keyframes.size())) {
      throw DimensionError(p + ": row count does not match bundle");
    }
    for (int r = 0; r < index.rows(); ++r) {
      VladDescriptor vd;
      vd.values = index.descriptors.row(r).cast<double>().transpose();
      vd.zero = index.descriptors.row(r).isZero(0.0f);
      ds.keyframes[r].vlad = std::move(vd);
    }
  }
}

void Pipeline::build_index_stage() {
  ensure_loaded();
  check_upstream("extract-vlad");
  load_vlads();
  DatasetRegistry train;
  for (size_t i = 0; i < train_count_; ++i) train.add(&datasets_[i]);
  if (!train.datasets.empty()) {
    const DescriptorIndex index = build_index(train);
    save_index(index, path("index_train.bin"));
    write_stamp("index", {path("index_train.bin")});
  } else {
    write_stamp("index", {});
  }
}

namespace {

void write_cliques_csv(const std::vector<CliqueGraph>& cliques,
                       const DatasetRegistry& registry, const std::string& p) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p);
  out << "query_seq,query_id,cand_seq,cand_id,rank,similarity\n";
  for (const auto& clique : cliques) {
    const std::string qname = registry.sequence(clique.query.seq).name;
    for (size_t i = 1; i < clique.nodes.size(); ++i) {
      out << qname << ',' << clique.query.id << ','
          << registry.sequence(clique.nodes[i].seq).name << ',' << clique.nodes[i].id
          << ',' << i << ',' << fmt_g(clique.similarities[i - 1], 9) << "\n";
    }
  }
}

}  // namespace

void Pipeline::retrieve() {
  ensure_loaded();
  check_upstream("index");
  load_vlads();

  // Training cliques: inter-sequence retrieval over the merged train index.
  if (train_count_ > 0) {
    require_file(path("index_train.bin"), "index");
    const DescriptorIndex train_index = load_index(path("index_train.bin"));
    const auto cliques = build_cliques_all(train_index, registry_, config_.k_pct,
                                           config_.exclusion_window);
    write_cliques_csv(cliques, registry_, path("cliques_train.csv"));
  }

  // Evaluation cliques: intra-sequence retrieval, one index per sequence.
  std::vector<std::string> outputs = {path("cliques_train.csv")};
  for (size_t i = train_count_; i < datasets_.size(); ++i) {
    const auto& ds = datasets_[i];
    const DescriptorIndex index = load_index(path("vlads_" + ds.name + ".bin"));
    const auto cliques =
        build_cliques_all(index, registry_, config_.k_pct, config_.exclusion_window);
    const std::string out = path("cliques_eval_" + ds.name + ".csv");
    write_cliques_csv(cliques, registry_, out);
    outputs.push_back(out);
  }
  write_stamp("retrieve", outputs);
}

std::vector<CliqueGraph> Pipeline::load_cliques(const std::string& csv_path) {
  require_file(csv_path, "retrieve");
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot read " + csv_path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "query_seq,query_id,cand_seq,cand_id,rank,similarity") {
    throw FormatError(csv_path + ": unexpected clique header");
  }

  struct Neighbor {
    NodeKey key;
    float sim;
  };
  std::map<NodeKey, std::vector<Neighbor>> by_query;
  std::vector<NodeKey> query_order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    if (cols.size() != 6) throw FormatError(csv_path + ": bad row '" + line + "'");
    const NodeKey q{ordinal_of(cols[0]), static_cast<uint32_t>(std::stoul(cols[1]))};
    const NodeKey c{ordinal_of(cols[2]), static_cast<uint32_t>(std::stoul(cols[3]))};
    auto [it, inserted] = by_query.try_emplace(q);
    if (inserted) query_order.push_back(q);
    it->second.push_back({c, std::stof(cols[5])});
  }

  std::vector<CliqueGraph> cliques;
  cliques.reserve(query_order.size());
  for (const auto& q : query_order) {
    CliqueGraph clique;
    clique.query = q;
    clique.nodes.push_back(q);
    for (const auto& nb : by_query[q]) {
      clique.nodes.push_back(nb.key);
      clique.similarities.push_back(nb.sim);
    }
    const int n = clique.node_count();
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        clique.edges.emplace_back(i, j);
        clique.query_edge.push_back(i == 0 || j == 0);
      }
    }
    for (const auto& key : clique.nodes) clique.frames.push_back(&registry_.get(key));
    clique.validate();
    cliques.push_back(std::move(clique));
  }
  return cliques;
}

void Pipeline::train_stage() {
  ensure_loaded();
  check_upstream("retrieve");
  auto cliques = load_cliques(path("cliques_train.csv"));
  if (cliques.empty()) throw TrainingError("no training cliques available");

  std::vector<LabeledClique> labeled;
  labeled.reserve(cliques.size());
  for (auto& clique : cliques) {
    labeled.push_back(make_labeled(std::move(clique), config_.dist_thresh_m,
                                   config_.angle_thresh_deg));
  }

  // Deterministic validation split.
  std::vector<int> order(labeled.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(mix_seed(config_.seed, 0x5b11u));
  rng.shuffle(order);
  const size_t val_count =
      std::min(labeled.size() - 1,
               static_cast<size_t>(config_.val_fraction * labeled.size()));
  std::vector<LabeledClique> train_set, val_set;
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < val_count) {
      val_set.push_back(std::move(labeled[order[i]]));
    } else {
      train_set.push_back(std::move(labeled[order[i]]));
    }
  }

  ModelHyper hyper = config_.model;
  hyper.descriptor_dim = datasets_.front().descriptor_dim();
  TrainConfig tc = config_.training;
  tc.seed = config_.seed;

  const TrainResult result = train(train_set, val_set, hyper, tc);
  save_model(result.params, path("model.bin"));
  save_train_log(result.log, path("trainlog.csv"));
  write_stamp("train", {path("model.bin"), path("trainlog.csv")});
}

std::vector<ScoreRow> Pipeline::infer_sequence(const SequenceDataset& ds,
                                               const ModelParams<float>& params,
                                               const std::string& cliques_csv) {
  const auto cliques = load_cliques(cliques_csv);
  std::vector<ScoreRow> rows;
  const auto all_scores = infer_batch(cliques, params);
  for (size_t c = 0; c < cliques.size(); ++c) {
    const auto& clique = cliques[c];
    for (size_t e = 0; e < clique.edges.size(); ++e) {
      if (!clique.query_edge[e]) continue;
      const auto& [i, j] = clique.edges[e];
      const NodeKey& qk = clique.nodes[i] == clique.query ? clique.nodes[i] : clique.nodes[j];
      const NodeKey& ck = clique.nodes[i] == clique.query ? clique.nodes[j] : clique.nodes[i];
      ScoreRow row;
      row.query_seq = registry_.sequence(qk.seq).name;
      row.query_id = qk.id;
      row.cand_seq = registry_.sequence(ck.seq).name;
      row.cand_id = ck.id;
      row.score = all_scores[c][e];
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ScoreRow& a, const ScoreRow& b) {
    return std::tie(a.query_seq, a.query_id, a.cand_seq, a.cand_id) <
           std::tie(b.query_seq, b.query_id, b.cand_seq, b.cand_id);
  });
  (void)ds;
  return rows;
}

void Pipeline::infer() {
  ensure_loaded();
  require_file(path("model.bin"), "train");
  check_upstream("train");
  const ModelParams<float> params = load_model(path("model.bin"));
  std::vector<std::string> outputs;
  for (size_t i = train_count_; i < datasets_.size(); ++i) {
    const auto& ds = datasets_[i];
    const auto rows =
        infer_sequence(ds, params, path("cliques_eval_" + ds.name + ".csv"));
    const std::string out = path("scores_" + ds.name + ".csv");
    write_scores_csv(rows, out);
    outputs.push_back(out);
  }
  if (outputs.empty()) {
    throw ConfigError("infer requires [data].eval_bundles");
  }
  write_stamp("infer", outputs);
}

namespace {

// Only accepted loops are persisted; `outcome` must carry one.
VerifiedRow make_verified_row(const ScoredEdge& edge, const VerifyOutcome& outcome,
                              const DatasetRegistry& registry) {
  VerifiedRow row;
  row.seq_i = registry.sequence(edge.a.seq).name;
  row.id_i = edge.a.id;
  row.seq_j = registry.sequence(edge.b.seq).name;
  row.id_j = edge.b.id;
  row.score = edge.score;
  row.inlier_ratio = outcome.loop->inlier_ratio;
  if (outcome.loop->pose.has_value()) {
    const auto& pose = *outcome.loop->pose;
    row.pose_valid = 1;
    row.qw = pose.rotation.w();
    row.qx = pose.rotation.x();
    row.qy = pose.rotation.y();
    row.qz = pose.rotation.z();
    row.tx = pose.translation.x();
    row.ty = pose.translation.y();
    row.tz = pose.translation.z();
  }
  return row;
}

}  // namespace

void Pipeline::verify() {
  ensure_loaded();
  check_upstream("infer");
  std::vector<std::string> outputs;
  for (size_t i = train_count_; i < datasets_.size(); ++i) {
    const auto& ds = datasets_[i];
    const std::string scores_path = path("scores_" + ds.name + ".csv");
    require_file(scores_path, "infer");
    const auto rows = read_scores_csv(scores_path);

    std::vector<ScoredEdge> scored;
    scored.reserve(rows.size());
    for (const auto& r : rows) {
      scored.push_back({{ordinal_of(r.query_seq), r.query_id},
                        {ordinal_of(r.cand_seq), r.cand_id},
                        r.score});
    }
    std::vector<ScoredEdge> selected;
    if (config_.candidate_threshold.has_value()) {
      selected = select_candidates(scored, SelectMode::kThreshold,
                                   *config_.candidate_threshold);
    } else {
      selected =
          select_candidates(scored, SelectMode::kTopFraction, config_.candidate_fraction);
    }

    std::vector<PairTask> tasks;
    tasks.reserve(selected.size());
    for (const auto& se : selected) {
      PairTask task;
      task.key_i = se.a;
      task.key_j = se.b;
      task.frame_i = &registry_.get(se.a);
      task.frame_j = &registry_.get(se.b);
      task.score = se.score;
      tasks.push_back(task);
    }
    RansacConfig rc = config_.ransac;
    rc.seed = config_.seed;
    const auto outcomes = verify_pairs(tasks, ds.intrinsics, rc, config_.metric);

    std::vector<VerifiedRow> verified;
    for (size_t t = 0; t < tasks.size(); ++t) {
      if (!outcomes[t].accepted()) continue;
      verified.push_back(make_verified_row(selected[t], outcomes[t], registry_));
    }
    std::sort(verified.begin(), verified.end(), [](const VerifiedRow& a,
                                                   const VerifiedRow& b) {
      return std::tie(a.seq_i, a.id_i, a.seq_j, a.id_j) <
             std::tie(b.seq_i, b.id_i, b.seq_j, b.id_j);
    });
    const std::string out = path("verified_" + ds.name + ".csv");
    write_verified_csv(verified, out);
    outputs.push_back(out);
  }
  write_stamp("verify", outputs);
}

EvalReport Pipeline::eval(bool write_outputs) {
  ensure_loaded();
  check_upstream("infer");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<PairPrediction> predictions;
  for (size_t i = train_count_; i < datasets_.size(); ++i) {
    const auto& ds = datasets_[i];
    const std::string scores_path = path("scores_" + ds.name + ".csv");
    require_file(scores_path, "infer");
    for (const auto& r : read_scores_csv(scores_path)) {
      PairPrediction p;
      p.query = {ordinal_of(r.query_seq), r.query_id};
      p.candidate = {ordinal_of(r.cand_seq), r.cand_id};
      p.score = r.score;
      predictions.push_back(p);
    }
    const std::string verified_path = path("verified_" + ds.name + ".csv");
    if (fs::exists(verified_path)) {
      std::map<std::pair<NodeKey, NodeKey>, PredictedPose> poses;
      for (const auto& v : read_verified_csv(verified_path)) {
        if (!v.pose_valid) continue;
        PredictedPose pose;
        pose.rotation = Eigen::Quaterniond(v.qw, v.qx, v.qy, v.qz);
        pose.translation = Eigen::Vector3d(v.tx, v.ty, v.tz);
        poses[{{ordinal_of(v.seq_i), v.id_i}, {ordinal_of(v.seq_j), v.id_j}}] = pose;
      }
      for (auto& p : predictions) {
        auto it = poses.find({p.query, p.candidate});
        if (it != poses.end()) p.pose = it->second;
      }
    }
  }

  EvalReport report =
      evaluate(predictions, registry_, config_.dist_thresh_m, config_.angle_thresh_deg);
  report.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (write_outputs) {
    save_report(report, path("report.json"));
    for (const auto& se : report.per_sequence) {
      if (se.positives > 0) {
        save_pr_curve(se.curve, path("prcurve_" + se.sequence + ".csv"));
      }
    }
    write_stamp("eval", {path("report.json")});
  }
  return report;
}

std::vector<Pipeline::SweepPoint> Pipeline::sweep(const std::vector<double>& fractions,
                                                  bool write_outputs) {
  ensure_loaded();
  check_upstream("infer");
  std::vector<SweepPoint> points;

  for (double fraction : fractions) {
    std::vector<PairPrediction> predictions;
    int verified_pairs = 0;
    for (size_t i = train_count_; i < datasets_.size(); ++i) {
      const auto& ds = datasets_[i];
      const std::string scores_path = path("scores_" + ds.name + ".csv");
      require_file(scores_path, "infer");
      const auto rows = read_scores_csv(scores_path);
      std::vector<ScoredEdge> scored;
      for (const auto& r : rows) {
        scored.push_back({{ordinal_of(r.query_seq), r.query_id},
                          {ordinal_of(r.cand_seq), r.cand_id},
                          r.score});
      }
      const auto selected =
          select_candidates(scored, SelectMode::kTopFraction, fraction);
      std::vector<PairTask> tasks;
      for (const auto& se : selected) {
        tasks.push_back({se.a, se.b, &registry_.get(se.a), &registry_.get(se.b),
                         se.score});
      }
      RansacConfig rc = config_.ransac;
      rc.seed = config_.seed;
      const auto outcomes = verify_pairs(tasks, ds.intrinsics, rc, config_.metric);
      verified_pairs += static_cast<int>(tasks.size());

      // Candidates keep their GNN score band; verification promotes accepted
      // pairs above everything and demotes rejected ones below.
      std::map<std::pair<NodeKey, NodeKey>, int> verdict;  // 1 accept, -1 reject
      for (size_t t = 0; t < tasks.size(); ++t) {
        verdict[{tasks[t].key_i, tasks[t].key_j}] = outcomes[t].accepted() ? 1 : -1;
      }
      for (const auto& se : scored) {
        PairPrediction p;
        p.query = se.a;
        p.candidate = se.b;
        p.score = se.score;
        const auto key = se.a < se.b ? std::make_pair(se.a, se.b)
                                     : std::make_pair(se.b, se.a);
        auto it = verdict.find(key);
        if (it != verdict.end()) {
          p.score = it->second > 0 ? 2.0 + se.score : se.score - 2.0;
        }
        predictions.push_back(p);
      }
    }
    const EvalReport report = evaluate(predictions, registry_, config_.dist_thresh_m,
                                       config_.angle_thresh_deg);
    SweepPoint point;
    point.fraction = fraction;
    point.pairs_verified = verified_pairs;
    point.ap = report.avg_ap.value_or(0.0);
    point.mr = report.avg_mr.value_or(0.0);
    points.push_back(point);
  }

  if (write_outputs) {
    std::ofstream out(path("sweep.csv"));
    if (!out) throw IoError("cannot write sweep.csv");
    out << "fraction,pairs_verified,ap,mr\n";
    for (const auto& p : points) {
      out << fmt_g(p.fraction, 9) << ',' << p.pairs_verified << ',' << fmt_g(p.ap, 9)
          << ',' << fmt_g(p.mr, 9) << "\n";
    }
    write_stamp("sweep", {path("sweep.csv")});
  }
  return points;
}

void plot_pr_curve(const std::string& curve_csv, const std::string& out_dir) {
  const PrCurve curve = load_pr_curve(curve_csv);
  fs::create_directories(out_dir);
  PlotSeries series;
  series.label = "precision-recall";
  for (size_t i = 0; i < curve.recalls.size(); ++i) {
    series.points.emplace_back(curve.recalls[i], curve.precisions[i]);
  }
  PlotOptions options;
  options.title = "Precision-recall";
  options.x_label = "recall";
  options.y_label = "precision";
  write_line_chart((fs::path(out_dir) / "pr_curve.svg").string(), {series}, options);
  fs::copy_file(curve_csv, fs::path(out_dir) / "pr_curve.csv",
                fs::copy_options::overwrite_existing);
}

void plot_sweep(const std::string& sweep_csv, const std::string& out_dir) {
  std::ifstream in(sweep_csv);
  if (!in) throw IoError("cannot read " + sweep_csv);
  std::string line;
  if (!std::getline(in, line) || line != "fraction,pairs_verified,ap,mr") {
    throw FormatError(sweep_csv + ": unexpected sweep header");
  }
  PlotSeries series;
  series.label = "AP after verification";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split_csv(line);
    if (cols.size() != 4) throw FormatError(sweep_csv + ": bad row '" + line + "'");
    series.points.emplace_back(std::stod(cols[1]), std::stod(cols[2]));
  }
  if (series.points.empty()) throw FormatError(sweep_csv + ": empty sweep");
  fs::create_directories(out_dir);
  PlotOptions options;
  options.title = "AP vs verified candidate count";
  options.x_label = "verified keyframe pairs";
  options.y_label = "AP";
  options.log_x = true;
  write_line_chart((fs::path(out_dir) / "sweep.svg").string(), {series}, options);
  fs::copy_file(sweep_csv, fs::path(out_dir) / "sweep.csv",
                fs::copy_options::overwrite_existing);
}

}  // namespace lg
