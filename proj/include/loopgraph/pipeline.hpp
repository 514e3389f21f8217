#pragma once

#include <optional>
#include <string>
#include <vector>

#include "loopgraph/config.hpp"
#include "loopgraph/metrics.hpp"

namespace lg {

struct ScoreRow {
  std::string query_seq;
  uint32_t query_id = 0;
  std::string cand_seq;
  uint32_t cand_id = 0;
  double score = 0;
};

struct VerifiedRow {
  std::string seq_i;
  uint32_t id_i = 0;
  std::string seq_j;
  uint32_t id_j = 0;
  double score = 0;
  double inlier_ratio = 0;
  double qw = 1, qx = 0, qy = 0, qz = 0;
  double tx = 0, ty = 0, tz = 0;
  int pose_valid = 0;
};

void write_scores_csv(const std::vector<ScoreRow>& rows, const std::string& path);
std::vector<ScoreRow> read_scores_csv(const std::string& path);
void write_verified_csv(const std::vector<VerifiedRow>& rows, const std::string& path);
std::vector<VerifiedRow> read_verified_csv(const std::string& path);

// Stage artifacts live under a single working directory:
//   bundles/<seq>/...      (synth output; external bundles stay in place)
//   vocab.bin              fit-vocab
//   vlads_<seq>.bin        extract-vlad
//   index_train.bin        index
//   cliques_train.csv      retrieve
//   cliques_eval_<seq>.csv retrieve
//   model.bin trainlog.csv train
//   scores_<seq>.csv       infer
//   verified_<seq>.csv     verify
//   report.json prcurve_<seq>.csv sweep.csv   eval
// Every stage writes stamps/<stage>.json carrying the config hash; a stage
// warns (stderr) when an upstream stamp was produced under a different hash.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::string workdir);

  void synth();
  void fit_vocab();
  void extract_vlad();
  void build_index_stage();
  void retrieve();
  void train_stage();
  void infer();
  void verify();
  EvalReport eval(bool write_outputs = true);

  // AP/MR of the verification-augmented ranking at each candidate fraction.
  struct SweepPoint {
    double fraction = 0;
    int pairs_verified = 0;
    double ap = 0;
    double mr = 0;
  };
  std::vector<SweepPoint> sweep(const std::vector<double>& fractions,
                                bool write_outputs = true);

  const PipelineConfig& config() const { return config_; }
  const std::string& workdir() const { return workdir_; }

 private:
  void ensure_loaded();
  void load_vlads();
  std::string path(const std::string& name) const;
  void write_stamp(const std::string& stage,
                   const std::vector<std::string>& input_files) const;
  void check_upstream(const std::string& stage) const;
  void require_file(const std::string& p, const std::string& producer) const;
  uint32_t ordinal_of(const std::string& sequence_name) const;

  std::vector<CliqueGraph> load_cliques(const std::string& csv_path);
  std::vector<ScoreRow> infer_sequence(const SequenceDataset& ds,
                                       const ModelParams<float>& params,
                                       const std::string& cliques_csv);

  PipelineConfig config_;
  std::string workdir_;
  std::vector<SequenceDataset> datasets_;
  DatasetRegistry registry_;
  size_t train_count_ = 0;
  bool loaded_ = false;
};

// PR-curve and sweep plots: SVG plus a copy of the underlying CSV.
void plot_pr_curve(const std::string& curve_csv, const std::string& out_dir);
void plot_sweep(const std::string& sweep_csv, const std::string& out_dir);

}  // namespace lg
