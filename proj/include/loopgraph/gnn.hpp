#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loopgraph/retrieval.hpp"

namespace lg {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Soft-assignment VLAD aggregation parameters.
template <typename Scalar>
struct NetVladParams {
  MatX<Scalar> cluster_weights;  // N_C' x N_KD
  MatX<Scalar> cluster_biases;   // N_C' x 1
  MatX<Scalar> cluster_centers;  // N_C' x N_KD

  int clusters() const { return static_cast<int>(cluster_centers.rows()); }
  int dim() const { return static_cast<int>(cluster_centers.cols()); }
};

// One attention head per entry of the weight/attention vectors.
template <typename Scalar>
struct GatLayerParams {
  std::vector<MatX<Scalar>> weight;     // d_out x d_in
  std::vector<MatX<Scalar>> attention;  // 2*d_out x 1
};

struct ModelHyper {
  int message_passing_steps = 6;  // 0 disables message passing entirely
  int heads = 1;
  int netvlad_clusters = 64;
  int descriptor_dim = 0;
  int node_dim = 256;
  int mlp_hidden = 256;
  double dropout = 0.2;
  double leaky_slope = 0.2;
  bool edge_dropout = false;  // drop clique edges instead of node features

  void validate() const;
};

template <typename Scalar>
struct ModelParams {
  ModelHyper hyper;
  NetVladParams<Scalar> netvlad;
  MatX<Scalar> proj_weight;  // node_dim x (N_C' * N_KD)
  MatX<Scalar> proj_bias;    // node_dim x 1
  std::vector<GatLayerParams<Scalar>> gat_layers;
  MatX<Scalar> mlp_w1;  // mlp_hidden x (2 * node_dim)
  MatX<Scalar> mlp_b1;  // mlp_hidden x 1
  MatX<Scalar> mlp_w2;  // 1 x mlp_hidden
  MatX<Scalar> mlp_b2;  // 1 x 1

  void validate() const;
};

// Fixed iteration order over every learnable tensor; shared by the optimizer,
// serialization, and the finite-difference checker.
template <typename Scalar>
std::vector<std::pair<std::string, MatX<Scalar>*>> named_tensors(ModelParams<Scalar>& p);

ModelParams<float> init_params(const ModelHyper& hyper, uint64_t seed);

template <typename Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& p);

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p);

uint64_t params_checksum(const ModelParams<float>& p);

template <typename Scalar>
struct NodeFeature {
  VecX<Scalar> values;
  bool zero = false;
};

// Softmax cluster assignment over learned logits, residual aggregation,
// intra-normalization per block, global L2 normalization. Aggregation uses a
// canonical row order, so the output is invariant to row permutations.
template <typename Scalar>
NodeFeature<Scalar> netvlad_forward(const MatX<Scalar>& descriptors,
                                    const NetVladParams<Scalar>& params);

// Single GAT layer (LeakyReLU attention logits, softmax over neighborhood
// plus self-loop, ELU output, heads averaged). Exposed for direct testing.
template <typename Scalar>
MatX<Scalar> gat_layer_forward(const MatX<Scalar>& features,
                               const std::vector<std::pair<int, int>>& edges,
                               const GatLayerParams<Scalar>& params,
                               double leaky_slope = 0.2);

// Per-edge loop scores in (0, 1), in the clique's edge order. The score of an
// edge is sigmoid of the mean of both concatenation orders of the MLP logit.
template <typename Scalar>
std::vector<Scalar> model_forward(const CliqueGraph& clique,
                                  const ModelParams<Scalar>& params,
                                  bool train_mode = false, uint64_t dropout_seed = 0);

// Mean binary cross-entropy of the supervised edges; accumulates parameter
// gradients into `grads` (same shapes as the model).
template <typename Scalar>
Scalar model_loss_grad(const CliqueGraph& clique, const std::vector<int>& labels,
                       const ModelParams<Scalar>& params, ModelParams<Scalar>& grads,
                       bool train_mode = false, uint64_t dropout_seed = 0);

struct EdgeLabel {
  NodeKey a;
  NodeKey b;
  int label = 0;
  double distance_m = 0;
  double angle_deg = 0;
};

// Pose-derived supervision: label 1 iff distance < dist_thresh and geodesic
// angle < angle_thresh (both strict).
std::vector<EdgeLabel> label_edges(const CliqueGraph& clique,
                                   double dist_thresh_m = 4.0,
                                   double angle_thresh_deg = 30.0);

double bce_loss(const std::vector<double>& scores, const std::vector<int>& labels);

struct ScoredEdge {
  NodeKey a;
  NodeKey b;
  double score = 0;
};

// model_forward restricted to edges flagged query_edge.
std::vector<ScoredEdge> predict_query_edges(const CliqueGraph& clique,
                                            const ModelParams<float>& params);

enum class SelectMode { kTopFraction, kThreshold };

constexpr double kDefaultCandidateFraction = 0.005;

// top_fraction keeps ceil(value * count) highest-scoring pairs; threshold
// keeps scores > value. Pairs are deduplicated by unordered key, keeping the
// highest score.
std::vector<ScoredEdge> select_candidates(const std::vector<ScoredEdge>& scored,
                                          SelectMode mode, double value);

struct LabeledClique {
  CliqueGraph clique;
  std::vector<int> labels;  // per edge, clique edge order
};

LabeledClique make_labeled(CliqueGraph clique, double dist_thresh_m = 4.0,
                           double angle_thresh_deg = 30.0);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 2;  // cliques per optimizer step
  int epochs = 10;
  double dropout = 0.2;
  uint64_t seed = 0;
  std::string early_stopping_metric = "ap";  // "ap", "mr", or "ap_mr"
  int patience = 3;

  void validate() const;
};

struct TrainLogRow {
  int epoch = 0;
  int step = 0;
  double loss = 0;
  std::optional<double> val_ap;
  std::optional<double> val_mr;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<TrainLogRow> log;
  int best_epoch = 0;
  std::optional<double> best_val_ap;
  std::optional<double> best_val_mr;
};

// Adam (beta1 0.9, beta2 0.999) over mini-batches of cliques, supervising all
// clique edges; early stopping on validation query-edge AP/MR. Deterministic
// under config.seed for any worker count.
TrainResult train(const std::vector<LabeledClique>& train_set,
                  const std::vector<LabeledClique>& val_set, const ModelHyper& hyper,
                  const TrainConfig& config);

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path);

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_tensor;
};

// Central finite differences against the analytic gradient, sampled per
// tensor. Run with double-precision params.
GradCheckResult gradient_check(const ModelParams<double>& params,
                               const CliqueGraph& clique, const std::vector<int>& labels,
                               double epsilon = 1e-5, int samples_per_tensor = 8,
                               uint64_t seed = 0);

// Batch inference (inference mode, no dropout); parallel over cliques with
// per-clique outputs, identical to the serial variant.
std::vector<std::vector<double>> infer_batch(const std::vector<CliqueGraph>& cliques,
                                             const ModelParams<float>& params);
std::vector<std::vector<double>> infer_batch_serial(const std::vector<CliqueGraph>& cliques,
                                                    const ModelParams<float>& params);

// Model file: "LGNN" | u32 version | hyper block | named f32 tensors.
void save_model(const ModelParams<float>& params, const std::string& path);
ModelParams<float> load_model(const std::string& path);

}  // namespace lg
