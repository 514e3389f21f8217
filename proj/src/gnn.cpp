#include "loopgraph/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "loopgraph/binio.hpp"
#include "loopgraph/metrics.hpp"
#include "loopgraph/rng.hpp"

namespace lg {

void ModelHyper::validate() const {
  if (message_passing_steps < 0 || heads < 1 || netvlad_clusters < 1 ||
      descriptor_dim < 1 || node_dim < 1 || mlp_hidden < 1) {
    throw InvalidArgumentError("invalid model hyperparameters");
  }
  if (dropout < 0 || dropout >= 1) {
    throw InvalidArgumentError("dropout must be in [0, 1)");
  }
}

template <typename Scalar>
void ModelParams<Scalar>::validate() const {
  hyper.validate();
  const int c = hyper.netvlad_clusters;
  const int d = hyper.descriptor_dim;
  const int nd = hyper.node_dim;
  if (netvlad.cluster_weights.rows() != c || netvlad.cluster_weights.cols() != d ||
      netvlad.cluster_biases.rows() != c || netvlad.cluster_centers.rows() != c ||
      netvlad.cluster_centers.cols() != d) {
    throw DimensionError("netvlad parameter shapes inconsistent with hyperparameters");
  }
  if (proj_weight.rows() != nd ||
      proj_weight.cols() != static_cast<long>(c) * d || proj_bias.rows() != nd) {
    throw DimensionError("projection shape inconsistent");
  }
  if (static_cast<int>(gat_layers.size()) != hyper.message_passing_steps) {
    throw DimensionError("GAT layer count != message passing steps");
  }
  for (const auto& layer : gat_layers) {
    if (static_cast<int>(layer.weight.size()) != hyper.heads ||
        static_cast<int>(layer.attention.size()) != hyper.heads) {
      throw DimensionError("GAT head count inconsistent");
    }
    for (int h = 0; h < hyper.heads; ++h) {
      if (layer.weight[h].rows() != nd || layer.weight[h].cols() != nd ||
          layer.attention[h].rows() != 2 * nd) {
        throw DimensionError("GAT layer widths do not chain");
      }
    }
  }
  if (mlp_w1.rows() != hyper.mlp_hidden || mlp_w1.cols() != 2 * nd ||
      mlp_b1.rows() != hyper.mlp_hidden || mlp_w2.rows() != 1 ||
      mlp_w2.cols() != hyper.mlp_hidden || mlp_b2.rows() != 1) {
    throw DimensionError("edge MLP shape inconsistent");
  }
}

template <typename Scalar>
std::vector<std::pair<std::string, MatX<Scalar>*>> named_tensors(ModelParams<Scalar>& p) {
  std::vector<std::pair<std::string, MatX<Scalar>*>> out;
  out.emplace_back("netvlad.weights", &p.netvlad.cluster_weights);
  out.emplace_back("netvlad.biases", &p.netvlad.cluster_biases);
  out.emplace_back("netvlad.centers", &p.netvlad.cluster_centers);
  out.emplace_back("proj.weight", &p.proj_weight);
  out.emplace_back("proj.bias", &p.proj_bias);
  for (size_t l = 0; l < p.gat_layers.size(); ++l) {
    for (size_t h = 0; h < p.gat_layers[l].weight.size(); ++h) {
      out.emplace_back("gat." + std::to_string(l) + "." + std::to_string(h) + ".weight",
                       &p.gat_layers[l].weight[h]);
      out.emplace_back("gat." + std::to_string(l) + "." + std::to_string(h) + ".attention",
                       &p.gat_layers[l].attention[h]);
    }
  }
  out.emplace_back("edge_mlp.w1", &p.mlp_w1);
  out.emplace_back("edge_mlp.b1", &p.mlp_b1);
  out.emplace_back("edge_mlp.w2", &p.mlp_w2);
  out.emplace_back("edge_mlp.b2", &p.mlp_b2);
  return out;
}

ModelParams<float> init_params(const ModelHyper& hyper, uint64_t seed) {
  hyper.validate();
  ModelParams<float> p;
  p.hyper = hyper;
  const int c = hyper.netvlad_clusters;
  const int d = hyper.descriptor_dim;
  const int nd = hyper.node_dim;
  p.netvlad.cluster_weights.resize(c, d);
  p.netvlad.cluster_biases = MatX<float>::Zero(c, 1);
  p.netvlad.cluster_centers.resize(c, d);
  p.proj_weight.resize(nd, static_cast<long>(c) * d);
  p.proj_bias = MatX<float>::Zero(nd, 1);
  p.gat_layers.resize(hyper.message_passing_steps);
  for (auto& layer : p.gat_layers) {
    layer.weight.resize(hyper.heads);
    layer.attention.resize(hyper.heads);
    for (int h = 0; h < hyper.heads; ++h) {
      layer.weight[h].resize(nd, nd);
      layer.attention[h].resize(2 * nd, 1);
    }
  }
  p.mlp_w1.resize(hyper.mlp_hidden, 2 * nd);
  p.mlp_b1 = MatX<float>::Zero(hyper.mlp_hidden, 1);
  p.mlp_w2.resize(1, hyper.mlp_hidden);
  p.mlp_b2 = MatX<float>::Zero(1, 1);

  // Glorot-style uniform ranges; biases stay zero.
  Rng rng(mix_seed(seed, 0x67a7u));
  auto fill = [&rng](MatX<float>& m, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (long i = 0; i < m.rows(); ++i) {
      for (long j = 0; j < m.cols(); ++j) {
        m(i, j) = static_cast<float>(rng.uniform(-limit, limit));
      }
    }
  };
  fill(p.netvlad.cluster_weights, d, c);
  fill(p.netvlad.cluster_centers, d, c);
  fill(p.proj_weight, static_cast<double>(c) * d, nd);
  for (auto& layer : p.gat_layers) {
    for (int h = 0; h < p.hyper.heads; ++h) {
      fill(layer.weight[h], nd, nd);
      fill(layer.attention[h], 2.0 * nd, 1.0);
    }
  }
  fill(p.mlp_w1, 2.0 * nd, hyper.mlp_hidden);
  fill(p.mlp_w2, hyper.mlp_hidden, 1.0);
  p.validate();
  return p;
}

template <typename Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& p) {
  ModelParams<Scalar> z = p;
  for (auto& [name, mat] : named_tensors(z)) {
    mat->setZero();
  }
  return z;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  out.hyper = p.hyper;
  out.netvlad.cluster_weights = p.netvlad.cluster_weights.template cast<To>();
  out.netvlad.cluster_biases = p.netvlad.cluster_biases.template cast<To>();
  out.netvlad.cluster_centers = p.netvlad.cluster_centers.template cast<To>();
  out.proj_weight = p.proj_weight.template cast<To>();
  out.proj_bias = p.proj_bias.template cast<To>();
  out.gat_layers.resize(p.gat_layers.size());
  for (size_t l = 0; l < p.gat_layers.size(); ++l) {
    for (const auto& w : p.gat_layers[l].weight) {
      out.gat_layers[l].weight.push_back(w.template cast<To>());
    }
    for (const auto& a : p.gat_layers[l].attention) {
      out.gat_layers[l].attention.push_back(a.template cast<To>());
    }
  }
  out.mlp_w1 = p.mlp_w1.template cast<To>();
  out.mlp_b1 = p.mlp_b1.template cast<To>();
  out.mlp_w2 = p.mlp_w2.template cast<To>();
  out.mlp_b2 = p.mlp_b2.template cast<To>();
  return out;
}

uint64_t params_checksum(const ModelParams<float>& p) {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto feed = [&h](const void* data, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  feed(&p.hyper.message_passing_steps, sizeof(int));
  feed(&p.hyper.heads, sizeof(int));
  auto tensors = named_tensors(const_cast<ModelParams<float>&>(p));
  for (auto& [name, mat] : tensors) {
    feed(name.data(), name.size());
    feed(mat->data(), sizeof(float) * mat->size());
  }
  return h;
}

namespace {

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

// Stable BCE directly from the logit, y in {0, 1}.
template <typename Scalar>
Scalar bce_from_logit(Scalar z, Scalar y) {
  return std::max(z, Scalar(0)) - y * z + std::log1p(std::exp(-std::abs(z)));
}

template <typename Scalar>
std::vector<int> canonical_rows(const MatX<Scalar>& rows) {
  std::vector<int> order(rows.rows());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (long d = 0; d < rows.cols(); ++d) {
      if (rows(a, d) != rows(b, d)) return rows(a, d) < rows(b, d);
    }
    return false;
  });
  return order;
}

template <typename Scalar>
struct NetVladCache {
  MatX<Scalar> f;       // canonical-row-sorted descriptors
  MatX<Scalar> assign;  // N_K x C softmax assignments
  VecX<Scalar> sums;    // per-cluster assignment mass
  MatX<Scalar> raw;     // C x d residual blocks before intra-norm
  VecX<Scalar> block_norms;
  MatX<Scalar> normed;  // C x d blocks after intra-norm
  Scalar global_norm = 0;
  VecX<Scalar> v;       // final feature
  bool zero = false;
};

template <typename Scalar>
void netvlad_forward_cached(const MatX<Scalar>& descriptors,
                            const NetVladParams<Scalar>& params,
                            NetVladCache<Scalar>* cache) {
  const int c = params.clusters();
  const int d = params.dim();
  const long vdim = static_cast<long>(c) * d;
  cache->v = VecX<Scalar>::Zero(vdim);
  if (descriptors.rows() == 0) {
    cache->zero = true;
    return;
  }
  if (descriptors.cols() != d) {
    throw DimensionError("netvlad_forward: descriptor dim mismatch");
  }

  const auto order = canonical_rows(descriptors);
  cache->f.resize(descriptors.rows(), d);
  for (size_t i = 0; i < order.size(); ++i) cache->f.row(i) = descriptors.row(order[i]);
  const MatX<Scalar>& f = cache->f;
  const long nk = f.rows();

  MatX<Scalar> logits = f * params.cluster_weights.transpose();
  logits.rowwise() += params.cluster_biases.col(0).transpose();
  cache->assign.resize(nk, c);
  for (long k = 0; k < nk; ++k) {
    const Scalar m = logits.row(k).maxCoeff();
    cache->assign.row(k) = (logits.row(k).array() - m).exp();
    cache->assign.row(k) /= cache->assign.row(k).sum();
  }
  cache->sums = cache->assign.colwise().sum().transpose();
  cache->raw = cache->assign.transpose() * f -
               cache->sums.asDiagonal() * params.cluster_centers;

  cache->block_norms.resize(c);
  cache->normed = cache->raw;
  for (int j = 0; j < c; ++j) {
    const Scalar nm = cache->raw.row(j).norm();
    cache->block_norms(j) = nm;
    if (nm > 0) cache->normed.row(j) /= nm;
  }
  for (int j = 0; j < c; ++j) {
    cache->v.segment(static_cast<long>(j) * d, d) = cache->normed.row(j).transpose();
  }
  cache->global_norm = cache->v.norm();
  if (cache->global_norm > 0) {
    cache->v /= cache->global_norm;
  } else {
    cache->zero = true;
  }
}

template <typename Scalar>
void netvlad_backward(const NetVladParams<Scalar>& params, const NetVladCache<Scalar>& cache,
                      const VecX<Scalar>& dv, NetVladParams<Scalar>* grads) {
  if (cache.zero) return;
  const int c = params.clusters();
  const int d = params.dim();

  // Global L2 normalization.
  const VecX<Scalar> draw_flat =
      (dv - cache.v * cache.v.dot(dv)) / cache.global_norm;

  // Intra-normalization per block.
  MatX<Scalar> du(c, d);
  for (int j = 0; j < c; ++j) {
    const VecX<Scalar> dn = draw_flat.segment(static_cast<long>(j) * d, d);
    if (cache.block_norms(j) > 0) {
      const VecX<Scalar> nj = cache.normed.row(j).transpose();
      du.row(j) = ((dn - nj * nj.dot(dn)) / cache.block_norms(j)).transpose();
    } else {
      du.row(j).setZero();
    }
  }

  // raw = assign^T f - diag(sums) centers
  VecX<Scalar> r(c);  // dU_j . centers_j
  for (int j = 0; j < c; ++j) {
    r(j) = du.row(j).dot(params.cluster_centers.row(j));
  }
  grads->cluster_centers.noalias() -= cache.sums.asDiagonal() * du;

  MatX<Scalar> dassign = cache.f * du.transpose();
  dassign.rowwise() -= r.transpose();

  // Softmax backward (per keypoint row).
  MatX<Scalar> dlogits(dassign.rows(), c);
  for (long k = 0; k < dassign.rows(); ++k) {
    const Scalar dot = dassign.row(k).dot(cache.assign.row(k));
    dlogits.row(k) =
        cache.assign.row(k).cwiseProduct((dassign.row(k).array() - dot).matrix());
  }

  grads->cluster_weights.noalias() += dlogits.transpose() * cache.f;
  grads->cluster_biases.col(0).noalias() += dlogits.colwise().sum().transpose();
}

template <typename Scalar>
struct GatHeadCache {
  MatX<Scalar> h;                           // n x D transformed features
  VecX<Scalar> p, q;                        // attention projections
  std::vector<VecX<Scalar>> alpha;          // per node, over its neighbor list
  MatX<Scalar> z;                           // pre-activation outputs
};

template <typename Scalar>
struct GatLayerCache {
  MatX<Scalar> input;  // after dropout
  MatX<Scalar> dropout_mask;
  std::vector<std::vector<int>> neighbors;  // effective lists (edge dropout applied)
  std::vector<GatHeadCache<Scalar>> heads;
};

template <typename Scalar>
struct EdgeCache {
  int a = 0, b = 0;  // canonical node indices, a < b
  // Direction 0 uses [x_a ; x_b], direction 1 uses [x_b ; x_a].
  VecX<Scalar> hidden_pre[2];
  VecX<Scalar> hidden[2];
  Scalar logit = 0;
  Scalar score = 0;
};

// One clique forward/backward pass over the canonicalized graph. Node and
// neighbor processing orders are derived from sorted NodeKeys, which makes
// every score bitwise independent of the clique's storage order.
template <typename Scalar>
class Computation {
 public:
  Computation(const CliqueGraph& clique, const ModelParams<Scalar>& params,
              bool train_mode, uint64_t dropout_seed)
      : clique_(clique), params_(params), train_(train_mode), seed_(dropout_seed) {
    params_.validate();
    const int n = clique.node_count();
    if (static_cast<int>(clique.frames.size()) != n) {
      throw InvalidArgumentError("clique nodes are not resolved to keyframes");
    }

    // Canonical node order: sorted NodeKeys.
    std::vector<int> storage(n);
    std::iota(storage.begin(), storage.end(), 0);
    std::sort(storage.begin(), storage.end(), [&](int a, int b) {
      return clique.nodes[a] < clique.nodes[b];
    });
    storage_of_canon_ = storage;
    canon_of_storage_.resize(n);
    for (int c = 0; c < n; ++c) canon_of_storage_[storage[c]] = c;

    neighbors_.assign(n, {});
    edge_nodes_.resize(clique.edges.size());
    for (size_t e = 0; e < clique.edges.size(); ++e) {
      const int ca = canon_of_storage_[clique.edges[e].first];
      const int cb = canon_of_storage_[clique.edges[e].second];
      edge_nodes_[e] = {std::min(ca, cb), std::max(ca, cb)};
      neighbors_[ca].push_back(cb);
      neighbors_[cb].push_back(ca);
    }
    for (int c = 0; c < n; ++c) {
      neighbors_[c].push_back(c);  // self-loop
      std::sort(neighbors_[c].begin(), neighbors_[c].end());
      neighbors_[c].erase(std::unique(neighbors_[c].begin(), neighbors_[c].end()),
                          neighbors_[c].end());
    }
  }

  std::vector<Scalar> forward() {
    const int n = clique_.node_count();
    const int nd = params_.hyper.node_dim;

    node_caches_.resize(n);
    features_ = MatX<Scalar>(n, nd);
    for (int c = 0; c < n; ++c) {
      const Keyframe* kf = clique_.frames[storage_of_canon_[c]];
      const MatX<Scalar> desc = kf->descriptors.values.template cast<Scalar>();
      netvlad_forward_cached(desc, params_.netvlad, &node_caches_[c]);
      features_.row(c) =
          (params_.proj_weight * node_caches_[c].v + params_.proj_bias.col(0))
              .transpose();
    }

    layer_caches_.clear();
    layer_caches_.resize(params_.gat_layers.size());
    for (size_t l = 0; l < params_.gat_layers.size(); ++l) {
      features_ = run_layer(static_cast<int>(l), features_);
    }

    // Edge scores.
    edge_caches_.resize(clique_.edges.size());
    std::vector<Scalar> scores(clique_.edges.size());
    for (size_t e = 0; e < clique_.edges.size(); ++e) {
      auto& ec = edge_caches_[e];
      ec.a = edge_nodes_[e].first;
      ec.b = edge_nodes_[e].second;
      Scalar zsum = 0;
      for (int dir = 0; dir < 2; ++dir) {
        const int s = dir == 0 ? ec.a : ec.b;
        const int t = dir == 0 ? ec.b : ec.a;
        VecX<Scalar> cat(2 * params_.hyper.node_dim);
        cat.head(params_.hyper.node_dim) = features_.row(s).transpose();
        cat.tail(params_.hyper.node_dim) = features_.row(t).transpose();
        ec.hidden_pre[dir] = params_.mlp_w1 * cat + params_.mlp_b1.col(0);
        ec.hidden[dir] = ec.hidden_pre[dir].cwiseMax(Scalar(0));
        zsum += (params_.mlp_w2 * ec.hidden[dir])(0, 0) + params_.mlp_b2(0, 0);
      }
      ec.logit = zsum / Scalar(2);
      ec.score = sigmoid(ec.logit);
      scores[e] = ec.score;
    }
    return scores;
  }

  // Mean BCE over all edges; fills parameter gradients.
  Scalar backward(const std::vector<int>& labels, ModelParams<Scalar>* grads) {
    const size_t ne = clique_.edges.size();
    if (labels.size() != ne) {
      throw DimensionError("edge label count does not match clique edges");
    }
    if (ne == 0) return Scalar(0);
    const int nd = params_.hyper.node_dim;

    Scalar loss = 0;
    MatX<Scalar> dx = MatX<Scalar>::Zero(features_.rows(), nd);
    for (size_t e = 0; e < ne; ++e) {
      auto& ec = edge_caches_[e];
      const Scalar y = static_cast<Scalar>(labels[e]);
      loss += bce_from_logit(ec.logit, y);
      const Scalar dlogit = (ec.score - y) / static_cast<Scalar>(ne);
      for (int dir = 0; dir < 2; ++dir) {
        const int s = dir == 0 ? ec.a : ec.b;
        const int t = dir == 0 ? ec.b : ec.a;
        const Scalar dz = dlogit / Scalar(2);
        grads->mlp_w2.noalias() += dz * ec.hidden[dir].transpose();
        grads->mlp_b2(0, 0) += dz;
        VecX<Scalar> dh = params_.mlp_w2.transpose() * dz;
        for (long i = 0; i < dh.size(); ++i) {
          if (ec.hidden_pre[dir](i) <= 0) dh(i) = 0;
        }
        VecX<Scalar> cat(2 * nd);
        cat.head(nd) = features_.row(s).transpose();
        cat.tail(nd) = features_.row(t).transpose();
        grads->mlp_w1.noalias() += dh * cat.transpose();
        grads->mlp_b1.col(0).noalias() += dh;
        const VecX<Scalar> dcat = params_.mlp_w1.transpose() * dh;
        dx.row(s) += dcat.head(nd).transpose();
        dx.row(t) += dcat.tail(nd).transpose();
      }
    }
    loss /= static_cast<Scalar>(ne);

    for (int l = static_cast<int>(params_.gat_layers.size()) - 1; l >= 0; --l) {
      dx = backward_layer(l, dx, grads);
    }

    // Projection and NetVLAD.
    for (int c = 0; c < static_cast<int>(features_.rows()); ++c) {
      const VecX<Scalar> dxi = dx.row(c).transpose();
      grads->proj_weight.noalias() += dxi * node_caches_[c].v.transpose();
      grads->proj_bias.col(0).noalias() += dxi;
      const VecX<Scalar> dv = params_.proj_weight.transpose() * dxi;
      netvlad_backward(params_.netvlad, node_caches_[c], dv, &grads->netvlad);
    }
    return loss;
  }

 private:
  MatX<Scalar> run_layer(int l, const MatX<Scalar>& prev) {
    auto& cache = layer_caches_[l];
    const int n = static_cast<int>(prev.rows());
    const int nd = params_.hyper.node_dim;
    const Scalar slope = static_cast<Scalar>(params_.hyper.leaky_slope);
    const Scalar p_drop = static_cast<Scalar>(params_.hyper.dropout);

    cache.input = prev;
    if (train_ && p_drop > 0 && !params_.hyper.edge_dropout) {
      cache.dropout_mask = MatX<Scalar>(n, nd);
      const Scalar keep_scale = Scalar(1) / (Scalar(1) - p_drop);
      for (int c = 0; c < n; ++c) {
        Rng rng(mix_seed(seed_, static_cast<uint64_t>(l), static_cast<uint64_t>(c)));
        for (int f = 0; f < nd; ++f) {
          cache.dropout_mask(c, f) =
              rng.uniform() < static_cast<double>(p_drop) ? Scalar(0) : keep_scale;
        }
      }
      cache.input = cache.input.cwiseProduct(cache.dropout_mask);
    }

    std::vector<char> edge_drop;
    if (train_ && p_drop > 0 && params_.hyper.edge_dropout) {
      edge_drop.resize(edge_nodes_.size(), 0);
      Rng rng(mix_seed(seed_, static_cast<uint64_t>(l), 0x0edeu));
      for (size_t e = 0; e < edge_nodes_.size(); ++e) {
        edge_drop[e] = rng.uniform() < static_cast<double>(p_drop) ? 1 : 0;
      }
    }
    cache.neighbors = neighbors_;
    if (!edge_drop.empty()) {
      // Rebuild neighbor lists without the dropped edges (self-loops stay).
      std::vector<std::vector<int>> kept(neighbors_.size());
      for (size_t c = 0; c < kept.size(); ++c) kept[c].push_back(static_cast<int>(c));
      for (size_t e = 0; e < edge_nodes_.size(); ++e) {
        if (edge_drop[e]) continue;
        kept[edge_nodes_[e].first].push_back(edge_nodes_[e].second);
        kept[edge_nodes_[e].second].push_back(edge_nodes_[e].first);
      }
      for (auto& lst : kept) {
        std::sort(lst.begin(), lst.end());
        lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
      }
      cache.neighbors = kept;
    }

    const int heads = params_.hyper.heads;
    cache.heads.resize(heads);
    MatX<Scalar> out = MatX<Scalar>::Zero(n, nd);
    for (int h = 0; h < heads; ++h) {
      auto& hc = cache.heads[h];
      const auto& w = params_.gat_layers[l].weight[h];
      const auto& a = params_.gat_layers[l].attention[h];
      hc.h = cache.input * w.transpose();
      hc.p = hc.h * a.col(0).head(nd);
      hc.q = hc.h * a.col(0).tail(nd);
      hc.alpha.resize(n);
      hc.z = MatX<Scalar>::Zero(n, nd);
      for (int m = 0; m < n; ++m) {
        const auto& nbrs = cache.neighbors[m];
        VecX<Scalar> e(nbrs.size());
        for (size_t i = 0; i < nbrs.size(); ++i) {
          const Scalar t = hc.p(m) + hc.q(nbrs[i]);
          e(i) = t > 0 ? t : slope * t;
        }
        const Scalar emax = e.maxCoeff();
        VecX<Scalar> alpha = (e.array() - emax).exp();
        alpha /= alpha.sum();
        hc.alpha[m] = alpha;
        for (size_t i = 0; i < nbrs.size(); ++i) {
          hc.z.row(m) += alpha(i) * hc.h.row(nbrs[i]);
        }
      }
      // ELU then head averaging.
      for (int m = 0; m < n; ++m) {
        for (int f = 0; f < nd; ++f) {
          const Scalar z = hc.z(m, f);
          out(m, f) += (z > 0 ? z : std::expm1(z)) / static_cast<Scalar>(heads);
        }
      }
    }
    return out;
  }

  MatX<Scalar> backward_layer(int l, const MatX<Scalar>& dy, ModelParams<Scalar>* grads) {
    auto& cache = layer_caches_[l];
    const auto& nbrs_all = cache.neighbors;
    const int n = static_cast<int>(cache.input.rows());
    const int nd = params_.hyper.node_dim;
    const int heads = params_.hyper.heads;
    const Scalar slope = static_cast<Scalar>(params_.hyper.leaky_slope);

    MatX<Scalar> dinput = MatX<Scalar>::Zero(n, nd);
    for (int h = 0; h < heads; ++h) {
      auto& hc = cache.heads[h];
      const auto& w = params_.gat_layers[l].weight[h];
      const auto& a = params_.gat_layers[l].attention[h];

      MatX<Scalar> dz(n, nd);
      for (int m = 0; m < n; ++m) {
        for (int f = 0; f < nd; ++f) {
          const Scalar z = hc.z(m, f);
          const Scalar elu_grad = z > 0 ? Scalar(1) : std::exp(z);
          dz(m, f) = dy(m, f) * elu_grad / static_cast<Scalar>(heads);
        }
      }

      MatX<Scalar> dh = MatX<Scalar>::Zero(n, nd);
      VecX<Scalar> dp = VecX<Scalar>::Zero(n);
      VecX<Scalar> dq = VecX<Scalar>::Zero(n);
      for (int m = 0; m < n; ++m) {
        const auto& nbrs = nbrs_all[m];
        const VecX<Scalar>& alpha = hc.alpha[m];
        VecX<Scalar> dalpha(nbrs.size());
        for (size_t i = 0; i < nbrs.size(); ++i) {
          dalpha(i) = dz.row(m).dot(hc.h.row(nbrs[i]));
          dh.row(nbrs[i]) += alpha(i) * dz.row(m);
        }
        const Scalar dot = alpha.dot(dalpha);
        for (size_t i = 0; i < nbrs.size(); ++i) {
          const Scalar de = alpha(i) * (dalpha(i) - dot);
          const Scalar t = hc.p(m) + hc.q(nbrs[i]);
          const Scalar dt = de * (t > 0 ? Scalar(1) : slope);
          dp(m) += dt;
          dq(nbrs[i]) += dt;
        }
      }

      MatX<Scalar>& ga = grads->gat_layers[l].attention[h];
      ga.col(0).head(nd).noalias() += hc.h.transpose() * dp;
      ga.col(0).tail(nd).noalias() += hc.h.transpose() * dq;
      dh.noalias() += dp * a.col(0).head(nd).transpose();
      dh.noalias() += dq * a.col(0).tail(nd).transpose();

      grads->gat_layers[l].weight[h].noalias() += dh.transpose() * cache.input;
      dinput.noalias() += dh * w;
    }

    if (cache.dropout_mask.size() > 0) {
      dinput = dinput.cwiseProduct(cache.dropout_mask);
    }
    return dinput;
  }

  const CliqueGraph& clique_;
  const ModelParams<Scalar>& params_;
  bool train_;
  uint64_t seed_;

  std::vector<int> storage_of_canon_;
  std::vector<int> canon_of_storage_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::pair<int, int>> edge_nodes_;

  std::vector<NetVladCache<Scalar>> node_caches_;
  MatX<Scalar> features_;
  std::vector<GatLayerCache<Scalar>> layer_caches_;
  std::vector<EdgeCache<Scalar>> edge_caches_;
};

}  // namespace

template <typename Scalar>
NodeFeature<Scalar> netvlad_forward(const MatX<Scalar>& descriptors,
                                    const NetVladParams<Scalar>& params) {
  NetVladCache<Scalar> cache;
  netvlad_forward_cached(descriptors, params, &cache);
  return NodeFeature<Scalar>{cache.v, cache.zero};
}

template <typename Scalar>
MatX<Scalar> gat_layer_forward(const MatX<Scalar>& features,
                               const std::vector<std::pair<int, int>>& edges,
                               const GatLayerParams<Scalar>& params, double leaky_slope) {
  if (!features.allFinite()) {
    throw NonFiniteError("gat_layer_forward: non-finite input features");
  }
  const int n = static_cast<int>(features.rows());
  const int heads = static_cast<int>(params.weight.size());
  const int nd = static_cast<int>(params.weight[0].rows());
  const Scalar slope = static_cast<Scalar>(leaky_slope);

  std::vector<std::vector<int>> neighbors(n);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw InvalidArgumentError("gat_layer_forward: edge endpoint out of range");
    }
    neighbors[i].push_back(j);
    neighbors[j].push_back(i);
  }
  for (int m = 0; m < n; ++m) {
    neighbors[m].push_back(m);
    std::sort(neighbors[m].begin(), neighbors[m].end());
    neighbors[m].erase(std::unique(neighbors[m].begin(), neighbors[m].end()),
                       neighbors[m].end());
  }

  MatX<Scalar> out = MatX<Scalar>::Zero(n, nd);
  for (int h = 0; h < heads; ++h) {
    const MatX<Scalar> hm = features * params.weight[h].transpose();
    const VecX<Scalar> p = hm * params.attention[h].col(0).head(nd);
    const VecX<Scalar> q = hm * params.attention[h].col(0).tail(nd);
    for (int m = 0; m < n; ++m) {
      const auto& nbrs = neighbors[m];
      VecX<Scalar> e(nbrs.size());
      for (size_t i = 0; i < nbrs.size(); ++i) {
        const Scalar t = p(m) + q(nbrs[i]);
        e(i) = t > 0 ? t : slope * t;
      }
      VecX<Scalar> alpha = (e.array() - e.maxCoeff()).exp();
      alpha /= alpha.sum();
      VecX<Scalar> z = VecX<Scalar>::Zero(nd);
      for (size_t i = 0; i < nbrs.size(); ++i) z += alpha(i) * hm.row(nbrs[i]).transpose();
      for (int f = 0; f < nd; ++f) {
        out(m, f) += (z(f) > 0 ? z(f) : std::expm1(z(f))) / static_cast<Scalar>(heads);
      }
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Scalar> model_forward(const CliqueGraph& clique,
                                  const ModelParams<Scalar>& params, bool train_mode,
                                  uint64_t dropout_seed) {
  Computation<Scalar> comp(clique, params, train_mode, dropout_seed);
  return comp.forward();
}

template <typename Scalar>
Scalar model_loss_grad(const CliqueGraph& clique, const std::vector<int>& labels,
                       const ModelParams<Scalar>& params, ModelParams<Scalar>& grads,
                       bool train_mode, uint64_t dropout_seed) {
  Computation<Scalar> comp(clique, params, train_mode, dropout_seed);
  comp.forward();
  return comp.backward(labels, &grads);
}

std::vector<EdgeLabel> label_edges(const CliqueGraph& clique, double dist_thresh_m,
                                   double angle_thresh_deg) {
  if (clique.frames.size() != clique.nodes.size()) {
    throw InvalidArgumentError("label_edges: clique nodes not resolved to keyframes");
  }
  std::vector<EdgeLabel> labels;
  labels.reserve(clique.edges.size());
  for (const auto& [i, j] : clique.edges) {
    const Pose& pa = clique.frames[i]->pose;
    const Pose& pb = clique.frames[j]->pose;
    EdgeLabel el;
    el.a = clique.nodes[i];
    el.b = clique.nodes[j];
    el.distance_m = (pa.position - pb.position).norm();
    el.angle_deg = rotation_angle_deg(pa.orientation, pb.orientation);
    el.label = (el.distance_m < dist_thresh_m && el.angle_deg < angle_thresh_deg) ? 1 : 0;
    labels.push_back(el);
  }
  return labels;
}

double bce_loss(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("bce_loss: scores and labels length mismatch");
  }
  if (scores.empty()) throw EmptyInputError("bce_loss: empty input");
  double loss = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], 1e-7, 1.0 - 1e-7);
    const double y = labels[i];
    loss += -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
  }
  return loss / static_cast<double>(scores.size());
}

std::vector<ScoredEdge> predict_query_edges(const CliqueGraph& clique,
                                            const ModelParams<float>& params) {
  const auto scores = model_forward<float>(clique, params);
  std::vector<ScoredEdge> out;
  for (size_t e = 0; e < clique.edges.size(); ++e) {
    if (!clique.query_edge[e]) continue;
    const auto& [i, j] = clique.edges[e];
    ScoredEdge se;
    // Query endpoint first.
    if (clique.nodes[i] == clique.query) {
      se.a = clique.nodes[i];
      se.b = clique.nodes[j];
    } else {
      se.a = clique.nodes[j];
      se.b = clique.nodes[i];
    }
    se.score = static_cast<double>(scores[e]);
    out.push_back(se);
  }
  return out;
}

std::vector<ScoredEdge> select_candidates(const std::vector<ScoredEdge>& scored,
                                          SelectMode mode, double value) {
  if (scored.empty()) throw EmptyInputError("select_candidates: empty score list");
  if (mode == SelectMode::kTopFraction) {
    if (!(value > 0) || value > 1) {
      throw InvalidArgumentError("top_fraction value must be in (0, 1]");
    }
  } else if (value < 0 || value > 1) {
    throw InvalidArgumentError("threshold value must be in [0, 1]");
  }

  // Deduplicate unordered pairs, keeping the highest score.
  std::map<std::pair<NodeKey, NodeKey>, double> best;
  for (const auto& se : scored) {
    const auto key = se.a < se.b ? std::make_pair(se.a, se.b) : std::make_pair(se.b, se.a);
    auto [it, inserted] = best.emplace(key, se.score);
    if (!inserted && se.score > it->second) it->second = se.score;
  }
  std::vector<ScoredEdge> dedup;
  dedup.reserve(best.size());
  for (const auto& [key, score] : best) {
    dedup.push_back({key.first, key.second, score});
  }

  if (mode == SelectMode::kThreshold) {
    std::vector<ScoredEdge> kept;
    for (const auto& se : dedup) {
      if (se.score > value) kept.push_back(se);
    }
    return kept;
  }
  const size_t keep = std::min<size_t>(
      dedup.size(), static_cast<size_t>(std::ceil(value * dedup.size())));
  std::sort(dedup.begin(), dedup.end(), [](const ScoredEdge& a, const ScoredEdge& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.a != b.a) return a.a < b.a;
    return a.b < b.b;
  });
  dedup.resize(keep);
  return dedup;
}

LabeledClique make_labeled(CliqueGraph clique, double dist_thresh_m,
                           double angle_thresh_deg) {
  LabeledClique lc;
  const auto labels = label_edges(clique, dist_thresh_m, angle_thresh_deg);
  lc.labels.reserve(labels.size());
  for (const auto& el : labels) lc.labels.push_back(el.label);
  lc.clique = std::move(clique);
  return lc;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || batch_size < 1 || epochs < 1 || dropout < 0 ||
      dropout >= 1 || patience < 1) {
    throw InvalidArgumentError("invalid training configuration");
  }
  if (early_stopping_metric != "ap" && early_stopping_metric != "mr" &&
      early_stopping_metric != "ap_mr") {
    throw InvalidArgumentError("early_stopping_metric must be ap, mr, or ap_mr");
  }
}

namespace {

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  ModelParams<float> m, v;
  long t = 0;

  explicit Adam(const ModelParams<float>& params, double lr_in)
      : lr(lr_in), m(zeros_like(params)), v(zeros_like(params)) {}

  void step(ModelParams<float>& params, ModelParams<float>& grads) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    auto pt = named_tensors(params);
    auto gt = named_tensors(grads);
    auto mt = named_tensors(m);
    auto vt = named_tensors(v);
    for (size_t i = 0; i < pt.size(); ++i) {
      auto& p = *pt[i].second;
      auto& g = *gt[i].second;
      auto& mm = *mt[i].second;
      auto& vv = *vt[i].second;
      for (long k = 0; k < p.size(); ++k) {
        const double gk = g.data()[k];
        const double mk = beta1 * mm.data()[k] + (1 - beta1) * gk;
        const double vk = beta2 * vv.data()[k] + (1 - beta2) * gk * gk;
        mm.data()[k] = static_cast<float>(mk);
        vv.data()[k] = static_cast<float>(vk);
        const double mhat = mk / bc1;
        const double vhat = vk / bc2;
        p.data()[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

struct ValMetrics {
  std::optional<double> ap;
  std::optional<double> mr;
};

ValMetrics validation_metrics(const std::vector<LabeledClique>& val_set,
                              const ModelParams<float>& params) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& lc : val_set) {
    const auto edge_scores = model_forward<float>(lc.clique, params);
    for (size_t e = 0; e < lc.clique.edges.size(); ++e) {
      if (!lc.clique.query_edge[e]) continue;
      scores.push_back(edge_scores[e]);
      labels.push_back(lc.labels[e]);
    }
  }
  ValMetrics out;
  if (std::count(labels.begin(), labels.end(), 1) > 0) {
    out.ap = average_precision(scores, labels);
    out.mr = max_recall_full_precision(scores, labels);
  }
  return out;
}

}  // namespace

TrainResult train(const std::vector<LabeledClique>& train_set,
                  const std::vector<LabeledClique>& val_set, const ModelHyper& hyper,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.empty()) throw EmptyInputError("train: no training cliques");
  long positives = 0;
  for (const auto& lc : train_set) {
    positives += std::count(lc.labels.begin(), lc.labels.end(), 1);
  }
  if (positives == 0) {
    throw TrainingError("training set has no positive edge labels; check the "
                        "labeling thresholds and retrieval configuration");
  }

  ModelHyper h = hyper;
  h.dropout = config.dropout;
  ModelParams<float> params = init_params(h, config.seed);
  Adam adam(params, config.learning_rate);

  TrainResult result;
  ModelParams<float> best = params;
  double best_metric = -1;
  int best_epoch = 0;
  int stale_epochs = 0;

  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x5u, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    int step = 0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      ++step;
      const int slots =
          static_cast<int>(std::min<size_t>(config.batch_size, order.size() - start));
      std::vector<ModelParams<float>> slot_grads;
      std::vector<float> slot_loss(slots, 0.0f);
      slot_grads.reserve(slots);
      for (int s = 0; s < slots; ++s) slot_grads.push_back(zeros_like(params));

      // Per-slot gradients may be computed in parallel; the reduction below
      // runs in slot order, independent of scheduling.
#pragma omp parallel for schedule(static)
      for (int s = 0; s < slots; ++s) {
        const auto& lc = train_set[order[start + s]];
        const uint64_t drop_seed = mix_seed(config.seed, 0xd0u,
                                            static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(step),
                                            static_cast<uint64_t>(s));
        slot_loss[s] = model_loss_grad<float>(lc.clique, lc.labels, params,
                                              slot_grads[s], true, drop_seed);
      }

      ModelParams<float> grads = zeros_like(params);
      double loss = 0;
      for (int s = 0; s < slots; ++s) {
        loss += slot_loss[s];
        auto gt = named_tensors(grads);
        auto st = named_tensors(slot_grads[s]);
        for (size_t i = 0; i < gt.size(); ++i) {
          *gt[i].second += *st[i].second / static_cast<float>(slots);
        }
      }
      loss /= slots;
      adam.step(params, grads);

      result.log.push_back({epoch, step, loss, std::nullopt, std::nullopt});
    }

    const ValMetrics vm = validation_metrics(val_set, params);
    if (!result.log.empty()) {
      result.log.back().val_ap = vm.ap;
      result.log.back().val_mr = vm.mr;
    }

    double metric;
    if (vm.ap.has_value()) {
      if (config.early_stopping_metric == "ap") {
        metric = *vm.ap;
      } else if (config.early_stopping_metric == "mr") {
        metric = *vm.mr;
      } else {
        metric = *vm.ap + *vm.mr;
      }
    } else {
      // No positives in the validation split: fall back to training loss.
      metric = -result.log.back().loss;
    }
    if (metric > best_metric) {
      best_metric = metric;
      best = params;
      best_epoch = epoch;
      result.best_val_ap = vm.ap;
      result.best_val_mr = vm.mr;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) break;
    }
  }

  result.params = std::move(best);
  result.best_epoch = best_epoch;
  return result;
}

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,step,loss,val_ap,val_mr\n";
  char buf[64];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%.9g", row.loss);
    out << row.epoch << ',' << row.step << ',' << buf << ',';
    if (row.val_ap) {
      std::snprintf(buf, sizeof(buf), "%.9g", *row.val_ap);
      out << buf;
    }
    out << ',';
    if (row.val_mr) {
      std::snprintf(buf, sizeof(buf), "%.9g", *row.val_mr);
      out << buf;
    }
    out << "\n";
  }
}

GradCheckResult gradient_check(const ModelParams<double>& params,
                               const CliqueGraph& clique, const std::vector<int>& labels,
                               double epsilon, int samples_per_tensor, uint64_t seed) {
  ModelParams<double> work = params;
  ModelParams<double> grads = zeros_like(params);
  model_loss_grad<double>(clique, labels, work, grads, false, 0);

  auto wt = named_tensors(work);
  auto gt = named_tensors(grads);
  GradCheckResult result;
  Rng rng(mix_seed(seed, 0xfdu));
  for (size_t t = 0; t < wt.size(); ++t) {
    auto& tensor = *wt[t].second;
    if (tensor.size() == 0) continue;
    const int samples =
        std::min<long>(samples_per_tensor, tensor.size());
    for (int s = 0; s < samples; ++s) {
      const long k = static_cast<long>(rng.uniform_int(tensor.size()));
      const double original = tensor.data()[k];

      tensor.data()[k] = original + epsilon;
      ModelParams<double> dummy = zeros_like(params);
      const double lp = model_loss_grad<double>(clique, labels, work, dummy, false, 0);
      tensor.data()[k] = original - epsilon;
      dummy = zeros_like(params);
      const double lm = model_loss_grad<double>(clique, labels, work, dummy, false, 0);
      tensor.data()[k] = original;

      const double fd = (lp - lm) / (2 * epsilon);
      const double an = gt[t].second->data()[k];
      const double rel =
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = wt[t].first;
      }
    }
  }
  return result;
}

std::vector<std::vector<double>> infer_batch(const std::vector<CliqueGraph>& cliques,
                                             const ModelParams<float>& params) {
  std::vector<std::vector<double>> out(cliques.size());
  const int n = static_cast<int>(cliques.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) {
    const auto scores = model_forward<float>(cliques[i], params);
    out[i].assign(scores.begin(), scores.end());
  }
  return out;
}

std::vector<std::vector<double>> infer_batch_serial(const std::vector<CliqueGraph>& cliques,
                                                    const ModelParams<float>& params) {
  std::vector<std::vector<double>> out(cliques.size());
  for (size_t i = 0; i < cliques.size(); ++i) {
    const auto scores = model_forward<float>(cliques[i], params);
    out[i].assign(scores.begin(), scores.end());
  }
  return out;
}

namespace {
constexpr uint32_t kModelVersion = 1;
}

void save_model(const ModelParams<float>& params, const std::string& path) {
  params.validate();
  BinWriter w(path);
  w.magic("LGNN");
  w.u32(kModelVersion);
  const auto& h = params.hyper;
  w.u32(static_cast<uint32_t>(h.message_passing_steps));
  w.u32(static_cast<uint32_t>(h.heads));
  w.u32(static_cast<uint32_t>(h.netvlad_clusters));
  w.u32(static_cast<uint32_t>(h.descriptor_dim));
  w.u32(static_cast<uint32_t>(h.node_dim));
  w.u32(static_cast<uint32_t>(h.mlp_hidden));
  w.f32(static_cast<float>(h.dropout));
  w.f32(static_cast<float>(h.leaky_slope));
  w.u8(h.edge_dropout ? 1 : 0);

  auto tensors = named_tensors(const_cast<ModelParams<float>&>(params));
  w.u32(static_cast<uint32_t>(tensors.size()));
  for (auto& [name, mat] : tensors) {
    w.u32(static_cast<uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(2);  // rank
    w.u32(static_cast<uint32_t>(mat->rows()));
    w.u32(static_cast<uint32_t>(mat->cols()));
    for (long r = 0; r < mat->rows(); ++r) {
      for (long c = 0; c < mat->cols(); ++c) w.f32((*mat)(r, c));
    }
  }
  w.close();
}

ModelParams<float> load_model(const std::string& path) {
  BinReader r(path);
  r.expect_magic("LGNN");
  const uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw FormatError(path + ": unsupported model version " + std::to_string(version));
  }
  ModelHyper h;
  h.message_passing_steps = static_cast<int>(r.u32());
  h.heads = static_cast<int>(r.u32());
  h.netvlad_clusters = static_cast<int>(r.u32());
  h.descriptor_dim = static_cast<int>(r.u32());
  h.node_dim = static_cast<int>(r.u32());
  h.mlp_hidden = static_cast<int>(r.u32());
  h.dropout = r.f32();
  h.leaky_slope = r.f32();
  h.edge_dropout = r.u8() != 0;

  ModelParams<float> params = init_params(h, 0);
  auto tensors = named_tensors(params);
  const uint32_t count = r.u32();
  if (count != tensors.size()) {
    throw FormatError(path + ": tensor count mismatch");
  }
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = r.u32();
    std::string name(name_len, '\0');
    for (uint32_t i = 0; i < name_len; ++i) name[i] = static_cast<char>(r.u8());
    const uint32_t rank = r.u32();
    if (rank != 2) throw FormatError(path + ": unexpected tensor rank");
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const auto& p) { return p.first == name; });
    if (it == tensors.end()) throw FormatError(path + ": unknown tensor '" + name + "'");
    if (it->second->rows() != static_cast<long>(rows) ||
        it->second->cols() != static_cast<long>(cols)) {
      throw DimensionError(path + ": tensor '" + name + "' shape mismatch");
    }
    for (uint32_t rr = 0; rr < rows; ++rr) {
      for (uint32_t cc = 0; cc < cols; ++cc) (*it->second)(rr, cc) = r.f32();
    }
  }
  if (!std::isfinite(static_cast<double>(params.proj_weight.sum()))) {
    throw NonFiniteError(path + ": model parameters contain non-finite values");
  }
  params.validate();
  return params;
}

// Explicit instantiations.
template void ModelParams<float>::validate() const;
template void ModelParams<double>::validate() const;
template std::vector<std::pair<std::string, MatX<float>*>> named_tensors(
    ModelParams<float>&);
template std::vector<std::pair<std::string, MatX<double>*>> named_tensors(
    ModelParams<double>&);
template ModelParams<float> zeros_like(const ModelParams<float>&);
template ModelParams<double> zeros_like(const ModelParams<double>&);
template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template NodeFeature<float> netvlad_forward(const MatX<float>&,
                                            const NetVladParams<float>&);
template NodeFeature<double> netvlad_forward(const MatX<double>&,
                                             const NetVladParams<double>&);
template MatX<float> gat_layer_forward(const MatX<float>&,
                                       const std::vector<std::pair<int, int>>&,
                                       const GatLayerParams<float>&, double);
template MatX<double> gat_layer_forward(const MatX<double>&,
                                        const std::vector<std::pair<int, int>>&,
                                        const GatLayerParams<double>&, double);
template std::vector<float> model_forward(const CliqueGraph&, const ModelParams<float>&,
                                          bool, uint64_t);
template std::vector<double> model_forward(const CliqueGraph&, const ModelParams<double>&,
                                           bool, uint64_t);
template float model_loss_grad(const CliqueGraph&, const std::vector<int>&,
                               const ModelParams<float>&, ModelParams<float>&, bool,
                               uint64_t);
template double model_loss_grad(const CliqueGraph&, const std::vector<int>&,
                                const ModelParams<double>&, ModelParams<double>&, bool,
                                uint64_t);

}  // namespace lg
