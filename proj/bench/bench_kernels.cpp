#include <benchmark/benchmark.h>

#include "loopgraph/geoverify.hpp"
#include "loopgraph/gnn.hpp"
#include "loopgraph/retrieval.hpp"
#include "loopgraph/synth.hpp"
#include "loopgraph/vlad.hpp"

namespace {

// Shared fixture: a small synthetic world with fitted vocabulary, VLADs,
// index, cliques, and a freshly initialized model.
struct Fixture {
  lg::SyntheticWorld world;
  lg::Vocabulary vocab;
  lg::DatasetRegistry registry;
  lg::DescriptorIndex index;
  std::vector<lg::CliqueGraph> cliques;
  lg::ModelParams<float> params;
  std::vector<lg::PairTask> pairs;

  Fixture() {
    lg::SyntheticWorldSpec spec;
    spec.sequence_names = {"bench"};
    spec.keyframes_per_sequence = 240;
    spec.passes = 2;
    spec.seed = 11;
    world = lg::generate_world(spec);

    std::vector<const lg::SequenceDataset*> sets = {&world.sequences[0]};
    const Eigen::MatrixXf stacked = lg::stack_descriptors(sets, 2048, 1);
    vocab = lg::fit_vocabulary(stacked, 32, lg::Metric::kCosine, 1);
    lg::compute_vlad_batch(world.sequences[0], vocab);
    registry.add(&world.sequences[0]);
    index = lg::build_index(registry);
    cliques = lg::build_cliques_all_serial(index, registry, 2.0, 40);

    lg::ModelHyper hyper;
    hyper.message_passing_steps = 3;
    hyper.netvlad_clusters = 16;
    hyper.descriptor_dim = world.sequences[0].descriptor_dim();
    hyper.node_dim = 64;
    hyper.mlp_hidden = 64;
    params = lg::init_params(hyper, 2);

    for (const auto& clique : cliques) {
      if (pairs.size() >= 64) break;
      lg::PairTask task;
      task.key_i = clique.nodes[0];
      task.key_j = clique.nodes[1];
      task.frame_i = clique.frames[0];
      task.frame_j = clique.frames[1];
      pairs.push_back(task);
    }
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void bm_vlad_serial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    lg::compute_vlad_batch_serial(f.world.sequences[0], f.vocab);
    benchmark::ClobberMemory();
  }
}

void bm_vlad_parallel(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    lg::compute_vlad_batch(f.world.sequences[0], f.vocab);
    benchmark::ClobberMemory();
  }
}

void bm_retrieve_serial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto cliques = lg::build_cliques_all_serial(f.index, f.registry, 2.0, 40);
    benchmark::DoNotOptimize(cliques);
  }
}

void bm_retrieve_parallel(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto cliques = lg::build_cliques_all(f.index, f.registry, 2.0, 40);
    benchmark::DoNotOptimize(cliques);
  }
}

void bm_infer_serial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto scores = lg::infer_batch_serial(f.cliques, f.params);
    benchmark::DoNotOptimize(scores);
  }
}

void bm_infer_parallel(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    auto scores = lg::infer_batch(f.cliques, f.params);
    benchmark::DoNotOptimize(scores);
  }
}

void bm_verify_serial(benchmark::State& state) {
  auto& f = fixture();
  lg::RansacConfig config;
  config.seed = 3;
  for (auto _ : state) {
    auto outcomes = lg::verify_pairs_serial(f.pairs, f.world.sequences[0].intrinsics,
                                            config, lg::Metric::kCosine);
    benchmark::DoNotOptimize(outcomes);
  }
}

void bm_verify_parallel(benchmark::State& state) {
  auto& f = fixture();
  lg::RansacConfig config;
  config.seed = 3;
  for (auto _ : state) {
    auto outcomes = lg::verify_pairs(f.pairs, f.world.sequences[0].intrinsics, config,
                                     lg::Metric::kCosine);
    benchmark::DoNotOptimize(outcomes);
  }
}

}  // namespace

BENCHMARK(bm_vlad_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_vlad_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_retrieve_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_retrieve_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_infer_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_infer_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_verify_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_verify_parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
