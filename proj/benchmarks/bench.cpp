#include <benchmark/benchmark.h>

#include "srm/dataset.hpp"
#include "srm/geometry.hpp"
#include "srm/model.hpp"
#include "srm/relation_graph.hpp"

namespace {

srm::Scene bench_scene(int n_objects) {
    srm::SyntheticSpec spec;
    spec.min_objects = n_objects;
    spec.max_objects = n_objects;
    srm::Rng rng(42);
    return srm::generate_scene(spec, rng);
}

void BM_IoU(benchmark::State& state) {
    srm::Rng rng(1);
    std::vector<std::pair<srm::BoundingBox, srm::BoundingBox>> pairs;
    for (int i = 0; i < 1024; ++i) {
        auto box = [&]() {
            srm::BoundingBox b;
            b.x1 = rng.uniform(0.0, 80.0);
            b.y1 = rng.uniform(0.0, 80.0);
            b.x2 = b.x1 + rng.uniform(1.0, 40.0);
            b.y2 = b.y1 + rng.uniform(1.0, 40.0);
            return b;
        };
        pairs.emplace_back(box(), box());
    }
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& [a, b] = pairs[i++ & 1023];
        benchmark::DoNotOptimize(srm::iou(a, b));
    }
}
BENCHMARK(BM_IoU);

void BM_BuildGraph(benchmark::State& state) {
    srm::Scene scene = bench_scene(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            srm::build_graph(scene, srm::RelationMetric::IoUClass10));
    }
}
BENCHMARK(BM_BuildGraph)->Arg(4)->Arg(16)->Arg(64);

void BM_Forward(benchmark::State& state) {
    srm::SyntheticSpec spec;
    srm::Vocabulary vocab = srm::build_vocabulary(spec.num_categories);
    std::vector<srm::Example> examples = srm::generate_dataset(spec, 1, 0.0);
    srm::ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.dropout = 0.0;
    srm::Rng rng(7);
    srm::ParamStore params = srm::init_parameters(cfg, rng);
    const srm::Example& ex = examples[0];
    srm::TokenSequence seq = srm::encode_sequence(
        vocab, vocab.tokenize(ex.question), vocab.tokenize(ex.candidates[ex.correct]),
        ex.scene, {cfg.max_text_len, cfg.max_visual_len});
    for (auto _ : state) {
        benchmark::DoNotOptimize(srm::forward(cfg, params, seq, ex.scene));
    }
}
BENCHMARK(BM_Forward);

}  // namespace

BENCHMARK_MAIN();
