#include <benchmark/benchmark.h>

#include <random>

#include "mambatext/model.hpp"
#include "mambatext/train.hpp"

using namespace mambatext;

namespace {

ModelConfig bench_config() {
    ModelConfig cfg;
    cfg.d_model = 64;
    cfg.n_layers = 2;
    cfg.d_state = 8;
    cfg.vocab_size = 512;
    cfg.n_classes = 3;
    cfg.max_seq_len = 4096;
    return cfg;
}

std::vector<int> bench_ids(std::size_t len, int vocab) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> tok(2, vocab - 1);
    std::vector<int> ids(len);
    for (auto& t : ids) t = tok(rng);
    return ids;
}

}  // namespace

static void BM_ModelForward(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const ModelConfig cfg = bench_config();
    MambaClassifier<float> m = MambaClassifier<float>::random_init(cfg, 3);
    const auto ids = bench_ids(len, cfg.vocab_size);
    const std::vector<std::uint8_t> mask(len, 1);
    for (auto _ : state) {
        Tensor<float> logits = model_forward(m, ids, mask);
        benchmark::DoNotOptimize(logits.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_ModelForward)->RangeMultiplier(4)->Range(128, 2048);

static void BM_TrainStep(benchmark::State& state) {
    const auto len = static_cast<std::size_t>(state.range(0));
    const ModelConfig cfg = bench_config();
    MambaClassifier<float> m = MambaClassifier<float>::random_init(cfg, 4);
    const auto ids = bench_ids(len, cfg.vocab_size);
    const std::vector<std::uint8_t> mask(len, 1);
    for (auto _ : state) {
        Tape<float> tape;
        ModelVars<float> mv = register_params(tape, m);
        Var loss = softmax_cross_entropy(tape, model_forward(tape, mv, cfg, ids, mask), 1);
        tape.backward(loss);
        benchmark::DoNotOptimize(tape.grad(mv.embedding).data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_TrainStep)->RangeMultiplier(4)->Range(128, 1024);
