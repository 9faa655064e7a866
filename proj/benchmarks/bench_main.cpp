#include <benchmark/benchmark.h>

#include "suseg/isnet.hpp"
#include "suseg/losses.hpp"
#include "suseg/nn/ops.hpp"
#include "suseg/patching.hpp"
#include "suseg/preprocess.hpp"

#include <random>

using namespace suseg;

namespace {

std::vector<float> randomVec(size_t n, uint64_t seed) {
    std::vector<float> v(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> d(0.f, 1.f);
    for (float& x : v) x = d(rng);
    return v;
}

void BM_Conv3d(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0));
    const int e = static_cast<int>(state.range(1));
    nn::ParamStore store;
    nn::Param& w = store.add("w", {c, c, 27, 1});
    nn::Param& b = store.add("b", {c, 1, 1, 1});
    std::mt19937_64 rng(1);
    nn::init_he_normal(w, 27 * c, rng);
    auto in = randomVec(static_cast<size_t>(c) * e * e * e, 2);
    for (auto _ : state) {
        nn::Tape t;
        nn::Node* x = t.input({c, e, e, e}, in.data());
        nn::Node* out = nn::conv(t, x, w, b, {3, 3, 3});
        benchmark::DoNotOptimize(out->val.v.data());
    }
    state.SetItemsProcessed(state.iterations() * int64_t(2) * c * c * 27 * e * e * e);
}
BENCHMARK(BM_Conv3d)->Args({8, 16})->Args({16, 16})->Args({8, 32});

void BM_IsnetForward(benchmark::State& state) {
    ISNetConfig cfg;
    cfg.p = 16;
    cfg.levels = 2;
    cfg.base_channels = static_cast<int>(state.range(0));
    cfg.dilation_rates = {1, 2};
    ISNet net(cfg, {64, 16});
    auto w = randomVec(16 * 16 * 16, 3), n = randomVec(16 * 16 * 16, 4);
    for (auto _ : state) {
        nn::Tape t;
        auto out = net.forward(t, w, n);
        benchmark::DoNotOptimize(out.main->val.v.data());
    }
}
BENCHMARK(BM_IsnetForward)->Arg(4)->Arg(8);

void BM_DiceLoss(benchmark::State& state) {
    const size_t n = static_cast<size_t>(state.range(0));
    auto p = randomVec(n, 5);
    std::vector<float> g(n);
    std::mt19937_64 rng(6);
    for (float& x : g) x = static_cast<float>(rng() & 1u);
    for (auto _ : state) {
        double l = dice_loss(p, g);
        benchmark::DoNotOptimize(l);
    }
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_DiceLoss)->Arg(16 * 16 * 16)->Arg(32 * 32 * 32);

void BM_Reconstruct(benchmark::State& state) {
    const int e = 64, p = 16, stride = static_cast<int>(state.range(0));
    ScaledVolumePair pair;
    pair.wrange = Volume({e, e, e}, {1, 1, 1}, VolumeKind::Prediction, 0.5f);
    pair.nrange = pair.wrange;
    auto tiles = tile_volume(pair, p, stride);
    std::vector<std::pair<std::array<int, 3>, std::vector<float>>> preds;
    for (auto& t : tiles) preds.push_back({t.origin, t.wrange_patch});
    for (auto _ : state) {
        Volume rec = reconstruct(preds, p, pair.wrange.shape);
        benchmark::DoNotOptimize(rec.data.data());
    }
}
BENCHMARK(BM_Reconstruct)->Arg(16)->Arg(8);

void BM_PreprocessCt(benchmark::State& state) {
    const int e = static_cast<int>(state.range(0));
    Volume ct({e, e, e}, {0.8, 0.8, 1.2}, VolumeKind::CT, -600.f);
    for (auto _ : state) {
        ScaledVolumePair pair = preprocess_ct(ct, 64);
        benchmark::DoNotOptimize(pair.wrange.data.data());
    }
}
BENCHMARK(BM_PreprocessCt)->Arg(64)->Arg(96);

} // namespace

BENCHMARK_MAIN();
