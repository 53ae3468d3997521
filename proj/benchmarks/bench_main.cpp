#include <benchmark/benchmark.h>

#include "fq/flatten.hpp"
#include "fq/gptq.hpp"
#include "fq/pipeline.hpp"
#include "fq/quantize.hpp"
#include "fq/synthetic.hpp"

namespace {

fq::Matrix outlier_acts(std::int64_t rows, std::int64_t cols) {
    fq::Rng rng(1);
    fq::Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.gaussian();
    for (std::int64_t i = 0; i < rows; ++i) m.at(i, 3) *= 50.0;
    return m;
}

void BM_FlattenTensor(benchmark::State& state) {
    const std::int64_t c = state.range(0);
    const fq::Matrix x = outlier_acts(64, c);
    const auto maxes = fq::column_max_abs(x);
    const double t =
        fq::truncation_threshold(fq::clip_outlier_channels(maxes), 1.3);
    const fq::FlattenPlan plan = fq::build_flatten_plan(maxes, t);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fq::flatten_tensor(x, plan));
    }
    state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(BM_FlattenTensor)->Arg(256)->Arg(1024)->Arg(4096);

void BM_IntMatmul(benchmark::State& state) {
    const std::int64_t n = state.range(0);
    fq::Rng rng(2);
    fq::Matrix a(n, n), b(n, n);
    for (auto& v : a.data) v = rng.gaussian();
    for (auto& v : b.data) v = rng.gaussian();
    const fq::QuantizedTensor qa = fq::quantize_per_tensor(a, 8);
    const fq::QuantizedTensor qb = fq::quantize_per_tensor(b, 8);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fq::int_matmul(qa, qb));
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_IntMatmul)->Arg(64)->Arg(128)->Arg(256);

void BM_QuantizePerTensor(benchmark::State& state) {
    const fq::Matrix m = outlier_acts(256, state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(fq::quantize_per_tensor(m, 4));
    }
    state.SetItemsProcessed(state.iterations() * m.size());
}
BENCHMARK(BM_QuantizePerTensor)->Arg(256)->Arg(2048);

void BM_GptqOptimize(benchmark::State& state) {
    const std::int64_t dim = state.range(0);
    fq::Rng rng(3);
    std::vector<fq::Matrix> acts;
    for (int s = 0; s < 4; ++s) {
        fq::Matrix m(32, dim);
        for (auto& v : m.data) v = rng.gaussian();
        acts.push_back(std::move(m));
    }
    const fq::HessianEstimate est = fq::hessian_from_calibration(acts, 0.01);
    fq::Matrix w(dim, 64);
    for (auto& v : w.data) v = rng.gaussian();
    const fq::QuantParams params{4, fq::max_abs(w) / 7.0};
    for (auto _ : state) {
        benchmark::DoNotOptimize(fq::gptq_optimize(w, est, params));
    }
}
BENCHMARK(BM_GptqOptimize)->Arg(64)->Arg(192)->Arg(512);

void BM_QuantizeLayer(benchmark::State& state) {
    fq::SyntheticOptions opts;
    opts.layers = 1;
    opts.in_channels = state.range(0);
    opts.out_channels = state.range(0);
    const fq::Model model = fq::make_synthetic_model(opts);
    fq::QuantOptions qopts;
    qopts.mode = fq::QuantMode::O2;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fq::quantize_layer(model.layers[0].weight, model.layers[0].calib, qopts));
    }
}
BENCHMARK(BM_QuantizeLayer)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
