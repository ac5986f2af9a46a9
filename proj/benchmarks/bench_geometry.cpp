#include <benchmark/benchmark.h>

#include "spdseq/geometry.hpp"
#include "spdseq/tokenization.hpp"
#include "testing_util.hpp"

using namespace spdseq;

namespace {

std::vector<SpdMatrix> sample_pool(int count, int dim) {
    Rng rng(17);
    std::vector<SpdMatrix> out;
    out.reserve(static_cast<std::size_t>(count));
    const SpdMatrix base = testing::random_spd(rng, dim, 10.0);
    for (int i = 0; i < count; ++i) {
        const Eigen::MatrixXd jitter = 0.2 * testing::random_gaussian(rng, dim, dim);
        out.emplace_back(base.mat() + jitter * jitter.transpose());
    }
    return out;
}

} // namespace

static void BM_MatrixLog(benchmark::State& state) {
    Rng rng(1);
    const SpdMatrix x = testing::random_spd(rng, static_cast<int>(state.range(0)), 100.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matrix_log(x));
    }
}
BENCHMARK(BM_MatrixLog)->Arg(5)->Arg(9)->Arg(27);

static void BM_MatrixLogVjp(benchmark::State& state) {
    Rng rng(2);
    const int n = static_cast<int>(state.range(0));
    const SpdMatrix x = testing::random_spd(rng, n, 100.0);
    const SymMatrix upstream = testing::random_sym(rng, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matrix_log_vjp(x, upstream));
    }
}
BENCHMARK(BM_MatrixLogVjp)->Arg(5)->Arg(27);

static void BM_AffineInvariantMean(benchmark::State& state) {
    const auto pool = sample_pool(static_cast<int>(state.range(0)), 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(affine_invariant_mean(pool));
    }
}
BENCHMARK(BM_AffineInvariantMean)->Arg(30)->Arg(300);

static void BM_SpdToToken(benchmark::State& state) {
    Rng rng(3);
    const SpdMatrix x = testing::random_spd(rng, 5, 50.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(spd_to_token(x));
    }
}
BENCHMARK(BM_SpdToToken);
