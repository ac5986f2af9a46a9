#include <benchmark/benchmark.h>

#include "spdseq/pipeline.hpp"
#include "spdseq/rng.hpp"
#include "spdseq/synthetic.hpp"

using namespace spdseq;

namespace {

Recording one_recording(int epochs) {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.recordings = 1;
    spec.epochs_per_recording = epochs;
    spec.fs = 128;
    spec.signals = 4;
    spec.seed = 5;
    return generate_synthetic_dataset(spec).front();
}

} // namespace

static void BM_FilterRecording(benchmark::State& state) {
    const Recording rec = one_recording(static_cast<int>(state.range(0)));
    const FilterBank bank = FilterBank::standard();
    for (auto _ : state) {
        benchmark::DoNotOptimize(filter_recording(rec, bank));
    }
}
BENCHMARK(BM_FilterRecording)->Arg(4)->Arg(16);

static void BM_BuildEpochGrid(benchmark::State& state) {
    const Recording rec = one_recording(2);
    const FilteredRecording filtered = filter_recording(rec, FilterBank::standard());
    EnrichmentConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_epoch_grid(filtered, 0, cfg));
    }
}
BENCHMARK(BM_BuildEpochGrid);

static void BM_AvgPsd(benchmark::State& state) {
    Rng rng(6);
    std::vector<double> segment(static_cast<std::size_t>(state.range(0)));
    for (auto& v : segment) v = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(avg_psd(segment, static_cast<int>(segment.size())));
    }
}
BENCHMARK(BM_AvgPsd)->Arg(128)->Arg(100)->Arg(256);
