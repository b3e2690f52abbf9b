#include <benchmark/benchmark.h>

#include "ms/analysis.hpp"
#include "ms/catalog.hpp"
#include "ms/interp.hpp"

using namespace ms;

namespace {

UnrolledKernel micro(int n, std::int64_t bytes) {
    StridingConfig cfg;
    cfg.stride_unrolls = n;
    cfg.portion_unrolls = kMicroSlots / n;
    return transform_kernel(catalog_lookup("micro-read"), cfg, {{"NX", bytes / 4}});
}

void BM_TransformLower(benchmark::State& state) {
    KernelSpec spec = catalog_lookup("bicg");
    StridingConfig cfg;
    cfg.stride_unrolls = static_cast<int>(state.range(0));
    cfg.portion_unrolls = 2;
    cfg.eliminate_redundant = true;
    for (auto _ : state) {
        UnrolledKernel uk = transform_kernel(spec, cfg, spec.default_extents);
        benchmark::DoNotOptimize(lower(uk));
    }
}
BENCHMARK(BM_TransformLower)->Arg(2)->Arg(4);

void BM_TraceGeneration(benchmark::State& state) {
    std::int64_t bytes = non_pow2_sibling(8 << 20, StridingConfig{1, 32});
    AccessTrace trace = gen_trace(lower(micro(static_cast<int>(state.range(0)), bytes)));
    for (auto _ : state) {
        std::uint64_t sum = 0;
        trace.for_each([&](const AccessEvent& e) { sum += e.address; });
        benchmark::DoNotOptimize(sum);
    }
    state.SetItemsProcessed(state.iterations() * trace.event_count());
}
BENCHMARK(BM_TraceGeneration)->Arg(1)->Arg(16);

void BM_Simulate(benchmark::State& state) {
    std::int64_t bytes = non_pow2_sibling(8 << 20, StridingConfig{1, 32});
    AccessTrace trace = gen_trace(lower(micro(static_cast<int>(state.range(0)), bytes)));
    MachineModel m = MachineModel::preset("desk-scale");
    for (auto _ : state) benchmark::DoNotOptimize(simulate(trace, m));
    state.SetItemsProcessed(state.iterations() * trace.event_count());
}
BENCHMARK(BM_Simulate)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_StreamCensus(benchmark::State& state) {
    KernelSpec spec = catalog_lookup("mxv");
    StridingConfig cfg;
    cfg.stride_unrolls = 8;
    cfg.portion_unrolls = 2;
    Extents ext = resolve_extents(spec, 2 << 20);
    AccessTrace trace = gen_trace(lower(transform_kernel(spec, cfg, ext)));
    for (auto _ : state) benchmark::DoNotOptimize(stream_census(trace));
    state.SetItemsProcessed(state.iterations() * trace.event_count());
}
BENCHMARK(BM_StreamCensus)->Unit(benchmark::kMillisecond);

void BM_Interpret(benchmark::State& state) {
    KernelSpec spec = catalog_lookup("gemvermxv1");
    StridingConfig cfg;
    cfg.stride_unrolls = 4;
    cfg.portion_unrolls = 2;
    cfg.eliminate_redundant = true;
    UnrolledKernel uk = transform_kernel(spec, cfg, spec.default_extents);
    VectorProgram prog = lower(uk);
    Layout layout = program_layout(prog, kLineBytes);
    std::vector<std::uint8_t> image(static_cast<size_t>(layout.span), 0);
    for (auto _ : state) {
        interpret(prog, layout, image);
        benchmark::DoNotOptimize(image.data());
    }
}
BENCHMARK(BM_Interpret);

} // namespace

BENCHMARK_MAIN();
