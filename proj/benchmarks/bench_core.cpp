#include <benchmark/benchmark.h>

#include "dyad/corpus.hpp"
#include "dyad/quadrature.hpp"
#include "dyad/representation.hpp"
#include "dyad/sparse.hpp"

using namespace dyad;

static void BM_HaarTransform(benchmark::State& state) {
    int L = int(state.range(0));
    DyadicGrid g = standard_grid(1, 0, L);
    MeshFunction f = corpus_function(1, L, 7);
    for (auto _ : state) {
        CubeSums s = cube_sums(f, g);
        benchmark::DoNotOptimize(s.levels.back().sums.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_HaarTransform)->Arg(6)->Arg(8)->Arg(10);

static void BM_PairingTable(benchmark::State& state) {
    int L = int(state.range(0));
    BilinearKernel k = builtin_kernel("beurling-re");
    TruncatedEvaluator ev{k, TruncationSpec::smooth(0.125), 0};
    CellRange r{0, int64_t(1) << L};
    QuadratureSpec quad;
    for (auto _ : state) {
        PairingTable t = build_pairing_table(ev, L, r, r, r, quad, false);
        benchmark::DoNotOptimize(t.w3d.data());
    }
}
BENCHMARK(BM_PairingTable)->Arg(4)->Arg(5)->Arg(6);

static void BM_Contract3(benchmark::State& state) {
    int L = int(state.range(0));
    BilinearKernel k = builtin_kernel("beurling-re");
    TruncatedEvaluator ev{k, TruncationSpec::smooth(0.125), 0};
    CellRange r{0, int64_t(1) << L};
    QuadratureSpec quad;
    PairingTable t = build_pairing_table(ev, L, r, r, r, quad, false);
    MeshFunction f = corpus_function(1, L, 3), g = corpus_function(1, L, 4),
                 h = corpus_function(1, L, 5);
    for (auto _ : state) benchmark::DoNotOptimize(contract3(t, h, f, g));
}
BENCHMARK(BM_Contract3)->Arg(5)->Arg(6)->Arg(7);

static void BM_LambdaForm(benchmark::State& state) {
    int L = int(state.range(0));
    DyadicGrid g = standard_grid(1, 0, L);
    MeshFunction f1 = corpus_function(1, L, 11), f2 = corpus_function(1, L, 12),
                 f3 = corpus_function(1, L, 13);
    SparseCollection s = build_sparse(f1, f2, f3, 0.5, g);
    for (auto _ : state) benchmark::DoNotOptimize(lambda_form(s, f1, f2, f3));
}
BENCHMARK(BM_LambdaForm)->Arg(6)->Arg(8);

static void BM_BuildSparse(benchmark::State& state) {
    int L = int(state.range(0));
    DyadicGrid g = standard_grid(1, 0, L);
    MeshFunction f1 = corpus_function(1, L, 11), f2 = corpus_function(1, L, 12),
                 f3 = corpus_function(1, L, 13);
    for (auto _ : state) {
        SparseCollection s = build_sparse(f1, f2, f3, 0.5, g);
        benchmark::DoNotOptimize(s.cubes.data());
    }
}
BENCHMARK(BM_BuildSparse)->Arg(6)->Arg(8);

BENCHMARK_MAIN();
