#include "dyad/corpus.hpp"

#include <cmath>

#include "dyad/rng.hpp"
#include "dyad/shifts.hpp"

namespace dyad {

MeshFunction sampled_identity(int L) {
    MeshFunction f = MeshFunction::zeros_unit_box(1, L);
    double h = f.cell_width();
    for (int64_t i = 0; i < f.extent[0]; ++i) f.values[size_t(i)] = double(i) * h;
    return f;
}

MeshFunction corpus_function(int n, int L, uint64_t seed) {
    SplitMix64 rng(seed);
    DyadicGrid grid = standard_grid(n, 0, L);
    int mode = int(rng.below(4));
    if (mode < 2) return random_test_function(grid, rng);
    MeshFunction f = MeshFunction::zeros_unit_box(n, L);
    if (mode == 2) {
        // smooth profile sampled at cell centers
        double a = rng.uniform(0.5, 3.0), b = rng.uniform(0.0, 2.0 * M_PI);
        double c = rng.uniform(-1.0, 1.0);
        double h = f.cell_width();
        for (int64_t i0 = 0; i0 < f.extent[0]; ++i0) {
            double x = (double(i0) + 0.5) * h;
            if (n == 1) {
                f.values[f.index(i0, 0)] = std::sin(a * 2.0 * M_PI * x + b) + c * x;
            } else {
                for (int64_t i1 = 0; i1 < f.extent[1]; ++i1) {
                    double y = (double(i1) + 0.5) * h;
                    f.values[f.index(i0, i1)] = std::sin(a * 2.0 * M_PI * x + b) + c * y;
                }
            }
        }
    } else {
        for (auto& v : f.values) v = rng.uniform(0.2, 1.5); // rough positive profile
    }
    return f;
}

std::vector<FunctionTriple> default_corpus(int n, int L, int count, uint64_t seed) {
    std::vector<FunctionTriple> out;
    SplitMix64 rng(seed);
    for (int i = 0; i < count; ++i) {
        FunctionTriple t;
        t.f = corpus_function(n, L, rng.next());
        t.g = corpus_function(n, L, rng.next());
        t.h = corpus_function(n, L, rng.next());
        t.label = "triple-" + std::to_string(i);
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace dyad
