#pragma once

#include <vector>

#include "dyad/mesh.hpp"

namespace dyad {

struct FunctionTriple {
    MeshFunction f, g, h;
    std::string label;
};

// Deterministic corpus on the unit box: random Haar polynomials, indicator
// sums, sampled smooth profiles and constants, seeded per entry.
std::vector<FunctionTriple> default_corpus(int n, int L, int count, uint64_t seed);

// single corpus functions (also used by the norm harness sampler)
MeshFunction corpus_function(int n, int L, uint64_t seed);

// f(x) = x sampled at left endpoints (1-D helper used in tests)
MeshFunction sampled_identity(int L);

} // namespace dyad
