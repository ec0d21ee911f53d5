#pragma once

#include <cmath>

#include <cstdint>

namespace dyad {

// Deterministic small RNG (splitmix64). Every randomized routine in the
// library takes an explicit seed so that reruns are byte-identical.
struct SplitMix64 {
    uint64_t state = 0x9e3779b97f4a7c15ULL;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    // uniform in [lo,hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n ? next() % n : 0; }

    bool coin() { return (next() & 1u) != 0; }

    // derive an independent stream (e.g. one per Monte Carlo trial)
    SplitMix64 fork(uint64_t salt) const {
        SplitMix64 r(state ^ (0x632be59bd9b4e019ULL * (salt + 1)));
        r.next();
        return r;
    }
};

// Neumaier compensated accumulator. The big cell-triple contractions sum
// millions of terms; plain serial sums would drift near the 1e-9 identity
// tolerances. Deterministic: fixed order, no reassociation.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x) {
        double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

} // namespace dyad
