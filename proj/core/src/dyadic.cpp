#include "dyad/dyadic.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace dyad {

double gamma_of(double alpha, int n) {
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw std::domain_error("gamma_of: alpha must lie in (0,1]");
    if (n < 1) throw std::domain_error("gamma_of: n must be >= 1");
    return alpha / (2.0 * (2.0 * n + alpha));
}

GoodnessParams goodness_params(double alpha, int n, int r) {
    GoodnessParams p;
    p.alpha = alpha;
    p.gamma = gamma_of(alpha, n);
    p.r = r;
    return p;
}

static int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

int DyadicGrid::omega_bit(int i, int axis) const {
    if (i <= S || i > L) return 0;
    return (omega[size_t(i - S - 1)] >> axis) & 1;
}

int64_t DyadicGrid::shift_cells(int k, int axis) const {
    int64_t s = 0;
    for (int i = k + 1; i <= L; ++i)
        if (omega_bit(i, axis)) s += int64_t(1) << (L - i);
    return s;
}

DyadicCube DyadicGrid::cube_containing(int level, const std::array<int64_t, 2>& cell) const {
    if (level < S || level > L) throw std::out_of_range("cube_containing: level outside scale range");
    int64_t w = cells_per_axis(level);
    DyadicCube q;
    q.level = level;
    q.dim = n;
    for (int a = 0; a < n; ++a) {
        int64_t s = shift_cells(level, a);
        q.corner[a] = floor_div(cell[a] - s, w) * w + s;
    }
    return q;
}

DyadicCube DyadicGrid::parent(const DyadicCube& q) const {
    if (q.level <= S) throw std::out_of_range("parent: cube already at coarsest scale");
    std::array<int64_t, 2> c{q.corner[0], q.corner[1]};
    return cube_containing(q.level - 1, c);
}

DyadicCube DyadicGrid::ancestor(const DyadicCube& q, int k) const {
    if (k < 0) throw std::out_of_range("ancestor: negative k");
    if (q.level - k < S) throw std::out_of_range("ancestor: k exceeds available coarse scales");
    DyadicCube a = q;
    for (int step = 0; step < k; ++step) a = parent(a);
    return a;
}

std::vector<DyadicCube> DyadicGrid::children(const DyadicCube& q) const {
    if (q.level >= L) throw std::out_of_range("children: cube is at the finest scale");
    int64_t w = cells_per_axis(q.level + 1);
    std::vector<DyadicCube> out;
    int combos = 1 << n;
    out.reserve(size_t(combos));
    for (int m = 0; m < combos; ++m) {
        DyadicCube c;
        c.level = q.level + 1;
        c.dim = n;
        for (int a = 0; a < n; ++a)
            c.corner[a] = q.corner[a] + (((m >> a) & 1) ? w : 0);
        out.push_back(c);
    }
    return out;
}

bool DyadicGrid::contains(const DyadicCube& outer, const DyadicCube& inner) const {
    if (inner.level < outer.level) return false;
    int64_t wo = cells_per_axis(outer.level);
    int64_t wi = cells_per_axis(inner.level);
    for (int a = 0; a < n; ++a) {
        if (inner.corner[a] < outer.corner[a]) return false;
        if (inner.corner[a] + wi > outer.corner[a] + wo) return false;
    }
    return true;
}

std::vector<DyadicCube> DyadicGrid::cubes_at_level(int level, const std::array<int64_t, 2>& lo,
                                                   const std::array<int64_t, 2>& hi) const {
    int64_t w = cells_per_axis(level);
    std::array<int64_t, 2> first{0, 0}, count{1, 1};
    for (int a = 0; a < n; ++a) {
        int64_t s = shift_cells(level, a);
        first[a] = floor_div(lo[a] - s, w);
        int64_t last = floor_div(hi[a] - 1 - s, w);
        count[a] = last - first[a] + 1;
        if (count[a] <= 0) return {};
    }
    std::vector<DyadicCube> out;
    out.reserve(size_t(count[0] * count[1]));
    for (int64_t i = 0; i < count[0]; ++i) {
        for (int64_t j = 0; j < (n == 2 ? count[1] : 1); ++j) {
            DyadicCube q;
            q.level = level;
            q.dim = n;
            q.corner[0] = (first[0] + i) * w + shift_cells(level, 0);
            if (n == 2) q.corner[1] = (first[1] + j) * w + shift_cells(level, 1);
            out.push_back(q);
        }
    }
    return out;
}

// A cube I is bad iff some grid cube J with l(J) >= 2^r l(I) has
// d(I, dJ) <= l(I)^gamma l(J)^(1-gamma).  Since I nests inside one J per
// coarser level, the minimal boundary gap at level j is the smallest
// per-axis distance from I to the level-j lattice planes; ties count as bad.
bool DyadicGrid::is_good(const DyadicCube& q, const GoodnessParams& p) const {
    double h = std::ldexp(1.0, -L); // cell width
    double li = cube_sidelength(q);
    int64_t wq = cells_per_axis(q.level);
    for (int j = q.level - p.r; j >= S; --j) {
        int64_t wj = cells_per_axis(j);
        int64_t gap = INT64_MAX;
        for (int a = 0; a < n; ++a) {
            int64_t s = shift_cells(j, a);
            int64_t base = floor_div(q.corner[a] - s, wj) * wj + s;
            int64_t left = q.corner[a] - base;
            int64_t right = (base + wj) - (q.corner[a] + wq);
            gap = std::min(gap, std::min(left, right));
        }
        double lj = std::ldexp(1.0, -j);
        double threshold = std::pow(li, p.gamma) * std::pow(lj, 1.0 - p.gamma);
        if (double(gap) * h <= threshold) return false;
    }
    return true;
}

DyadicGrid standard_grid(int n, int S, int L) {
    if (n < 1 || n > 2) throw std::invalid_argument("grid: n must be 1 or 2");
    if (L <= S) throw std::invalid_argument("grid: need L > S");
    DyadicGrid g;
    g.n = n;
    g.S = S;
    g.L = L;
    g.omega.assign(size_t(L - S), 0);
    return g;
}

DyadicGrid sample_grid(uint64_t seed, int S, int L, int n) {
    DyadicGrid g = standard_grid(n, S, L);
    SplitMix64 rng(seed);
    for (auto& w : g.omega) w = uint8_t(rng.next() & ((1u << n) - 1u));
    return g;
}

int64_t cube_distance_cells(const DyadicCube& a, const DyadicCube& b, const DyadicGrid& g) {
    int64_t wa = g.cells_per_axis(a.level), wb = g.cells_per_axis(b.level);
    int64_t d = 0;
    for (int ax = 0; ax < g.n; ++ax) {
        int64_t lo = std::max(a.corner[ax], b.corner[ax]);
        int64_t hi = std::min(a.corner[ax] + wa, b.corner[ax] + wb);
        d = std::max(d, lo - hi > 0 ? lo - hi : 0);
    }
    return d;
}

double cube_sidelength(const DyadicCube& q) { return std::ldexp(1.0, -q.level); }

double cube_volume(const DyadicCube& q) {
    double s = cube_sidelength(q);
    return q.dim == 2 ? s * s : s;
}

std::string DyadicGrid::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["L"] = L;
    j["S"] = S;
    auto arr = nlohmann::json::array();
    for (auto w : omega) {
        auto bits = nlohmann::json::array();
        for (int a = 0; a < n; ++a) bits.push_back((w >> a) & 1);
        arr.push_back(bits);
    }
    j["omega"] = arr;
    return j.dump();
}

DyadicGrid DyadicGrid::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    DyadicGrid g = standard_grid(j.at("n").get<int>(), j.at("S").get<int>(), j.at("L").get<int>());
    auto arr = j.at("omega");
    if (arr.size() != g.omega.size())
        throw std::invalid_argument("grid json: omega has wrong length");
    for (size_t i = 0; i < g.omega.size(); ++i) {
        uint8_t w = 0;
        for (int a = 0; a < g.n; ++a)
            if (arr[i][size_t(a)].get<int>()) w |= uint8_t(1u << a);
        g.omega[i] = w;
    }
    return g;
}

std::string cube_to_json(const DyadicCube& q) {
    nlohmann::json j;
    j["level"] = q.level;
    auto c = nlohmann::json::array();
    for (int a = 0; a < q.dim; ++a) c.push_back(q.corner[a]);
    j["corner"] = c;
    return j.dump();
}

DyadicCube cube_from_json(const std::string& text, int dim_hint) {
    auto j = nlohmann::json::parse(text);
    DyadicCube q;
    q.level = j.at("level").get<int>();
    auto c = j.at("corner");
    q.dim = int(c.size()) > 0 ? int(c.size()) : dim_hint;
    for (int a = 0; a < q.dim && a < 2; ++a) q.corner[a] = c[size_t(a)].get<int64_t>();
    return q;
}

double exact_pi_good(int level, int S, int L, int n, const GoodnessParams& p) {
    int coarse = level - S; // number of omega components goodness depends on
    if (coarse <= 0 || level - p.r < S) return 1.0;
    int64_t total = int64_t(1) << (coarse * n);
    int64_t good = 0;
    DyadicGrid g = standard_grid(n, S, L);
    for (int64_t mask = 0; mask < total; ++mask) {
        for (int j = 0; j < coarse; ++j)
            g.omega[size_t(j)] = uint8_t((mask >> (j * n)) & ((1 << n) - 1));
        // reference cube [0,2^-level)^n placed at the grid's own lattice
        DyadicCube q;
        q.level = level;
        q.dim = n;
        for (int a = 0; a < n; ++a) q.corner[a] = g.shift_cells(level, a);
        if (g.is_good(q, p)) ++good;
    }
    return double(good) / double(total);
}

PiGoodEstimate estimate_pi_good(const GoodnessParams& p, int base_level, int64_t trials,
                                uint64_t seed, int S, int L, int n) {
    if (trials < 1) throw std::invalid_argument("estimate_pi_good: trials must be >= 1");
    PiGoodEstimate e;
    e.trials = trials;
    SplitMix64 rng(seed);
    for (int64_t t = 0; t < trials; ++t) {
        DyadicGrid g = standard_grid(n, S, L);
        SplitMix64 r = rng.fork(uint64_t(t));
        for (auto& w : g.omega) w = uint8_t(r.next() & ((1u << n) - 1u));
        DyadicCube q;
        q.level = base_level;
        q.dim = n;
        for (int a = 0; a < n; ++a) q.corner[a] = g.shift_cells(base_level, a);
        if (g.is_good(q, p)) ++e.good;
    }
    e.estimate = double(e.good) / double(trials);
    e.std_error = std::sqrt(std::max(e.estimate * (1.0 - e.estimate), 1e-12) / double(trials));
    return e;
}

} // namespace dyad
