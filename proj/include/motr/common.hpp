#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace motr {

// Log-space zero. Guarded everywhere log_sum_exp / exp is applied.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), safe for kLogZero operands.
inline double log_sum_exp(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == kLogZero) return a;  // also covers a == b == -inf
    return a + std::log1p(std::exp(b - a));
}

// Dense T x (U+1) grid of log values, row-major in t.
struct Grid {
    int num_t = 0;
    int num_u = 0;  // actual column count, i.e. U+1 for lattice grids
    std::vector<double> v;

    Grid() = default;
    Grid(int t, int u, double fill = kLogZero)
        : num_t(t), num_u(u), v(static_cast<size_t>(t) * u, fill) {}

    double& at(int t, int u) { return v[static_cast<size_t>(t) * num_u + u]; }
    double at(int t, int u) const { return v[static_cast<size_t>(t) * num_u + u]; }
};

// Deterministic RNG with a stable output stream across platforms is not
// required here; we only need run-to-run stability on one toolchain, so the
// helpers below avoid std::uniform_*_distribution (whose streams differ per
// libstdc++ version) and map mt19937_64 output directly.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ull + 1) {}

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [a, b)
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

  private:
    uint64_t state_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Runs fn(i) for i in [0, n) across up to `threads` workers. Work is handed
// out by index stride, so writers that key results by i stay deterministic.
// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace motr
