#pragma once

// Test-only helpers: brute-force oracles kept deliberately independent of the
// production recursions, plus random input builders.

#include <cmath>
#include <functional>
#include <vector>

#include "motr/common.hpp"
#include "motr/lattice.hpp"

namespace motr::test {

inline long double lse_ld(const std::vector<long double>& xs) {
    long double m = -std::numeric_limits<long double>::infinity();
    for (auto x : xs) m = std::max(m, x);
    if (std::isinf(m)) return m;
    long double s = 0;
    for (auto x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

// Random lattice whose rows are exact log-softmax distributions. spread
// controls how peaked the rows are.
inline LogProbLattice random_lattice(Rng& rng, int T, int U, int vbar,
                                     double spread = 3.0) {
    LogProbLattice lat(T, U, vbar);
    for (int t = 0; t < T; ++t)
        for (int u = 0; u <= U; ++u) {
            std::vector<double> logits(vbar);
            for (auto& l : logits) l = rng.uniform(-spread, spread);
            double m = *std::max_element(logits.begin(), logits.end());
            double z = 0;
            for (auto l : logits) z += std::exp(l - m);
            double lz = m + std::log(z);
            for (int k = 0; k < vbar; ++k) lat.at(t, u, k) = logits[k] - lz;
        }
    return lat;
}

inline std::vector<int> random_targets(Rng& rng, int U, int vocab) {
    std::vector<int> y(U);
    for (auto& tok : y) tok = rng.uniform_int(0, vocab - 1);
    return y;
}

// Enumerates every monotone alignment path (T-1 blanks and U emits in any
// order, then the terminal blank) and hands its log probability, in long
// double, to the visitor together with the step list (kBlank or emit index).
inline void for_each_path(const LogProbLattice& lat, const std::vector<int>& y,
                          const std::function<void(long double, const std::vector<int>&)>& visit) {
    std::vector<int> steps;
    std::function<void(int, int, long double)> rec = [&](int t, int u, long double lp) {
        if (t == lat.T - 1 && u == lat.U) {
            steps.push_back(AlignmentPath::kBlank);
            visit(lp + (long double)lat.at(t, u, lat.blank()), steps);
            steps.pop_back();
            return;
        }
        if (t < lat.T - 1) {
            steps.push_back(AlignmentPath::kBlank);
            rec(t + 1, u, lp + (long double)lat.at(t, u, lat.blank()));
            steps.pop_back();
        }
        if (u < lat.U) {
            steps.push_back(u);
            rec(t, u + 1, lp + (long double)lat.at(t, u, y[u]));
            steps.pop_back();
        }
    };
    rec(0, 0, 0.0L);
}

// Total log probability by exhaustive enumeration.
inline long double enum_total_log_prob(const LogProbLattice& lat,
                                       const std::vector<int>& y) {
    std::vector<long double> lps;
    for_each_path(lat, y, [&](long double lp, const std::vector<int>&) { lps.push_back(lp); });
    return lse_ld(lps);
}

inline size_t enum_path_count(const LogProbLattice& lat, const std::vector<int>& y) {
    size_t n = 0;
    for_each_path(lat, y, [&](long double, const std::vector<int>&) { ++n; });
    return n;
}

// Mass of all path prefixes from (0,0) to (te, ue), excluding any terminal
// blank: the alpha oracle.
inline long double enum_prefix_log_prob(const LogProbLattice& lat,
                                        const std::vector<int>& y, int te, int ue) {
    std::vector<long double> lps;
    std::function<void(int, int, long double)> rec = [&](int t, int u, long double lp) {
        if (t == te && u == ue) {
            lps.push_back(lp);
            return;
        }
        if (t < te) rec(t + 1, u, lp + (long double)lat.at(t, u, lat.blank()));
        if (u < ue) rec(t, u + 1, lp + (long double)lat.at(t, u, y[u]));
    };
    rec(0, 0, 0.0L);
    return lse_ld(lps);
}

// Best path by exhaustive search, for checking Viterbi. Ties keep the first
// path found; comparisons in tests should use the log probability.
inline std::pair<long double, AlignmentPath> enum_best_path(
    const LogProbLattice& lat, const std::vector<int>& y) {
    long double best = -std::numeric_limits<long double>::infinity();
    AlignmentPath arg;
    for_each_path(lat, y, [&](long double lp, const std::vector<int>& steps) {
        if (lp > best) {
            best = lp;
            arg.steps = steps;
        }
    });
    return {best, arg};
}

// Central finite difference of the enumeration loss with respect to one
// lattice entry, evaluated in long double.
inline long double fd_loss_grad(LogProbLattice lat, const std::vector<int>& y,
                                int t, int u, int k, double h = 1e-5) {
    double orig = lat.at(t, u, k);
    lat.at(t, u, k) = orig + h;
    long double up = -enum_total_log_prob(lat, y);
    lat.at(t, u, k) = orig - h;
    long double dn = -enum_total_log_prob(lat, y);
    return (up - dn) / (2.0L * h);
}

// Lattice that strongly prefers one planted path: probability mass ~0.99 on
// each planted transition, the rest spread uniformly.
inline LogProbLattice plant_path(const AlignmentPath& path, const std::vector<int>& y,
                                 int T, int U, int vbar) {
    LogProbLattice lat(T, U, vbar);
    double off = std::log(0.01 / (vbar - 1));
    for (int t = 0; t < T; ++t)
        for (int u = 0; u <= U; ++u)
            for (int k = 0; k < vbar; ++k) lat.at(t, u, k) = off;
    int t = 0, u = 0;
    for (int s : path.steps) {
        int k = s == AlignmentPath::kBlank ? vbar - 1 : y[s];
        lat.at(t, u, k) = std::log(0.99);
        if (s == AlignmentPath::kBlank) ++t; else ++u;
    }
    return lat;
}

// Random valid alignment path for a T x (U+1) lattice.
inline AlignmentPath random_path(Rng& rng, int T, int U) {
    AlignmentPath p;
    int t = 0, u = 0;
    while (t < T - 1 || u < U) {
        bool can_blank = t < T - 1;
        bool can_emit = u < U;
        bool blank = can_blank && (!can_emit || rng.uniform01() < 0.5);
        if (blank) {
            p.steps.push_back(AlignmentPath::kBlank);
            ++t;
        } else {
            p.steps.push_back(u);
            ++u;
        }
    }
    p.steps.push_back(AlignmentPath::kBlank);
    return p;
}

}  // namespace motr::test
