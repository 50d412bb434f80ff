#pragma once

#include <string>
#include <vector>

#include "motr/common.hpp"

namespace motr {

// ─── Emission lattice ──────────────────────────────────────────────────────
//
// entries[t][u][k] is the natural-log probability of producing k as the next
// output when the model sits at input position t having already produced the
// first u target tokens. k ranges over the extended vocabulary of size vbar;
// the blank token is the last index (vbar - 1) by convention.

struct LogProbLattice {
    int T = 0;     // input positions, >= 1
    int U = 0;     // target tokens, >= 0
    int vbar = 0;  // extended vocabulary size, V + 1
    std::vector<double> entries;  // T * (U+1) * vbar

    LogProbLattice() = default;
    LogProbLattice(int t, int u, int vbar_size)
        : T(t), U(u), vbar(vbar_size),
          entries(static_cast<size_t>(t) * (u + 1) * vbar_size, kLogZero) {}

    int blank() const { return vbar - 1; }

    size_t index(int t, int u, int k) const {
        return (static_cast<size_t>(t) * (U + 1) + u) * vbar + k;
    }
    double& at(int t, int u, int k) { return entries[index(t, u, k)]; }
    double at(int t, int u, int k) const { return entries[index(t, u, k)]; }
};

// ─── Alignment path ─────────────────────────────────────────────────────────
//
// A monotone path of T + U steps. Step i emits either the next target token
// (advancing u) or a blank (advancing t). The final step is always a blank
// taken at node (T-1, U).

struct AlignmentPath {
    static constexpr int kBlank = -1;

    // kBlank, or the 0-based index into y of the emitted token.
    std::vector<int> steps;

    int num_blanks() const;
    int num_emits() const;

    // Node (t, u) occupied before each step, starting at (0, 0).
    std::vector<std::pair<int, int>> nodes() const;

    // Emission count per input position; size T.
    std::vector<int> durations(int T) const;

    // Checks the path invariants against the given lattice dimensions.
    bool valid(int T, int U) const;

    bool operator==(const AlignmentPath&) const = default;
};

struct PosteriorMap {
    Grid log_alpha;
    Grid log_beta;
    Grid log_gamma;
    double log_total = kLogZero;
};

// ─── Lattice operations ─────────────────────────────────────────────────────
//
// All functions are pure and thread-safe. y holds target token ids in
// [0, vbar-1); the blank may not appear in y.

// log alpha(t, u): mass of all partial paths from (0,0) to (t,u).
//   alpha(0,0) = 1
//   alpha(t,u) = alpha(t-1,u) * p[t-1,u][blank] + alpha(t,u-1) * p[t,u-1][y_u]
Grid forward_variables(const LogProbLattice& lat, const std::vector<int>& y);

// log beta(t, u): mass of all path suffixes from (t,u) through termination.
//   beta(T-1,U) = p[T-1,U][blank]
//   beta(t,u)   = beta(t+1,u) * p[t,u][blank] + beta(t,u+1) * p[t,u][y_{u+1}]
Grid backward_variables(const LogProbLattice& lat, const std::vector<int>& y);

// log Pr(y|x) = log alpha(T-1,U) + log p[T-1,U][blank] = log beta(0,0).
// The terminal blank factor is included: every complete path ends by taking
// a blank at (T-1, U).
double total_log_prob(const LogProbLattice& lat, const std::vector<int>& y);

// Negative log likelihood and its gradient with respect to the lattice's
// log-probability entries. Only entries on a feasible transition (the next
// target token or a blank) receive non-zero gradient:
//   d loss / d log p[t,u][y_{u+1}] = -exp(alpha(t,u) + p[t,u][y_{u+1}]
//                                         + beta(t,u+1) - log_total)
//   d loss / d log p[t,u][blank]   = -exp(alpha(t,u) + p[t,u][blank]
//                                         + beta(t+1,u) - log_total)
// with beta(T, U) treated as 1 for the terminal blank.
struct LatticeLoss {
    double loss = 0.0;
    std::vector<double> grad;  // same layout as LogProbLattice::entries
};
LatticeLoss loss_and_grad(const LogProbLattice& lat, const std::vector<int>& y);

// alpha, beta, gamma = alpha + beta (elementwise, in log space), and the
// total. gamma(t,u) is the mass of all complete paths passing through (t,u).
PosteriorMap posterior_map(const LogProbLattice& lat, const std::vector<int>& y);

// Viterbi forced alignment: the forward recursion with max in place of
// log-sum-exp, backtracked from (T-1, U). Ties prefer the blank transition.
AlignmentPath forced_align(const LogProbLattice& lat, const std::vector<int>& y);

// Log probability of one specific path through the lattice.
double path_log_prob(const LogProbLattice& lat, const std::vector<int>& y,
                     const AlignmentPath& path);

// ─── Exports ────────────────────────────────────────────────────────────────

// One row per t, comma-separated log values.
std::string grid_to_text(const Grid& g);

// 8-bit binary PGM (P5), width U+1, height T. Values map linearly from
// [min finite value, 0] onto [0, 255]; -inf cells render as 0.
std::string grid_to_pgm(const Grid& g);

// One "t,u" node per line.
std::string path_to_text(const AlignmentPath& path);

void write_file(const std::string& path, const std::string& contents);

}  // namespace motr
