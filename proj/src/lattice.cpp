#include "motr/lattice.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace motr {

namespace {

void check_inputs(const LogProbLattice& lat, const std::vector<int>& y) {
    require(lat.T >= 1, "lattice: T must be >= 1");
    require(lat.U >= 0, "lattice: U must be >= 0");
    require(lat.vbar >= 2, "lattice: extended vocabulary needs at least one real token");
    require(lat.entries.size() ==
                static_cast<size_t>(lat.T) * (lat.U + 1) * lat.vbar,
            "lattice: entry storage does not match dimensions");
    require(static_cast<int>(y.size()) == lat.U,
            "lattice: target length does not match U");
    for (int tok : y)
        require(tok >= 0 && tok < lat.vbar - 1,
                "lattice: target token out of range (blank may not appear in y)");
}

}  // namespace

int AlignmentPath::num_blanks() const {
    return static_cast<int>(std::count(steps.begin(), steps.end(), kBlank));
}

int AlignmentPath::num_emits() const {
    return static_cast<int>(steps.size()) - num_blanks();
}

std::vector<std::pair<int, int>> AlignmentPath::nodes() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(steps.size());
    int t = 0, u = 0;
    for (int s : steps) {
        out.emplace_back(t, u);
        if (s == kBlank) ++t; else ++u;
    }
    return out;
}

std::vector<int> AlignmentPath::durations(int T) const {
    std::vector<int> d(T, 0);
    int t = 0;
    for (int s : steps) {
        if (s == kBlank) ++t;
        else if (t < T) ++d[t];
    }
    return d;
}

bool AlignmentPath::valid(int T, int U) const {
    if (static_cast<int>(steps.size()) != T + U) return false;
    if (steps.empty() || steps.back() != kBlank) return false;
    int t = 0, u = 0;
    for (int s : steps) {
        if (t > T - 1 || u > U) return false;  // node must lie inside the grid
        if (s == kBlank) {
            ++t;
        } else {
            if (s != u) return false;  // emits consume y in order
            ++u;
        }
    }
    return t == T && u == U;
}

Grid forward_variables(const LogProbLattice& lat, const std::vector<int>& y) {
    check_inputs(lat, y);
    const int blank = lat.blank();
    Grid a(lat.T, lat.U + 1);
    a.at(0, 0) = 0.0;
    for (int t = 0; t < lat.T; ++t) {
        for (int u = 0; u <= lat.U; ++u) {
            if (t == 0 && u == 0) continue;
            double from_left = t > 0 ? a.at(t - 1, u) + lat.at(t - 1, u, blank) : kLogZero;
            double from_below = u > 0 ? a.at(t, u - 1) + lat.at(t, u - 1, y[u - 1]) : kLogZero;
            a.at(t, u) = log_sum_exp(from_left, from_below);
        }
    }
    return a;
}

Grid backward_variables(const LogProbLattice& lat, const std::vector<int>& y) {
    check_inputs(lat, y);
    const int blank = lat.blank();
    Grid b(lat.T, lat.U + 1);
    b.at(lat.T - 1, lat.U) = lat.at(lat.T - 1, lat.U, blank);
    for (int t = lat.T - 1; t >= 0; --t) {
        for (int u = lat.U; u >= 0; --u) {
            if (t == lat.T - 1 && u == lat.U) continue;
            double via_blank =
                t + 1 < lat.T ? b.at(t + 1, u) + lat.at(t, u, blank) : kLogZero;
            double via_emit =
                u + 1 <= lat.U ? b.at(t, u + 1) + lat.at(t, u, y[u]) : kLogZero;
            b.at(t, u) = log_sum_exp(via_blank, via_emit);
        }
    }
    return b;
}

double total_log_prob(const LogProbLattice& lat, const std::vector<int>& y) {
    Grid a = forward_variables(lat, y);
    return a.at(lat.T - 1, lat.U) + lat.at(lat.T - 1, lat.U, lat.blank());
}

LatticeLoss loss_and_grad(const LogProbLattice& lat, const std::vector<int>& y) {
    Grid a = forward_variables(lat, y);
    Grid b = backward_variables(lat, y);
    const int blank = lat.blank();
    const double log_total = b.at(0, 0);
    for (double e : lat.entries)
        require(!std::isnan(e), "lattice: non-finite entries");
    require(log_total != kLogZero,
            "lattice: Pr(y|x) is exactly zero, all alignment paths are impossible");

    LatticeLoss out;
    out.loss = -log_total;
    out.grad.assign(lat.entries.size(), 0.0);
    for (int t = 0; t < lat.T; ++t) {
        for (int u = 0; u <= lat.U; ++u) {
            double la = a.at(t, u);
            if (la == kLogZero) continue;
            // blank transition: to (t+1, u), or termination from (T-1, U)
            double log_beta_next;
            if (t == lat.T - 1)
                log_beta_next = (u == lat.U) ? 0.0 : kLogZero;
            else
                log_beta_next = b.at(t + 1, u);
            if (log_beta_next != kLogZero) {
                double g = la + lat.at(t, u, blank) + log_beta_next - log_total;
                out.grad[lat.index(t, u, blank)] = -std::exp(g);
            }
            // emit transition: to (t, u+1)
            if (u < lat.U) {
                double lb = b.at(t, u + 1);
                if (lb != kLogZero) {
                    double g = la + lat.at(t, u, y[u]) + lb - log_total;
                    out.grad[lat.index(t, u, y[u])] -= std::exp(g);
                }
            }
        }
    }
    return out;
}

PosteriorMap posterior_map(const LogProbLattice& lat, const std::vector<int>& y) {
    PosteriorMap m;
    m.log_alpha = forward_variables(lat, y);
    m.log_beta = backward_variables(lat, y);
    m.log_total = m.log_beta.at(0, 0);
    m.log_gamma = Grid(lat.T, lat.U + 1);
    for (size_t i = 0; i < m.log_gamma.v.size(); ++i)
        m.log_gamma.v[i] = m.log_alpha.v[i] + m.log_beta.v[i];
    return m;
}

AlignmentPath forced_align(const LogProbLattice& lat, const std::vector<int>& y) {
    check_inputs(lat, y);
    const int blank = lat.blank();
    Grid best(lat.T, lat.U + 1);
    best.at(0, 0) = 0.0;
    for (int t = 0; t < lat.T; ++t) {
        for (int u = 0; u <= lat.U; ++u) {
            if (t == 0 && u == 0) continue;
            double from_left = t > 0 ? best.at(t - 1, u) + lat.at(t - 1, u, blank) : kLogZero;
            double from_below = u > 0 ? best.at(t, u - 1) + lat.at(t, u - 1, y[u - 1]) : kLogZero;
            best.at(t, u) = std::max(from_left, from_below);
        }
    }

    // Backtrack from (T-1, U); ties prefer the blank (horizontal) move.
    AlignmentPath path;
    path.steps.assign(lat.T + lat.U, AlignmentPath::kBlank);
    int pos = lat.T + lat.U - 1;  // final step: blank at (T-1, U)
    int t = lat.T - 1, u = lat.U;
    while (t > 0 || u > 0) {
        --pos;
        double from_left = t > 0 ? best.at(t - 1, u) + lat.at(t - 1, u, blank) : kLogZero;
        double from_below = u > 0 ? best.at(t, u - 1) + lat.at(t, u - 1, y[u - 1]) : kLogZero;
        if (from_left >= from_below) {
            path.steps[pos] = AlignmentPath::kBlank;
            --t;
        } else {
            path.steps[pos] = u - 1;
            --u;
        }
    }
    return path;
}

double path_log_prob(const LogProbLattice& lat, const std::vector<int>& y,
                     const AlignmentPath& path) {
    check_inputs(lat, y);
    require(path.valid(lat.T, lat.U), "path does not fit lattice dimensions");
    double lp = 0.0;
    int t = 0, u = 0;
    for (int s : path.steps) {
        if (s == AlignmentPath::kBlank) {
            lp += lat.at(t, u, lat.blank());
            ++t;
        } else {
            lp += lat.at(t, u, y[s]);
            ++u;
        }
    }
    return lp;
}

std::string grid_to_text(const Grid& g) {
    std::ostringstream os;
    char buf[40];
    for (int t = 0; t < g.num_t; ++t) {
        for (int u = 0; u < g.num_u; ++u) {
            std::snprintf(buf, sizeof buf, "%.9g", g.at(t, u));
            if (u) os << ',';
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

std::string grid_to_pgm(const Grid& g) {
    double lo = 0.0;
    bool any_finite = false;
    for (double v : g.v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            any_finite = true;
        }
    }
    std::ostringstream os;
    os << "P5\n" << g.num_u << ' ' << g.num_t << "\n255\n";
    for (double v : g.v) {
        unsigned char pix = 0;
        if (std::isfinite(v))
            pix = (!any_finite || lo == 0.0)
                      ? 255
                      : static_cast<unsigned char>(std::lround(255.0 * (v - lo) / (0.0 - lo)));
        os.put(static_cast<char>(pix));
    }
    return os.str();
}

std::string path_to_text(const AlignmentPath& path) {
    std::ostringstream os;
    for (auto [t, u] : path.nodes()) os << t << ',' << u << '\n';
    return os.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace motr
