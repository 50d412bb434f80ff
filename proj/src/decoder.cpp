#include "motr/decoder.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace motr {

void DecodeOptions::validate() const {
    require(sampling.temperature > 0, "decode: temperature must be > 0");
    require(sampling.top_k >= 1, "decode: top_k must be >= 1");
    require(max_steps_per_phoneme >= 1, "decode: step budget must be >= 1");
    if (window) require(window->n >= 0 && window->m >= 0, "decode: negative window");
}

namespace {

int sample_token(const double* logp, int vbar, const Sampling& s, Rng& rng) {
    switch (s.kind) {
        case SamplingKind::kGreedy: {
            int best = 0;
            for (int k = 1; k < vbar; ++k)
                if (logp[k] > logp[best]) best = k;
            return best;
        }
        case SamplingKind::kTemperature: {
            std::vector<double> p(vbar);
            double mx = *std::max_element(logp, logp + vbar);
            double z = 0;
            for (int k = 0; k < vbar; ++k) z += p[k] = std::exp((logp[k] - mx) / s.temperature);
            double r = rng.uniform01() * z;
            for (int k = 0; k < vbar; ++k) {
                r -= p[k];
                if (r <= 0) return k;
            }
            return vbar - 1;
        }
        case SamplingKind::kTopK: {
            std::vector<int> idx(vbar);
            std::iota(idx.begin(), idx.end(), 0);
            int k_eff = std::min(s.top_k, vbar);
            std::partial_sort(idx.begin(), idx.begin() + k_eff, idx.end(),
                              [&](int a, int b) {
                                  return logp[a] != logp[b] ? logp[a] > logp[b] : a < b;
                              });
            std::vector<double> p(k_eff);
            double mx = logp[idx[0]];
            double z = 0;
            for (int k = 0; k < k_eff; ++k)
                z += p[k] = std::exp((logp[idx[k]] - mx) / s.temperature);
            double r = rng.uniform01() * z;
            for (int k = 0; k < k_eff; ++k) {
                r -= p[k];
                if (r <= 0) return idx[k];
            }
            return idx[k_eff - 1];
        }
    }
    return vbar - 1;
}

// Start index (inclusive) of each target symbol's tokens inside y_out.
std::vector<int> emission_offsets(const DecodeSession& s) {
    std::vector<int> off(s.emission_counts.size() + 1, 0);
    for (size_t i = 0; i < s.emission_counts.size(); ++i)
        off[i + 1] = off[i] + s.emission_counts[i];
    return off;
}

}  // namespace

SessionView apply_context_window(const DecodeSession& s) {
    const int t_prompt = static_cast<int>(s.x_prompt.size());
    const int t_len = static_cast<int>(s.x_target.size());
    SessionView view;

    if (!s.window) {
        view.x_view = s.x_prompt;
        view.x_view.insert(view.x_view.end(), s.x_target.begin(), s.x_target.end());
        view.y_view = s.y_prompt;
        view.y_view.insert(view.y_view.end(), s.y_out.begin(), s.y_out.end());
        view.plan = make_position_plan(t_prompt, t_len, s.t,
                                       static_cast<int>(s.y_prompt.size()),
                                       static_cast<int>(s.y_out.size()));
        return view;
    }

    const int n = s.window->n, m = s.window->m;
    const int lo_target = s.t - n;                      // first kept target symbol
    const int hi_target = std::min(t_len - 1, s.t + m); // last kept target symbol
    auto off = emission_offsets(s);

    if (lo_target <= 0 && t_prompt > 0) {
        // horizon still reaches the prompt: keep it whole
        view.x_view = s.x_prompt;
        view.x_view.insert(view.x_view.end(), s.x_target.begin(),
                           s.x_target.begin() + hi_target + 1);
        view.y_view = s.y_prompt;
        view.y_view.insert(view.y_view.end(), s.y_out.begin(), s.y_out.end());
        view.plan = make_position_plan(t_prompt, hi_target + 1, s.t,
                                       static_cast<int>(s.y_prompt.size()),
                                       static_cast<int>(s.y_out.size()));
        return view;
    }

    const int lo = std::max(0, lo_target);
    view.x_view.assign(s.x_target.begin() + lo, s.x_target.begin() + hi_target + 1);
    // tokens of symbols [lo, t-1] plus the current symbol's partial emissions
    view.y_view.assign(s.y_out.begin() + off[lo], s.y_out.end());
    view.plan = make_position_plan(0, hi_target + 1 - lo, s.t - lo, 0,
                                   static_cast<int>(view.y_view.size()));
    return view;
}

DecodeResult decode_core(const RowFn& row_fn, int vbar, const std::vector<int>& x_prompt,
                         const std::vector<int>& y_prompt, const std::vector<int>& x_target,
                         const DecodeOptions& opts) {
    opts.validate();
    require(!x_target.empty(), "decode: empty target input");
    const int T = static_cast<int>(x_target.size());
    const int blank = vbar - 1;
    Rng rng(opts.seed);

    DecodeSession s;
    s.x_prompt = x_prompt;
    s.x_target = x_target;
    s.y_prompt = y_prompt;
    s.window = opts.window;
    s.emission_counts.assign(T, 0);

    DecodeResult res;
    res.durations.assign(T, 0);
    for (s.t = 0; s.t < T; ++s.t) {
        for (;;) {
            SessionView view = apply_context_window(s);
            RowBlock rows = row_fn(view.x_view, view.y_view, view.plan);
            require(rows.vbar == vbar, "decode: model vocabulary mismatch");
            int tok = sample_token(rows.row(rows.rows - 1), vbar, opts.sampling, rng);
            if (tok == blank) {
                res.path.steps.push_back(AlignmentPath::kBlank);
                break;
            }
            if (s.emission_counts[s.t] >= opts.max_steps_per_phoneme) {
                res.y_out = s.y_out;
                throw DecodeBudgetError(
                    "decode: symbol " + std::to_string(s.t) + " exceeded the emission budget (" +
                        std::to_string(opts.max_steps_per_phoneme) + ")",
                    std::move(res));
            }
            s.y_out.push_back(tok);
            s.emission_counts[s.t] += 1;
            res.durations[s.t] += 1;
            res.path.steps.push_back(static_cast<int>(s.y_out.size()) - 1);
        }
    }
    res.y_out = std::move(s.y_out);
    return res;
}

DecodeResult decode(const ModelParams& params, const std::vector<int>& x_prompt,
                    const std::vector<int>& y_prompt, const std::vector<int>& x_target,
                    const DecodeOptions& opts) {
    RowFn fn = [&params](const std::vector<int>& x_view, const std::vector<int>& y_view,
                         const PositionPlan& plan) {
        return forward_row(params, x_view, y_view, plan);
    };
    return decode_core(fn, params.config.vbar(), x_prompt, y_prompt, x_target, opts);
}

DecodeResult decode_with_pseudo_prompt(const ModelParams& params,
                                       const std::vector<int>& y_prompt_untranscribed,
                                       const std::vector<int>& pseudo_x_prompt,
                                       const std::vector<int>& x_target,
                                       const DecodeOptions& opts) {
    require(!pseudo_x_prompt.empty(),
            "decode: pseudo prompt transcription must be nonempty");
    return decode(params, pseudo_x_prompt, y_prompt_untranscribed, x_target, opts);
}

// ─── Metrics ─────────────────────────────────────────────────────────────────

int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                               prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[m];
}

double token_error_rate(const std::vector<int>& hyp, const std::vector<int>& ref) {
    if (ref.empty()) return hyp.empty() ? 0.0 : 1.0;
    return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

void TerAccum::add(const std::vector<int>& hyp, const std::vector<int>& ref) {
    edits += edit_distance(hyp, ref);
    ref_len += static_cast<long long>(ref.size());
}

double duration_match_rate(const std::vector<int>& pred, const std::vector<int>& gt) {
    require(pred.size() == gt.size(), "duration_match_rate: size mismatch");
    if (pred.empty()) return 1.0;
    int hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == gt[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double boundary_accuracy(const std::vector<int>& pred, const std::vector<int>& gt, int tol) {
    require(pred.size() == gt.size(), "boundary_accuracy: size mismatch");
    if (pred.empty()) return 1.0;
    int hits = 0;
    long long cp = 0, cg = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        cp += pred[i];
        cg += gt[i];
        hits += std::llabs(cp - cg) <= tol;
    }
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ─── Window sweep ────────────────────────────────────────────────────────────

std::vector<SweepRow> window_sweep(const ModelParams& params, const Corpus& corpus_long,
                                   const std::vector<std::optional<int>>& n_values,
                                   int m_fixed, const DecodeOptions& base_opts,
                                   int threads) {
    std::vector<SweepRow> rows;
    for (const auto& n : n_values) {
        DecodeOptions opts = base_opts;
        if (n)
            opts.window = ContextWindow{*n, m_fixed};
        else
            opts.window.reset();
        std::vector<std::vector<int>> hyps(corpus_long.size());
        parallel_for(static_cast<int>(corpus_long.size()), threads, [&](int i) {
            try {
                hyps[i] = decode(params, {}, {}, corpus_long[i].x, opts).y_out;
            } catch (const DecodeBudgetError& e) {
                hyps[i] = e.partial().y_out;
            }
        });
        TerAccum acc;
        for (size_t i = 0; i < corpus_long.size(); ++i) acc.add(hyps[i], corpus_long[i].y);
        rows.push_back({n, acc.value()});
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "n,ter\n";
    char buf[48];
    for (const auto& r : rows) {
        if (r.n)
            os << *r.n;
        else
            os << "unbounded";
        std::snprintf(buf, sizeof buf, ",%.9g\n", r.ter);
        os << buf;
    }
    return os.str();
}

}  // namespace motr
