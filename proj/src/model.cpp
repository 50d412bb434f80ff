#include "motr/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace motr {

namespace {
constexpr double kLnEps = 1e-5;
constexpr int kHardLenCap = 16384;  // memory guard; max_len is a training budget
}  // namespace

void ModelConfig::validate() const {
    require(n_layers >= 1, "config: n_layers must be >= 1");
    require(n_heads >= 1, "config: n_heads must be >= 1");
    require(d_model >= 2 && d_model % 2 == 0, "config: d_model must be even");
    require(d_model % n_heads == 0, "config: d_model must divide by n_heads");
    require(d_ff >= 1, "config: d_ff must be >= 1");
    require(input_vocab >= 1 && output_vocab >= 1, "config: empty vocabulary");
    require(max_len >= 2, "config: max_len too small");
}

ModelParams init_params(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    resize_params(p);
    Rng rng(config.seed);
    auto fill_uniform = [&](std::vector<float>& w, double limit) {
        for (auto& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
    };
    auto fill_const = [](std::vector<float>& w, float c) {
        std::fill(w.begin(), w.end(), c);
    };
    double emb_limit = std::sqrt(3.0 / config.d_model);
    fill_uniform(p.emb_x, emb_limit);
    fill_uniform(p.emb_y, emb_limit);
    fill_uniform(p.emb_sos, emb_limit);
    for (auto& l : p.layers) {
        fill_const(l.ln1_g, 1.0f);
        double w_limit = std::sqrt(6.0 / config.d_model);
        fill_uniform(l.wq, w_limit);
        fill_uniform(l.wk, w_limit);
        fill_uniform(l.wv, w_limit);
        fill_uniform(l.wo, w_limit);
        fill_const(l.ln2_g, 1.0f);
        fill_uniform(l.w1, w_limit);
        fill_uniform(l.w2, std::sqrt(6.0 / config.d_ff));
    }
    fill_const(p.lnf_g, 1.0f);
    fill_uniform(p.w_out, std::sqrt(6.0 / config.d_model));
    return p;
}

ModelGrads zero_grads(const ModelConfig& config) {
    ModelGrads g;
    g.config = config;
    resize_params(g);
    return g;
}

// ─── Positions ───────────────────────────────────────────────────────────────

void PositionPlan::validate() const {
    require(abs_x.size() == rel_x.size(), "plan: abs_x / rel_x size mismatch");
    for (size_t i = 0; i < abs_x.size(); ++i)
        require(abs_x[i] == static_cast<int>(i), "plan: abs_x must run 0,1,2,...");
    for (size_t j = 0; j < abs_y.size(); ++j)
        require(abs_y[j] == static_cast<int>(j), "plan: abs_y must run 0,1,2,...");
    int zeros = 0;
    for (size_t i = 0; i < rel_x.size(); ++i) {
        if (rel_x[i] == 0) ++zeros;
        if (i > 0) require(rel_x[i] == rel_x[i - 1] + 1, "plan: rel_x must step by 1");
    }
    require(zeros == 1, "plan: rel_x needs exactly one zero");
}

PositionPlan make_position_plan(int t_prompt, int t_len, int shift,
                                int u_prompt, int u_cur) {
    require(t_prompt >= 0 && u_prompt >= 0 && u_cur >= 0, "plan: negative lengths");
    require(t_len >= 1, "plan: empty target input");
    require(shift >= 0 && shift < t_len, "plan: shift out of range");
    PositionPlan plan;
    int t_total = t_prompt + t_len;
    plan.abs_x.resize(t_total);
    plan.rel_x.resize(t_total);
    for (int i = 0; i < t_total; ++i) {
        plan.abs_x[i] = i;
        plan.rel_x[i] = i - t_prompt - shift;
    }
    plan.abs_y.resize(u_prompt + u_cur + 1);
    for (size_t j = 0; j < plan.abs_y.size(); ++j) plan.abs_y[j] = static_cast<int>(j);
    return plan;
}

std::vector<double> sinusoidal_embed(const std::vector<int>& indices, int d_model) {
    require(d_model % 2 == 0, "sinusoidal_embed: d_model must be even");
    std::vector<double> out(indices.size() * d_model);
    const int pairs = d_model / 2;
    std::vector<double> freq(pairs);
    for (int p = 0; p < pairs; ++p)
        freq[p] = std::pow(10000.0, -2.0 * p / d_model);
    for (size_t i = 0; i < indices.size(); ++i) {
        double pos = indices[i];
        double* row = out.data() + i * d_model;
        for (int p = 0; p < pairs; ++p) {
            row[2 * p] = std::sin(pos * freq[p]);
            row[2 * p + 1] = std::cos(pos * freq[p]);
        }
    }
    return out;
}

// ─── Dense helpers ───────────────────────────────────────────────────────────

namespace {

// Y[L][dout] = X[L][din] * W[din][dout] (+ b)
void linear(const double* x, int rows, int din, const float* w, const float* b,
            int dout, double* y) {
    for (int i = 0; i < rows; ++i) {
        double* yr = y + (size_t)i * dout;
        if (b)
            for (int o = 0; o < dout; ++o) yr[o] = b[o];
        else
            std::fill(yr, yr + dout, 0.0);
        const double* xr = x + (size_t)i * din;
        for (int in = 0; in < din; ++in) {
            double xv = xr[in];
            const float* wr = w + (size_t)in * dout;
            for (int o = 0; o < dout; ++o) yr[o] += xv * wr[o];
        }
    }
}

// dX += dY * W^T ; dW += X^T * dY ; db += column sums of dY
void linear_backward(const double* x, const double* dy, int rows, int din,
                     const float* w, int dout, double* dx, double* dw, double* db) {
    for (int i = 0; i < rows; ++i) {
        const double* dyr = dy + (size_t)i * dout;
        const double* xr = x + (size_t)i * din;
        double* dxr = dx ? dx + (size_t)i * din : nullptr;
        if (dxr)
            for (int in = 0; in < din; ++in) {
                const float* wr = w + (size_t)in * dout;
                double acc = 0;
                for (int o = 0; o < dout; ++o) acc += dyr[o] * wr[o];
                dxr[in] += acc;
            }
        for (int in = 0; in < din; ++in) {
            double xv = xr[in];
            double* dwr = dw + (size_t)in * dout;
            for (int o = 0; o < dout; ++o) dwr[o] += xv * dyr[o];
        }
        if (db)
            for (int o = 0; o < dout; ++o) db[o] += dyr[o];
    }
}

void layer_norm(const double* x, int rows, int d, const float* g, const float* b,
                double* y, double* mean, double* rstd) {
    for (int i = 0; i < rows; ++i) {
        const double* xr = x + (size_t)i * d;
        double m = 0;
        for (int c = 0; c < d; ++c) m += xr[c];
        m /= d;
        double var = 0;
        for (int c = 0; c < d; ++c) var += (xr[c] - m) * (xr[c] - m);
        var /= d;
        double rs = 1.0 / std::sqrt(var + kLnEps);
        mean[i] = m;
        rstd[i] = rs;
        double* yr = y + (size_t)i * d;
        for (int c = 0; c < d; ++c) yr[c] = (xr[c] - m) * rs * g[c] + b[c];
    }
}

// dX += LN backward; accumulates dg, db.
void layer_norm_backward(const double* x, const double* dy, int rows, int d,
                         const float* g, const double* mean, const double* rstd,
                         double* dx, double* dg, double* db) {
    for (int i = 0; i < rows; ++i) {
        const double* xr = x + (size_t)i * d;
        const double* dyr = dy + (size_t)i * d;
        double* dxr = dx + (size_t)i * d;
        double m = mean[i], rs = rstd[i];
        double m1 = 0, m2 = 0;
        for (int c = 0; c < d; ++c) {
            double normed = (xr[c] - m) * rs;
            double dn = dyr[c] * g[c];
            dg[c] += dyr[c] * normed;
            db[c] += dyr[c];
            m1 += dn;
            m2 += dn * normed;
        }
        m1 /= d;
        m2 /= d;
        for (int c = 0; c < d; ++c) {
            double normed = (xr[c] - m) * rs;
            double dn = dyr[c] * g[c];
            dxr[c] += rs * (dn - m1 - normed * m2);
        }
    }
}

struct LayerCache {
    std::vector<double> h_in;
    std::vector<double> ln1_mean, ln1_rstd, a_in;
    std::vector<double> q, k, v;
    std::vector<double> attw;  // [H][L][L], rows beyond jmax left zero
    std::vector<double> ctx;
    std::vector<double> h_mid;
    std::vector<double> ln2_mean, ln2_rstd, b_in;
    std::vector<double> f1;  // post-relu
};

struct ForwardCache {
    int lx = 0, ly = 0;
    std::vector<double> h0;
    std::vector<LayerCache> layers;
    std::vector<double> lnf_mean, lnf_rstd, hn;
};

// Keys/values visible to query i: the input segment is bidirectional within
// itself, output positions additionally see their own causal prefix. Both
// cases are the contiguous range [0, jmax].
inline int attention_jmax(int i, int lx) { return i < lx ? lx - 1 : i; }

void attention_forward(const double* q, const double* k, const double* v, int rows,
                       int lx, int n_heads, int dh, double* attw_opt, double* ctx) {
    const int d = n_heads * dh;
    const double scale = 1.0 / std::sqrt((double)dh);
    std::vector<double> scores(rows);
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < rows; ++i) {
            const int jmax = attention_jmax(i, lx);
            const double* qi = q + (size_t)i * d + off;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j <= jmax; ++j) {
                const double* kj = k + (size_t)j * d + off;
                double s = 0;
                for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
                scores[j] = s * scale;
                mx = std::max(mx, scores[j]);
            }
            double z = 0;
            for (int j = 0; j <= jmax; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                z += scores[j];
            }
            double inv = 1.0 / z;
            double* ci = ctx + (size_t)i * d + off;
            std::fill(ci, ci + dh, 0.0);
            double* wrow = attw_opt ? attw_opt + ((size_t)h * rows + i) * rows : nullptr;
            for (int j = 0; j <= jmax; ++j) {
                double wgt = scores[j] * inv;
                if (wrow) wrow[j] = wgt;
                const double* vj = v + (size_t)j * d + off;
                for (int c = 0; c < dh; ++c) ci[c] += wgt * vj[c];
            }
        }
    }
}

void attention_backward(const double* q, const double* k, const double* v,
                        const double* attw, const double* dctx, int rows, int lx,
                        int n_heads, int dh, double* dq, double* dk, double* dv) {
    const int d = n_heads * dh;
    const double scale = 1.0 / std::sqrt((double)dh);
    std::vector<double> dw(rows);
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < rows; ++i) {
            const int jmax = attention_jmax(i, lx);
            const double* dci = dctx + (size_t)i * d + off;
            const double* wrow = attw + ((size_t)h * rows + i) * rows;
            double dsum = 0;
            for (int j = 0; j <= jmax; ++j) {
                const double* vj = v + (size_t)j * d + off;
                double acc = 0;
                for (int c = 0; c < dh; ++c) acc += dci[c] * vj[c];
                dw[j] = acc;
                dsum += wrow[j] * acc;
            }
            const double* qi = q + (size_t)i * d + off;
            double* dqi = dq + (size_t)i * d + off;
            for (int j = 0; j <= jmax; ++j) {
                double wgt = wrow[j];
                double ds = wgt * (dw[j] - dsum) * scale;
                const double* kj = k + (size_t)j * d + off;
                double* dkj = dk + (size_t)j * d + off;
                double* dvj = dv + (size_t)j * d + off;
                for (int c = 0; c < dh; ++c) {
                    dqi[c] += ds * kj[c];
                    dkj[c] += ds * qi[c];
                    dvj[c] += wgt * dci[c];
                }
            }
        }
    }
}

void check_sequences(const ModelParams& params, const std::vector<int>& x_full,
                     const std::vector<int>& y_so_far, const PositionPlan& plan) {
    const auto& c = params.config;
    require(!x_full.empty(), "forward: empty input sequence");
    require(static_cast<int>(x_full.size() + y_so_far.size() + 1) <= kHardLenCap,
            "forward: sequence length overflow");
    for (int s : x_full)
        require(s >= 0 && s < c.input_vocab, "forward: input symbol out of vocabulary");
    for (int tok : y_so_far)
        require(tok >= 0 && tok < c.output_vocab, "forward: output token out of vocabulary");
    plan.validate();
    require(plan.abs_x.size() == x_full.size(), "forward: plan does not match input length");
    require(plan.abs_y.size() == y_so_far.size() + 1,
            "forward: plan does not match output length");
}

// Embeddings, all transformer blocks and the final norm. Fills `cache` when
// given (training); otherwise keeps only what the output rows need.
RowBlock run_forward(const ModelParams& params, const std::vector<int>& x_full,
                     const std::vector<int>& y_so_far, const PositionPlan& plan,
                     ForwardCache* cache) {
    check_sequences(params, x_full, y_so_far, plan);
    const auto& c = params.config;
    const int d = c.d_model;
    const int lx = static_cast<int>(x_full.size());
    const int ly = static_cast<int>(y_so_far.size()) + 1;
    const int rows = lx + ly;

    std::vector<double> h((size_t)rows * d);
    auto abs_x_emb = sinusoidal_embed(plan.abs_x, d);
    auto rel_x_emb = sinusoidal_embed(plan.rel_x, d);
    auto abs_y_emb = sinusoidal_embed(plan.abs_y, d);
    for (int i = 0; i < lx; ++i) {
        const float* e = params.emb_x.data() + (size_t)x_full[i] * d;
        double* hr = h.data() + (size_t)i * d;
        for (int cdim = 0; cdim < d; ++cdim)
            hr[cdim] = e[cdim] + abs_x_emb[(size_t)i * d + cdim] + rel_x_emb[(size_t)i * d + cdim];
    }
    for (int j = 0; j < ly; ++j) {
        const float* e = j == 0 ? params.emb_sos.data()
                                : params.emb_y.data() + (size_t)y_so_far[j - 1] * d;
        double* hr = h.data() + (size_t)(lx + j) * d;
        for (int cdim = 0; cdim < d; ++cdim)
            hr[cdim] = e[cdim] + abs_y_emb[(size_t)j * d + cdim];
    }

    if (cache) {
        cache->lx = lx;
        cache->ly = ly;
        cache->h0 = h;
        cache->layers.assign(c.n_layers, {});
    }

    std::vector<double> a_in((size_t)rows * d), q((size_t)rows * d), k((size_t)rows * d),
        v((size_t)rows * d), ctx((size_t)rows * d), proj((size_t)rows * d),
        f1((size_t)rows * c.d_ff), mean(rows), rstd(rows);

    for (int li = 0; li < c.n_layers; ++li) {
        const auto& l = params.layers[li];
        LayerCache* lc = cache ? &cache->layers[li] : nullptr;
        if (lc) lc->h_in = h;

        layer_norm(h.data(), rows, d, l.ln1_g.data(), l.ln1_b.data(), a_in.data(),
                   mean.data(), rstd.data());
        if (lc) {
            lc->ln1_mean.assign(mean.begin(), mean.end());
            lc->ln1_rstd.assign(rstd.begin(), rstd.end());
            lc->a_in = a_in;
        }
        linear(a_in.data(), rows, d, l.wq.data(), nullptr, d, q.data());
        linear(a_in.data(), rows, d, l.wk.data(), nullptr, d, k.data());
        linear(a_in.data(), rows, d, l.wv.data(), nullptr, d, v.data());
        double* attw_ptr = nullptr;
        if (lc) {
            lc->q = q;
            lc->k = k;
            lc->v = v;
            lc->attw.assign((size_t)c.n_heads * rows * rows, 0.0);
            attw_ptr = lc->attw.data();
        }
        attention_forward(q.data(), k.data(), v.data(), rows, lx, c.n_heads,
                          c.d_head(), attw_ptr, ctx.data());
        if (lc) lc->ctx = ctx;
        linear(ctx.data(), rows, d, l.wo.data(), nullptr, d, proj.data());
        for (size_t idx = 0; idx < h.size(); ++idx) h[idx] += proj[idx];
        if (lc) lc->h_mid = h;

        layer_norm(h.data(), rows, d, l.ln2_g.data(), l.ln2_b.data(), a_in.data(),
                   mean.data(), rstd.data());
        if (lc) {
            lc->ln2_mean.assign(mean.begin(), mean.end());
            lc->ln2_rstd.assign(rstd.begin(), rstd.end());
            lc->b_in = a_in;
        }
        linear(a_in.data(), rows, d, l.w1.data(), l.b1.data(), c.d_ff, f1.data());
        for (auto& fval : f1) fval = fval > 0 ? fval : 0.0;
        if (lc) lc->f1 = f1;
        linear(f1.data(), rows, c.d_ff, l.w2.data(), l.b2.data(), d, proj.data());
        for (size_t idx = 0; idx < h.size(); ++idx) h[idx] += proj[idx];
    }

    // Final norm + projection, output segment only.
    std::vector<double> hn((size_t)ly * d), lnf_mean(ly), lnf_rstd(ly);
    layer_norm(h.data() + (size_t)lx * d, ly, d, params.lnf_g.data(), params.lnf_b.data(),
               hn.data(), lnf_mean.data(), lnf_rstd.data());
    RowBlock out;
    out.rows = ly;
    out.vbar = c.vbar();
    out.logp.resize((size_t)ly * out.vbar);
    linear(hn.data(), ly, d, params.w_out.data(), params.b_out.data(), out.vbar,
           out.logp.data());
    for (int j = 0; j < ly; ++j) {
        double* row = out.logp.data() + (size_t)j * out.vbar;
        double mx = *std::max_element(row, row + out.vbar);
        double z = 0;
        for (int kk = 0; kk < out.vbar; ++kk) z += std::exp(row[kk] - mx);
        double lz = mx + std::log(z);
        for (int kk = 0; kk < out.vbar; ++kk) row[kk] -= lz;
    }

    if (cache) {
        // keep h at the top of the stack for the lnf backward
        cache->layers.emplace_back();
        cache->layers.back().h_in = std::move(h);
        cache->lnf_mean = std::move(lnf_mean);
        cache->lnf_rstd = std::move(lnf_rstd);
        cache->hn = std::move(hn);
    }
    return out;
}

// Reverse pass for one row computation. d_logp is (ly x vbar).
void run_backward(const ModelParams& params, const std::vector<int>& x_full,
                  const std::vector<int>& y_so_far, const ForwardCache& cache,
                  const RowBlock& rows_out, const std::vector<double>& d_logp,
                  ModelGrads& g) {
    const auto& c = params.config;
    const int d = c.d_model;
    const int lx = cache.lx, ly = cache.ly;
    const int rows = lx + ly;
    const int vbar = c.vbar();

    // log-softmax backward
    std::vector<double> d_logits((size_t)ly * vbar);
    for (int j = 0; j < ly; ++j) {
        const double* dlp = d_logp.data() + (size_t)j * vbar;
        const double* lp = rows_out.logp.data() + (size_t)j * vbar;
        double s = 0;
        for (int kk = 0; kk < vbar; ++kk) s += dlp[kk];
        double* dlg = d_logits.data() + (size_t)j * vbar;
        for (int kk = 0; kk < vbar; ++kk) dlg[kk] = dlp[kk] - std::exp(lp[kk]) * s;
    }

    // output projection and final norm
    std::vector<double> d_hn((size_t)ly * d, 0.0);
    linear_backward(cache.hn.data(), d_logits.data(), ly, d, params.w_out.data(), vbar,
                    d_hn.data(), g.w_out.data(), g.b_out.data());
    std::vector<double> dh((size_t)rows * d, 0.0);
    const auto& h_top = cache.layers.back().h_in;  // stack output, all positions
    layer_norm_backward(h_top.data() + (size_t)lx * d, d_hn.data(), ly, d,
                        params.lnf_g.data(), cache.lnf_mean.data(), cache.lnf_rstd.data(),
                        dh.data() + (size_t)lx * d, g.lnf_g.data(), g.lnf_b.data());

    std::vector<double> d_f1((size_t)rows * c.d_ff), d_bin((size_t)rows * d),
        d_ctx((size_t)rows * d), d_q((size_t)rows * d), d_k((size_t)rows * d),
        d_v((size_t)rows * d), d_ain((size_t)rows * d);

    for (int li = c.n_layers - 1; li >= 0; --li) {
        const auto& l = params.layers[li];
        const auto& lc = cache.layers[li];
        auto& gl = g.layers[li];

        // FFN: dh flows through the residual unchanged, plus the branch.
        std::fill(d_f1.begin(), d_f1.end(), 0.0);
        std::fill(d_bin.begin(), d_bin.end(), 0.0);
        linear_backward(lc.f1.data(), dh.data(), rows, c.d_ff, l.w2.data(), d,
                        d_f1.data(), gl.w2.data(), gl.b2.data());
        for (size_t idx = 0; idx < d_f1.size(); ++idx)
            if (lc.f1[idx] <= 0) d_f1[idx] = 0;
        linear_backward(lc.b_in.data(), d_f1.data(), rows, d, l.w1.data(), c.d_ff,
                        d_bin.data(), gl.w1.data(), gl.b1.data());
        layer_norm_backward(lc.h_mid.data(), d_bin.data(), rows, d, l.ln2_g.data(),
                            lc.ln2_mean.data(), lc.ln2_rstd.data(), dh.data(),
                            gl.ln2_g.data(), gl.ln2_b.data());

        // attention branch
        std::fill(d_ctx.begin(), d_ctx.end(), 0.0);
        linear_backward(lc.ctx.data(), dh.data(), rows, d, l.wo.data(), d,
                        d_ctx.data(), gl.wo.data(), nullptr);
        std::fill(d_q.begin(), d_q.end(), 0.0);
        std::fill(d_k.begin(), d_k.end(), 0.0);
        std::fill(d_v.begin(), d_v.end(), 0.0);
        attention_backward(lc.q.data(), lc.k.data(), lc.v.data(), lc.attw.data(),
                           d_ctx.data(), rows, lx, c.n_heads, c.d_head(),
                           d_q.data(), d_k.data(), d_v.data());
        std::fill(d_ain.begin(), d_ain.end(), 0.0);
        linear_backward(lc.a_in.data(), d_q.data(), rows, d, l.wq.data(), d,
                        d_ain.data(), gl.wq.data(), nullptr);
        linear_backward(lc.a_in.data(), d_k.data(), rows, d, l.wk.data(), d,
                        d_ain.data(), gl.wk.data(), nullptr);
        linear_backward(lc.a_in.data(), d_v.data(), rows, d, l.wv.data(), d,
                        d_ain.data(), gl.wv.data(), nullptr);
        layer_norm_backward(lc.h_in.data(), d_ain.data(), rows, d, l.ln1_g.data(),
                            lc.ln1_mean.data(), lc.ln1_rstd.data(), dh.data(),
                            gl.ln1_g.data(), gl.ln1_b.data());
    }

    // embeddings
    for (int i = 0; i < lx; ++i) {
        const double* dhr = dh.data() + (size_t)i * d;
        double* ge = g.emb_x.data() + (size_t)x_full[i] * d;
        for (int cdim = 0; cdim < d; ++cdim) ge[cdim] += dhr[cdim];
    }
    for (int j = 0; j < ly; ++j) {
        const double* dhr = dh.data() + (size_t)(lx + j) * d;
        double* ge = j == 0 ? g.emb_sos.data()
                            : g.emb_y.data() + (size_t)y_so_far[j - 1] * d;
        for (int cdim = 0; cdim < d; ++cdim) ge[cdim] += dhr[cdim];
    }
}

}  // namespace

RowBlock forward_row(const ModelParams& params, const std::vector<int>& x_full,
                     const std::vector<int>& y_so_far, const PositionPlan& plan) {
    return run_forward(params, x_full, y_so_far, plan, nullptr);
}

LogProbLattice build_lattice(const ModelParams& params, const std::vector<int>& x,
                             const std::vector<int>& y) {
    const auto& c = params.config;
    const int T = static_cast<int>(x.size());
    const int U = static_cast<int>(y.size());
    require(T >= 1, "build_lattice: empty input");
    LogProbLattice lat(T, U, c.vbar());
    for (int t = 0; t < T; ++t) {
        auto plan = make_position_plan(0, T, t, 0, U);
        RowBlock rows = forward_row(params, x, y, plan);
        std::copy(rows.logp.begin(), rows.logp.end(),
                  lat.entries.begin() + lat.index(t, 0, 0));
    }
    return lat;
}

void backward_pass(const ModelParams& params, const std::vector<int>& x,
                   const std::vector<int>& y, const std::vector<double>& grad_lattice,
                   ModelGrads& grads) {
    const auto& c = params.config;
    const int T = static_cast<int>(x.size());
    const int U = static_cast<int>(y.size());
    const size_t row_block = (size_t)(U + 1) * c.vbar();
    require(grad_lattice.size() == (size_t)T * row_block,
            "backward_pass: gradient shape mismatch");
    require(grads.config == c, "backward_pass: gradient buffer config mismatch");
    std::vector<double> d_logp(row_block);
    for (int t = 0; t < T; ++t) {
        std::copy(grad_lattice.begin() + t * row_block,
                  grad_lattice.begin() + (t + 1) * row_block, d_logp.begin());
        bool all_zero = std::all_of(d_logp.begin(), d_logp.end(),
                                    [](double gv) { return gv == 0.0; });
        if (all_zero) continue;
        auto plan = make_position_plan(0, T, t, 0, U);
        ForwardCache cache;
        RowBlock rows = run_forward(params, x, y, plan, &cache);
        run_backward(params, x, y, cache, rows, d_logp, grads);
    }
}

double example_loss(const ModelParams& params, const std::vector<int>& x,
                    const std::vector<int>& y, ModelGrads* grads) {
    LogProbLattice lat = build_lattice(params, x, y);
    LatticeLoss ll = loss_and_grad(lat, y);
    if (grads) backward_pass(params, x, y, ll.grad, *grads);
    return ll.loss;
}

// ─── Checkpoints ─────────────────────────────────────────────────────────────

namespace {

constexpr char kMagic[8] = {'M', 'O', 'T', 'R', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_i32(std::string& out, int32_t v) { put_u32(out, static_cast<uint32_t>(v)); }
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    uint64_t u64() {
        uint64_t lo = u32(), hi = u32();
        return lo | (hi << 32);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void append_tensor(std::string& out, const std::string& name,
                   const std::vector<int>& dims, const std::vector<float>& data) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(dims.size()));
    size_t n = 1;
    for (int dim : dims) {
        put_i32(out, dim);
        n *= static_cast<size_t>(dim);
    }
    if (n != data.size()) throw std::runtime_error("checkpoint: tensor size mismatch: " + name);
    for (float v : data) put_f32(out, v);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::vector<ExtraTensor>& extras) {
    std::string out;
    out.append(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    const auto& c = params.config;
    put_i32(out, c.n_layers);
    put_i32(out, c.n_heads);
    put_i32(out, c.d_model);
    put_i32(out, c.d_ff);
    put_i32(out, c.input_vocab);
    put_i32(out, c.output_vocab);
    put_i32(out, c.max_len);
    put_u64(out, c.seed);

    uint32_t count = 0;
    for_each_tensor(const_cast<ModelParams&>(params),
                    [&](const std::string&, const std::vector<int>&,
                        const std::vector<float>&) { ++count; });
    put_u32(out, count + static_cast<uint32_t>(extras.size()));
    for_each_tensor(const_cast<ModelParams&>(params),
                    [&](const std::string& name, const std::vector<int>& dims,
                        const std::vector<float>& data) { append_tensor(out, name, dims, data); });
    for (const auto& e : extras) append_tensor(out, e.name, e.dims, e.data);
    write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    std::string buf = os.str();
    Reader r(buf);
    if (r.bytes(8) != std::string(kMagic, sizeof kMagic))
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (r.u32() != kVersion) throw std::runtime_error("checkpoint: unsupported version");

    Checkpoint ck;
    auto& c = ck.params.config;
    c.n_layers = r.i32();
    c.n_heads = r.i32();
    c.d_model = r.i32();
    c.d_ff = r.i32();
    c.input_vocab = r.i32();
    c.output_vocab = r.i32();
    c.max_len = r.i32();
    c.seed = r.u64();
    c.validate();
    resize_params(ck.params);

    std::map<std::string, std::pair<std::vector<int>, std::vector<float>*>> slots;
    for_each_tensor(ck.params, [&](const std::string& name, const std::vector<int>& dims,
                                   std::vector<float>& data) { slots[name] = {dims, &data}; });

    uint32_t count = r.u32();
    size_t filled = 0;
    for (uint32_t ti = 0; ti < count; ++ti) {
        uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        uint32_t rank = r.u32();
        std::vector<int> dims(rank);
        size_t n = 1;
        for (auto& dim : dims) {
            dim = r.i32();
            if (dim <= 0) throw std::runtime_error("checkpoint: bad dimension in " + name);
            n *= static_cast<size_t>(dim);
        }
        std::vector<float> data(n);
        for (auto& v : data) v = r.f32();
        auto it = slots.find(name);
        if (it != slots.end()) {
            if (it->second.first != dims)
                throw std::runtime_error("checkpoint: dims mismatch for " + name);
            *it->second.second = std::move(data);
            ++filled;
        } else {
            ck.extras.push_back({name, dims, std::move(data)});
        }
    }
    if (filled != slots.size())
        throw std::runtime_error("checkpoint: missing parameter tensors in " + path);
    return ck;
}

}  // namespace motr
