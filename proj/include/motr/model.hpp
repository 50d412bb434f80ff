#pragma once

#include <string>
#include <vector>

#include "motr/common.hpp"
#include "motr/lattice.hpp"

namespace motr {

// ─── Configuration and parameters ───────────────────────────────────────────

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 2;
    int d_model = 64;
    int d_ff = 128;
    int input_vocab = 20;   // symbol ids
    int output_vocab = 24;  // token ids, blank excluded
    int max_len = 256;      // trained sequence budget, enforced by the trainer
    uint64_t seed = 1;

    int vbar() const { return output_vocab + 1; }
    int blank() const { return output_vocab; }
    int d_head() const { return d_model / n_heads; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// Parameters are stored in float32 — the checkpoint payload type — while all
// arithmetic runs in double. Keeping the in-memory and on-disk precision
// identical is what makes save/resume trajectories bit-exact.
template <typename S>
struct LayerParamsT {
    std::vector<S> ln1_g, ln1_b;      // [d]
    std::vector<S> wq, wk, wv, wo;    // [d][d], row-major in -> out
    std::vector<S> ln2_g, ln2_b;      // [d]
    std::vector<S> w1, b1;            // [d][d_ff], [d_ff]
    std::vector<S> w2, b2;            // [d_ff][d], [d]
};

template <typename S>
struct ParamsT {
    ModelConfig config;
    std::vector<S> emb_x;    // [input_vocab][d]
    std::vector<S> emb_y;    // [output_vocab][d]
    std::vector<S> emb_sos;  // [d]
    std::vector<LayerParamsT<S>> layers;
    std::vector<S> lnf_g, lnf_b;  // [d]
    std::vector<S> w_out, b_out;  // [d][vbar], [vbar]
};

using ModelParams = ParamsT<float>;
using ModelGrads = ParamsT<double>;

template <typename S>
void resize_params(ParamsT<S>& p) {
    const auto& c = p.config;
    auto sz = [](std::vector<S>& v, size_t n) { v.assign(n, S(0)); };
    sz(p.emb_x, (size_t)c.input_vocab * c.d_model);
    sz(p.emb_y, (size_t)c.output_vocab * c.d_model);
    sz(p.emb_sos, c.d_model);
    p.layers.assign(c.n_layers, {});
    for (auto& l : p.layers) {
        sz(l.ln1_g, c.d_model); sz(l.ln1_b, c.d_model);
        sz(l.wq, (size_t)c.d_model * c.d_model);
        sz(l.wk, (size_t)c.d_model * c.d_model);
        sz(l.wv, (size_t)c.d_model * c.d_model);
        sz(l.wo, (size_t)c.d_model * c.d_model);
        sz(l.ln2_g, c.d_model); sz(l.ln2_b, c.d_model);
        sz(l.w1, (size_t)c.d_model * c.d_ff); sz(l.b1, c.d_ff);
        sz(l.w2, (size_t)c.d_ff * c.d_model); sz(l.b2, c.d_model);
    }
    sz(p.lnf_g, c.d_model); sz(p.lnf_b, c.d_model);
    sz(p.w_out, (size_t)c.d_model * c.vbar());
    sz(p.b_out, c.vbar());
}

// Stable tensor enumeration used by checkpoints, the optimizer and the
// gradient plumbing. fn(name, dims, data).
template <typename S, typename Fn>
void for_each_tensor(ParamsT<S>& p, Fn&& fn) {
    const auto& c = p.config;
    fn("emb_x", std::vector<int>{c.input_vocab, c.d_model}, p.emb_x);
    fn("emb_y", std::vector<int>{c.output_vocab, c.d_model}, p.emb_y);
    fn("emb_sos", std::vector<int>{c.d_model}, p.emb_sos);
    for (int i = 0; i < c.n_layers; ++i) {
        auto& l = p.layers[i];
        std::string pre = "layers." + std::to_string(i) + ".";
        fn(pre + "ln1_g", std::vector<int>{c.d_model}, l.ln1_g);
        fn(pre + "ln1_b", std::vector<int>{c.d_model}, l.ln1_b);
        fn(pre + "wq", std::vector<int>{c.d_model, c.d_model}, l.wq);
        fn(pre + "wk", std::vector<int>{c.d_model, c.d_model}, l.wk);
        fn(pre + "wv", std::vector<int>{c.d_model, c.d_model}, l.wv);
        fn(pre + "wo", std::vector<int>{c.d_model, c.d_model}, l.wo);
        fn(pre + "ln2_g", std::vector<int>{c.d_model}, l.ln2_g);
        fn(pre + "ln2_b", std::vector<int>{c.d_model}, l.ln2_b);
        fn(pre + "w1", std::vector<int>{c.d_model, c.d_ff}, l.w1);
        fn(pre + "b1", std::vector<int>{c.d_ff}, l.b1);
        fn(pre + "w2", std::vector<int>{c.d_ff, c.d_model}, l.w2);
        fn(pre + "b2", std::vector<int>{c.d_model}, l.b2);
    }
    fn("lnf_g", std::vector<int>{c.d_model}, p.lnf_g);
    fn("lnf_b", std::vector<int>{c.d_model}, p.lnf_b);
    fn("w_out", std::vector<int>{c.d_model, c.vbar()}, p.w_out);
    fn("b_out", std::vector<int>{c.vbar()}, p.b_out);
}

ModelParams init_params(const ModelConfig& config);
ModelGrads zero_grads(const ModelConfig& config);

// ─── Positions ───────────────────────────────────────────────────────────────

// Position indices for one forward pass. Absolute indices start at 0 with
// step 1 on both segments; relative input indices increase by 1 and place 0
// on the symbol currently being generated.
struct PositionPlan {
    std::vector<int> abs_x;
    std::vector<int> abs_y;  // index 0 is <sos>
    std::vector<int> rel_x;

    void validate() const;
};

// Plan for shift t of a (prompt + target) sequence: rel_x runs
// [-t_prompt - shift, ..., t_len - 1 - shift] so that relative 0 sits on
// target symbol `shift`.
PositionPlan make_position_plan(int t_prompt, int t_len, int shift,
                                int u_prompt, int u_cur);

// Interleaved sin/cos embedding; defined for negative indices by evaluating
// the same formula at the signed value.
std::vector<double> sinusoidal_embed(const std::vector<int>& indices, int d_model);

// ─── Forward / backward ──────────────────────────────────────────────────────

// (u_count) x vbar log-softmax rows for the output segment.
struct RowBlock {
    int rows = 0;
    int vbar = 0;
    std::vector<double> logp;

    double at(int u, int k) const { return logp[(size_t)u * vbar + k]; }
    const double* row(int u) const { return logp.data() + (size_t)u * vbar; }
};

// Runs the decoder-only transformer over [x_full ; <sos> ; y_so_far].
// Input-segment positions attend bidirectionally among themselves; output
// positions attend to the whole input segment and causally to previous
// output positions. Returns one next-token distribution per output position.
RowBlock forward_row(const ModelParams& params, const std::vector<int>& x_full,
                     const std::vector<int>& y_so_far, const PositionPlan& plan);

// Stacks forward_row over shifts t = 0..T-1 into the emission lattice.
LogProbLattice build_lattice(const ModelParams& params, const std::vector<int>& x,
                             const std::vector<int>& y);

// Reverse-mode pass: accumulates d loss / d params into `grads` given the
// gradient with respect to the lattice's log-probability entries. Recomputes
// the T row passes internally, so it pairs with build_lattice.
void backward_pass(const ModelParams& params, const std::vector<int>& x,
                   const std::vector<int>& y, const std::vector<double>& grad_lattice,
                   ModelGrads& grads);

// build_lattice + transducer loss + backward_pass in one call.
double example_loss(const ModelParams& params, const std::vector<int>& x,
                    const std::vector<int>& y, ModelGrads* grads = nullptr);

// ─── Checkpoints ─────────────────────────────────────────────────────────────
//
// Little-endian container: magic "MOTRCKP1", u32 version, the ModelConfig
// fields (7 x i32, u64 seed), u32 tensor count, then per tensor: u32 name
// length, name bytes, u32 rank, i32 dims, float32 payload. Extra tensors
// (e.g. optimizer state) ride along after the parameter tensors.

struct ExtraTensor {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;

    bool operator==(const ExtraTensor&) const = default;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const std::vector<ExtraTensor>& extras = {});

struct Checkpoint {
    ModelParams params;
    std::vector<ExtraTensor> extras;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace motr
