#include "motr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace motr {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    int workers = std::min(n, std::max(1, threads));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

AdamState init_adam(const ModelConfig& config) {
    AdamState s;
    s.m.config = config;
    s.v.config = config;
    resize_params(s.m);
    resize_params(s.v);
    return s;
}

std::vector<ExtraTensor> adam_to_extras(const AdamState& opt) {
    std::vector<ExtraTensor> extras;
    extras.push_back({"opt.step", {1}, {static_cast<float>(opt.step)}});
    auto dump = [&](const ModelParams& p, const std::string& prefix) {
        for_each_tensor(const_cast<ModelParams&>(p),
                        [&](const std::string& name, const std::vector<int>& dims,
                            std::vector<float>& data) {
                            extras.push_back({prefix + name, dims, data});
                        });
    };
    dump(opt.m, "opt.m.");
    dump(opt.v, "opt.v.");
    return extras;
}

AdamState adam_from_extras(const ModelConfig& config,
                           const std::vector<ExtraTensor>& extras) {
    AdamState s = init_adam(config);
    auto fill = [&](ModelParams& p, const std::string& prefix) {
        for_each_tensor(p, [&](const std::string& name, const std::vector<int>& dims,
                               std::vector<float>& data) {
            for (const auto& e : extras)
                if (e.name == prefix + name) {
                    require(e.dims == dims, "optimizer state dims mismatch: " + e.name);
                    data = e.data;
                    return;
                }
        });
    };
    fill(s.m, "opt.m.");
    fill(s.v, "opt.v.");
    for (const auto& e : extras)
        if (e.name == "opt.step" && !e.data.empty())
            s.step = static_cast<int64_t>(e.data[0]);
    return s;
}

namespace {

int effective_threads(const TrainOptions& opts) {
    if (opts.threads > 0) return opts.threads;
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

// total += g, elementwise over every tensor
void accumulate(ModelGrads& total, const ModelGrads& g) {
    auto add = [](std::vector<double>& a, const std::vector<double>& b) {
        for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(total.emb_x, g.emb_x);
    add(total.emb_y, g.emb_y);
    add(total.emb_sos, g.emb_sos);
    for (size_t li = 0; li < total.layers.size(); ++li) {
        auto& a = total.layers[li];
        const auto& b = g.layers[li];
        add(a.ln1_g, b.ln1_g); add(a.ln1_b, b.ln1_b);
        add(a.wq, b.wq); add(a.wk, b.wk); add(a.wv, b.wv); add(a.wo, b.wo);
        add(a.ln2_g, b.ln2_g); add(a.ln2_b, b.ln2_b);
        add(a.w1, b.w1); add(a.b1, b.b1); add(a.w2, b.w2); add(a.b2, b.b2);
    }
    add(total.lnf_g, g.lnf_g);
    add(total.lnf_b, g.lnf_b);
    add(total.w_out, g.w_out);
    add(total.b_out, g.b_out);
}

}  // namespace

double train_step(ModelParams& params, std::span<const SequencePair> batch,
                  AdamState& opt, const TrainOptions& opts) {
    require(!batch.empty(), "train_step: empty batch");
    const auto& c = params.config;
    const int n = static_cast<int>(batch.size());
    for (const auto& pair : batch)
        require(static_cast<int>(pair.x.size() + pair.y.size() + 1) <= c.max_len,
                "train_step: sequence exceeds max_len");

    std::vector<ModelGrads> grads(n, zero_grads(c));
    std::vector<double> losses(n);
    parallel_for(n, effective_threads(opts), [&](int i) {
        losses[i] = example_loss(params, batch[i].x, batch[i].y, &grads[i]);
    });

    double loss_sum = 0;
    for (double l : losses) loss_sum += l;
    if (!std::isfinite(loss_sum))
        throw TrainingDiverged("training diverged: non-finite loss at step " +
                               std::to_string(opt.step + 1));

    // fixed-order reduction keeps the update bit-deterministic
    ModelGrads total = std::move(grads[0]);
    for (int i = 1; i < n; ++i) accumulate(total, grads[i]);

    double sq = 0;
    for_each_tensor(total, [&](const std::string&, const std::vector<int>&,
                               std::vector<double>& gdata) {
        for (double gv : gdata) sq += gv * gv;
    });
    double norm = std::sqrt(sq);
    double scale = (opts.clip_norm > 0 && norm > opts.clip_norm)
                       ? opts.clip_norm / norm
                       : 1.0;

    opt.step += 1;
    double lr_t = opts.lr;
    if (opts.warmup_steps > 0)
        lr_t *= std::min(1.0, static_cast<double>(opt.step) / opts.warmup_steps);
    double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(opt.step));
    double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(opt.step));

    // walk (param, m, v, grad) tensors in lockstep via the fixed enumeration
    std::vector<std::vector<float>*> pt, mt, vt;
    std::vector<std::vector<double>*> gt;
    for_each_tensor(params, [&](const std::string&, const std::vector<int>&,
                                std::vector<float>& data) { pt.push_back(&data); });
    for_each_tensor(opt.m, [&](const std::string&, const std::vector<int>&,
                               std::vector<float>& data) { mt.push_back(&data); });
    for_each_tensor(opt.v, [&](const std::string&, const std::vector<int>&,
                               std::vector<float>& data) { vt.push_back(&data); });
    for_each_tensor(total, [&](const std::string&, const std::vector<int>&,
                               std::vector<double>& data) { gt.push_back(&data); });
    for (size_t ti = 0; ti < pt.size(); ++ti) {
        auto& p = *pt[ti];
        auto& m = *mt[ti];
        auto& v = *vt[ti];
        const auto& gvec = *gt[ti];
        for (size_t i = 0; i < p.size(); ++i) {
            double gv = gvec[i] * scale;
            double mn = opts.beta1 * (double)m[i] + (1.0 - opts.beta1) * gv;
            double vn = opts.beta2 * (double)v[i] + (1.0 - opts.beta2) * gv * gv;
            m[i] = static_cast<float>(mn);
            v[i] = static_cast<float>(vn);
            double mhat = (double)m[i] / bc1;
            double vhat = (double)v[i] / bc2;
            p[i] = static_cast<float>((double)p[i] -
                                      lr_t * mhat / (std::sqrt(vhat) + opts.eps));
        }
    }
    return loss_sum / n;
}

std::vector<LossPoint> train_loop(ModelParams& params, AdamState& opt,
                                  const Corpus& corpus, int epochs,
                                  const TrainOptions& opts, uint64_t shuffle_seed,
                                  const StepCallback& on_step) {
    require(!corpus.empty() || epochs == 0, "train_loop: empty corpus");
    std::vector<LossPoint> curve;
    if (epochs == 0) return curve;
    const int n = static_cast<int>(corpus.size());
    const int batch = std::max(1, opts.batch_size);
    const int64_t steps_per_epoch = (n + batch - 1) / batch;

    for (int epoch = static_cast<int>(opt.step / steps_per_epoch); epoch < epochs; ++epoch) {
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(shuffle_seed ^ (0x5157AB1Eull + static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(0, i)]);

        int64_t start_batch = opt.step - epoch * steps_per_epoch;  // resume offset
        for (int64_t b = start_batch; b < steps_per_epoch; ++b) {
            std::vector<SequencePair> chunk;
            for (int i = static_cast<int>(b) * batch;
                 i < std::min(n, static_cast<int>(b + 1) * batch); ++i)
                chunk.push_back(corpus[order[i]]);
            double mean_loss = train_step(params, chunk, opt, opts);
            LossPoint pt{opt.step, epoch, mean_loss};
            curve.push_back(pt);
            if (on_step) on_step(pt, params, opt);
        }
    }
    return curve;
}

std::string curve_to_csv(const std::vector<LossPoint>& curve) {
    std::ostringstream os;
    os << "step,epoch,mean_loss\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%lld,%d,%.17g\n",
                      static_cast<long long>(p.step), p.epoch, p.mean_loss);
        os << buf;
    }
    return os.str();
}

}  // namespace motr
