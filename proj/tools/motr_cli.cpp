// motr — command line driver: corpus generation, training, decoding,
// forced alignment and context-window sweeps.
//
// Exit codes: 0 success, 1 I/O failure, 2 usage, 3 numerical failure,
// 4 checkpoint/corpus/config mismatch.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "motr/corpus.hpp"
#include "motr/decoder.hpp"
#include "motr/lattice.hpp"
#include "motr/model.hpp"
#include "motr/trainer.hpp"

namespace fs = std::filesystem;
using namespace motr;

namespace {

struct MismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ─── Config file (flat key=value) ────────────────────────────────────────────

struct FileConfig {
    ModelConfig model;
    TrainOptions train;
    int checkpoint_every = 0;  // 0 = initial and final checkpoints only
};

FileConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    FileConfig c;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value");
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
        try {
            if (key == "n_layers") c.model.n_layers = std::stoi(val);
            else if (key == "n_heads") c.model.n_heads = std::stoi(val);
            else if (key == "d_model") c.model.d_model = std::stoi(val);
            else if (key == "d_ff") c.model.d_ff = std::stoi(val);
            else if (key == "input_vocab") c.model.input_vocab = std::stoi(val);
            else if (key == "output_vocab") c.model.output_vocab = std::stoi(val);
            else if (key == "max_len") c.model.max_len = std::stoi(val);
            else if (key == "seed") c.model.seed = std::stoull(val);
            else if (key == "batch_size") c.train.batch_size = std::stoi(val);
            else if (key == "lr") c.train.lr = std::stod(val);
            else if (key == "beta1") c.train.beta1 = std::stod(val);
            else if (key == "beta2") c.train.beta2 = std::stod(val);
            else if (key == "eps") c.train.eps = std::stod(val);
            else if (key == "warmup_steps") c.train.warmup_steps = std::stoi(val);
            else if (key == "clip_norm") c.train.clip_norm = std::stod(val);
            else if (key == "threads") c.train.threads = std::stoi(val);
            else if (key == "checkpoint_every") c.checkpoint_every = std::stoi(val);
            else
                throw std::runtime_error("unknown key '" + key + "'");
        } catch (const std::runtime_error&) {
            throw;
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": bad value for " + key);
        }
    }
    return c;
}

// ─── Shared helpers ──────────────────────────────────────────────────────────

ModelParams load_params_checked(const std::string& path, const Corpus& corpus) {
    Checkpoint ck;
    try {
        ck = load_checkpoint(path);
    } catch (const std::runtime_error& e) {
        std::string what = e.what();
        if (what.find("checkpoint:") != std::string::npos) throw MismatchError(what);
        throw;
    }
    const auto& c = ck.params.config;
    for (const auto& p : corpus) {
        for (int s : p.x)
            if (s >= c.input_vocab)
                throw MismatchError("corpus symbol id " + std::to_string(s) +
                                    " does not fit the checkpoint's input vocabulary");
        for (int tok : p.y)
            if (tok >= c.output_vocab)
                throw MismatchError("corpus token id " + std::to_string(tok) +
                                    " does not fit the checkpoint's output vocabulary");
    }
    return std::move(ck.params);
}

std::string path_string(const AlignmentPath& p) {
    std::string s;
    s.reserve(p.steps.size());
    for (int step : p.steps) s.push_back(step == AlignmentPath::kBlank ? 'B' : 'E');
    return s;
}

void append_ids(std::string& out, const std::vector<int>& ids) {
    char buf[16];
    for (size_t i = 0; i < ids.size(); ++i) {
        std::snprintf(buf, sizeof buf, i ? " %d" : "%d", ids[i]);
        out += buf;
    }
}

Sampling parse_sampling(const std::string& text) {
    Sampling s;
    if (text == "greedy") return s;
    if (text.rfind("temp:", 0) == 0) {
        s.kind = SamplingKind::kTemperature;
        s.temperature = std::stod(text.substr(5));
        return s;
    }
    if (text.rfind("topk:", 0) == 0) {
        s.kind = SamplingKind::kTopK;
        s.top_k = std::stoi(text.substr(5));
        return s;
    }
    throw CLI::ValidationError("--sampling", "expected greedy, temp:<t> or topk:<k>");
}

std::optional<ContextWindow> parse_window(const std::string& text) {
    if (text.empty()) return std::nullopt;
    auto comma = text.find(',');
    if (comma == std::string::npos)
        throw CLI::ValidationError("--window", "expected n,m");
    return ContextWindow{std::stoi(text.substr(0, comma)), std::stoi(text.substr(comma + 1))};
}

// ─── Subcommands ─────────────────────────────────────────────────────────────

int cmd_gen(const std::string& spec_name, int n, int len_min, int len_max,
            uint64_t seed, const std::string& out) {
    TaskSpec spec = spec_name == "identity" ? TaskSpec::identity_map(20, seed)
                                            : TaskSpec::defaults(seed);
    Corpus corpus = generate(spec, n, len_min, len_max);
    save_corpus(corpus, out);
    long syms = 0, toks = 0;
    for (const auto& p : corpus) {
        syms += p.x.size();
        toks += p.y.size();
    }
    std::printf("wrote %zu utterances to %s\n", corpus.size(), out.c_str());
    if (!corpus.empty())
        std::printf("mean_T=%.2f mean_U=%.2f mean_duration=%.3f\n",
                    double(syms) / corpus.size(), double(toks) / corpus.size(),
                    syms ? double(toks) / syms : 0.0);
    return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& config_path, int epochs,
              const std::string& out_dir, uint64_t seed, int threads, int ckpt_every) {
    Corpus corpus = load_corpus(corpus_path);
    FileConfig fc;
    if (!config_path.empty()) fc = parse_config_file(config_path);
    fc.model.seed = seed;
    if (threads > 0) fc.train.threads = threads;
    if (ckpt_every > 0) fc.checkpoint_every = ckpt_every;

    for (const auto& p : corpus) {
        for (int s : p.x)
            if (s >= fc.model.input_vocab)
                throw MismatchError("corpus does not fit input_vocab=" +
                                    std::to_string(fc.model.input_vocab));
        for (int tok : p.y)
            if (tok >= fc.model.output_vocab)
                throw MismatchError("corpus does not fit output_vocab=" +
                                    std::to_string(fc.model.output_vocab));
    }

    fs::create_directories(out_dir);
    ModelParams params = init_params(fc.model);
    AdamState opt = init_adam(fc.model);
    auto ckpt_path = [&](int64_t step) {
        return (fs::path(out_dir) / ("ckpt-" + std::to_string(step) + ".bin")).string();
    };
    save_checkpoint(ckpt_path(0), params, adam_to_extras(opt));

    int every = fc.checkpoint_every;
    StepCallback on_step = [&](const LossPoint& pt, const ModelParams& p, const AdamState& o) {
        if (every > 0 && pt.step % every == 0)
            save_checkpoint(ckpt_path(pt.step), p, adam_to_extras(o));
    };
    auto curve = train_loop(params, opt, corpus, epochs, fc.train, seed, on_step);
    if (opt.step > 0) save_checkpoint(ckpt_path(opt.step), params, adam_to_extras(opt));
    write_file((fs::path(out_dir) / "loss.csv").string(), curve_to_csv(curve));
    std::printf("trained %lld steps (%d epochs), final checkpoint %s\n",
                static_cast<long long>(opt.step), epochs, ckpt_path(opt.step).c_str());
    if (!curve.empty()) std::printf("final_mean_loss=%.6f\n", curve.back().mean_loss);
    return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& corpus_path,
               const std::string& mode, const std::string& window_text,
               const std::string& sampling_text, uint64_t seed, int max_steps,
               const std::string& out, int threads) {
    Corpus corpus = load_corpus(corpus_path);
    ModelParams params = load_params_checked(ckpt, corpus);
    DecodeOptions opts;
    opts.sampling = parse_sampling(sampling_text);
    opts.window = parse_window(window_text);
    opts.seed = seed;
    if (max_steps > 0) opts.max_steps_per_phoneme = max_steps;

    // pseudo transcription: one seeded pick reused for the whole corpus
    std::vector<int> pseudo_x;
    if (mode == "pseudo-prompt" && !corpus.empty()) {
        Rng rng(seed ^ 0xFACEull);
        pseudo_x = corpus[rng.uniform_int(0, static_cast<int>(corpus.size()) - 1)].x;
    }

    struct Row {
        std::vector<int> ref_x, hyp, durations, gt_durations;
        std::vector<int> ref_y;
        AlignmentPath path;
        bool budget_hit = false;
    };
    std::vector<Row> out_rows(corpus.size());
    parallel_for(static_cast<int>(corpus.size()), threads, [&](int i) {
        const auto& pair = corpus[i];
        Row row;
        std::vector<int> x_prompt, y_prompt, x_target = pair.x;
        row.ref_y = pair.y;
        row.gt_durations = pair.gt_durations;
        if (mode == "prompt" || mode == "pseudo-prompt") {
            int split = std::max(1, static_cast<int>(pair.x.size()) / 2);
            if (static_cast<int>(pair.x.size()) < 2)
                throw MismatchError("continuation modes need utterances with T >= 2");
            auto ex = split_for_continuation(pair, split);
            x_prompt = mode == "prompt" ? ex.x_prompt : pseudo_x;
            y_prompt = ex.y_prompt;
            x_target = ex.x_target;
            row.ref_y = ex.y_target;
            row.gt_durations = ex.target_durations;
        }
        row.ref_x = x_target;
        try {
            DecodeResult res =
                mode == "pseudo-prompt"
                    ? decode_with_pseudo_prompt(params, y_prompt, x_prompt, x_target, opts)
                    : decode(params, x_prompt, y_prompt, x_target, opts);
            row.hyp = std::move(res.y_out);
            row.durations = std::move(res.durations);
            row.path = std::move(res.path);
        } catch (const DecodeBudgetError& e) {
            row.hyp = e.partial().y_out;
            row.durations = e.partial().durations;
            row.path = e.partial().path;
            row.budget_hit = true;
        }
        out_rows[i] = std::move(row);
    });

    TerAccum ter;
    double dur_hits = 0;
    long long dur_total = 0;
    int budget_hits = 0;
    std::string records;
    for (const auto& row : out_rows) {
        ter.add(row.hyp, row.ref_y);
        for (size_t t = 0; t < row.durations.size(); ++t) {
            dur_hits += row.durations[t] == row.gt_durations[t];
            ++dur_total;
        }
        budget_hits += row.budget_hit;
        append_ids(records, row.ref_x);
        records += '\t';
        append_ids(records, row.hyp);
        records += '\t';
        append_ids(records, row.durations);
        records += '\t';
        records += path_string(row.path);
        records += '\n';
    }
    if (!out.empty()) write_file(out, records);
    std::printf("ter=%.6f duration_acc=%.6f n=%zu budget_errors=%d\n", ter.value(),
                dur_total ? dur_hits / dur_total : 1.0, corpus.size(), budget_hits);
    return 0;
}

int cmd_align(const std::string& ckpt, const std::string& corpus_path,
              const std::string& out_dir, int threads) {
    Corpus corpus = load_corpus(corpus_path);
    ModelParams params = load_params_checked(ckpt, corpus);
    fs::create_directories(out_dir);

    std::vector<double> acc(corpus.size());
    parallel_for(static_cast<int>(corpus.size()), threads, [&](int i) {
        const auto& pair = corpus[i];
        LogProbLattice lat = build_lattice(params, pair.x, pair.y);
        PosteriorMap m = posterior_map(lat, pair.y);
        AlignmentPath path = forced_align(lat, pair.y);
        char name[64];
        std::snprintf(name, sizeof name, "utt%05d", i);
        fs::path base = fs::path(out_dir) / name;
        write_file(base.string() + ".alpha.pgm", grid_to_pgm(m.log_alpha));
        write_file(base.string() + ".beta.pgm", grid_to_pgm(m.log_beta));
        write_file(base.string() + ".gamma.pgm", grid_to_pgm(m.log_gamma));
        write_file(base.string() + ".path.txt", path_to_text(path));
        acc[i] = boundary_accuracy(path.durations(static_cast<int>(pair.x.size())),
                                   pair.gt_durations);
    });
    double mean = corpus.empty() ? 1.0
                                 : std::accumulate(acc.begin(), acc.end(), 0.0) / acc.size();
    std::printf("boundary_acc=%.6f n=%zu out=%s\n", mean, corpus.size(), out_dir.c_str());
    return 0;
}

int cmd_sweep(const std::string& ckpt, const std::string& corpus_path,
              const std::string& n_list, int m, uint64_t seed, const std::string& out,
              int threads) {
    Corpus corpus = load_corpus(corpus_path);
    ModelParams params = load_params_checked(ckpt, corpus);
    std::vector<std::optional<int>> n_values;
    std::stringstream ss(n_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "unbounded")
            n_values.push_back(std::nullopt);
        else
            n_values.push_back(std::stoi(tok));
    }
    if (n_values.empty()) throw CLI::ValidationError("--n-list", "no values given");
    DecodeOptions opts;
    opts.seed = seed;
    auto rows = window_sweep(params, corpus, n_values, m, opts, threads);
    std::string csv = sweep_to_csv(rows);
    if (!out.empty()) write_file(out, csv);
    std::fputs(csv.c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"monotonic transducer toolkit"};
    app.require_subcommand(1);
    std::string workdir = ".";
    app.add_option("--workdir", workdir, "base directory for relative paths");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
    std::string gen_spec = "default", gen_out = "corpus.txt";
    int gen_n = 1000, gen_len_min = 8, gen_len_max = 24;
    uint64_t gen_seed = 1;
    gen->add_option("--spec", gen_spec, "task preset: default | identity");
    gen->add_option("--n", gen_n, "number of utterances");
    gen->add_option("--len-min", gen_len_min, "minimum input length");
    gen->add_option("--len-max", gen_len_max, "maximum input length");
    gen->add_option("--seed", gen_seed, "task seed");
    gen->add_option("--out", gen_out, "output corpus path")->required();

    // train
    auto* train = app.add_subcommand("train", "train a model on a corpus");
    std::string tr_corpus, tr_config, tr_out = "run";
    int tr_epochs = 10, tr_threads = 0, tr_every = 0;
    uint64_t tr_seed = 1;
    train->add_option("--corpus", tr_corpus)->required();
    train->add_option("--config", tr_config, "key=value config file");
    train->add_option("--epochs", tr_epochs);
    train->add_option("--out-dir", tr_out);
    train->add_option("--seed", tr_seed);
    train->add_option("--threads", tr_threads);
    train->add_option("--checkpoint-every", tr_every, "steps between checkpoints");

    // decode
    auto* dec = app.add_subcommand("decode", "decode a corpus and report TER");
    std::string de_ckpt, de_corpus, de_mode = "plain", de_window, de_sampling = "greedy",
                de_out;
    uint64_t de_seed = 1;
    int de_threads = 0, de_max_steps = 0;
    dec->add_option("--ckpt", de_ckpt)->required();
    dec->add_option("--corpus", de_corpus)->required();
    dec->add_option("--mode", de_mode)
        ->check(CLI::IsMember({"plain", "prompt", "pseudo-prompt"}));
    dec->add_option("--window", de_window, "history,future symbol counts, e.g. 50,15");
    dec->add_option("--sampling", de_sampling, "greedy | temp:<t> | topk:<k>");
    dec->add_option("--seed", de_seed);
    dec->add_option("--max-steps", de_max_steps, "emission budget per symbol");
    dec->add_option("--out", de_out, "line-delimited decode records");
    dec->add_option("--threads", de_threads);

    // align
    auto* al = app.add_subcommand("align", "posterior maps and forced alignment");
    std::string al_ckpt, al_corpus, al_out = "align";
    int al_threads = 0;
    al->add_option("--ckpt", al_ckpt)->required();
    al->add_option("--corpus", al_corpus)->required();
    al->add_option("--out-dir", al_out);
    al->add_option("--threads", al_threads);

    // sweep
    auto* sw = app.add_subcommand("sweep", "history-window TER curve");
    std::string sw_ckpt, sw_corpus, sw_nlist = "unbounded", sw_out;
    int sw_m = 15, sw_threads = 0;
    uint64_t sw_seed = 1;
    sw->add_option("--ckpt", sw_ckpt)->required();
    sw->add_option("--long-corpus", sw_corpus)->required();
    sw->add_option("--n-list", sw_nlist, "comma list of history sizes, 'unbounded' allowed");
    sw->add_option("--m", sw_m, "future context size");
    sw->add_option("--seed", sw_seed);
    sw->add_option("--out", sw_out, "CSV path");
    sw->add_option("--threads", sw_threads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::error_code ec;
        fs::current_path(workdir, ec);
        if (ec) throw std::runtime_error("cannot enter workdir: " + workdir);
        if (gen->parsed())
            return cmd_gen(gen_spec, gen_n, gen_len_min, gen_len_max, gen_seed, gen_out);
        if (train->parsed())
            return cmd_train(tr_corpus, tr_config, tr_epochs, tr_out, tr_seed, tr_threads,
                             tr_every);
        if (dec->parsed())
            return cmd_decode(de_ckpt, de_corpus, de_mode, de_window, de_sampling, de_seed,
                              de_max_steps, de_out, de_threads);
        if (al->parsed()) return cmd_align(al_ckpt, al_corpus, al_out, al_threads);
        if (sw->parsed())
            return cmd_sweep(sw_ckpt, sw_corpus, sw_nlist, sw_m, sw_seed, sw_out, sw_threads);
    } catch (const TrainingDiverged& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const MismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
