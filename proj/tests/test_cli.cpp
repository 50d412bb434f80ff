#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "motr/decoder.hpp"
#include "motr/trainer.hpp"
#include "support.hpp"

using namespace motr;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    auto log = fs::temp_directory_path() / ("motr_cli_out_" + std::to_string(counter++));
    std::string cmd = std::string(MOTR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = WEXITSTATUS(status);
    std::ifstream f(log);
    r.out.assign((std::istreambuf_iterator<char>(f)), {});
    fs::remove(log);
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
}

fs::path fresh_dir(const char* name) {
    auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Identity utterances without adjacent repeats: on those the copy rule is a
// pure function of (current symbol, last output token), so a small trained
// model can reach exact decoding.
Corpus distinct_identity_corpus(uint64_t seed, int n, int len_lo, int len_hi, int vocab) {
    Rng rng(seed);
    Corpus out;
    for (int i = 0; i < n; ++i) {
        SequencePair p;
        int T = rng.uniform_int(len_lo, len_hi);
        for (int t = 0; t < T; ++t) {
            int s = rng.uniform_int(0, vocab - 1);
            while (t > 0 && s == p.x[t - 1]) s = rng.uniform_int(0, vocab - 1);
            p.x.push_back(s);
        }
        p.y = p.x;
        p.gt_durations.assign(T, 1);
        out.push_back(std::move(p));
    }
    return out;
}

// Shared fixture: a small model trained to copy, saved as a checkpoint.
struct CopyFixture {
    fs::path dir;
    std::string ckpt;
    std::string eval_corpus;
};

const CopyFixture& copy_fixture() {
    static CopyFixture fx = [] {
        CopyFixture f;
        f.dir = fresh_dir("motr_cli_fixture");
        ModelConfig c;
        c.n_layers = 2;
        c.n_heads = 2;
        c.d_model = 32;
        c.d_ff = 64;
        c.input_vocab = 8;
        c.output_vocab = 8;
        c.max_len = 64;
        c.seed = 21;
        auto params = init_params(c);
        auto opt = init_adam(c);
        TrainOptions topts;
        topts.batch_size = 8;
        topts.threads = 2;
        auto train = distinct_identity_corpus(100, 300, 2, 6, 8);
        train_loop(params, opt, train, 25, topts, 100);
        f.ckpt = (f.dir / "copy.bin").string();
        save_checkpoint(f.ckpt, params);
        auto eval = distinct_identity_corpus(200, 25, 2, 6, 8);
        f.eval_corpus = (f.dir / "eval.txt").string();
        save_corpus(eval, f.eval_corpus);
        return f;
    }();
    return fx;
}

}  // namespace

TEST_CASE("gen writes valid, reproducible corpora") {
    auto dir = fresh_dir("motr_cli_gen");
    SUBCASE("empty corpus") {
        auto r = run_cli("gen --n 0 --out " + (dir / "empty.txt").string());
        CHECK(r.code == 0);
        CHECK(load_corpus((dir / "empty.txt").string()).empty());
    }
    SUBCASE("same flags give identical files") {
        auto a = (dir / "a.txt").string(), b = (dir / "b.txt").string();
        CHECK(run_cli("gen --n 50 --seed 7 --out " + a).code == 0);
        CHECK(run_cli("gen --n 50 --seed 7 --out " + b).code == 0);
        CHECK(read_file(a) == read_file(b));
        auto c = (dir / "c.txt").string();
        CHECK(run_cli("gen --n 50 --seed 8 --out " + c).code == 0);
        CHECK(read_file(a) != read_file(c));
    }
    SUBCASE("identity preset") {
        auto p = (dir / "id.txt").string();
        auto r = run_cli("gen --spec identity --n 10 --len-min 3 --len-max 5 --out " + p);
        CHECK(r.code == 0);
        for (const auto& pair : load_corpus(p)) CHECK(pair.x == pair.y);
    }
}

TEST_CASE("train writes checkpoints and a loss curve") {
    auto dir = fresh_dir("motr_cli_train");
    auto corpus = (dir / "c.txt").string();
    REQUIRE(run_cli("gen --spec identity --n 16 --len-min 2 --len-max 4 --seed 3 --out " +
                    corpus).code == 0);
    std::ofstream cfg(dir / "model.cfg");
    cfg << "n_layers=1\nn_heads=2\nd_model=16\nd_ff=32\n"
        << "input_vocab=20\noutput_vocab=20\nmax_len=64\nbatch_size=8\n";
    cfg.close();

    SUBCASE("epochs=0 leaves only the init checkpoint") {
        auto out = (dir / "run0").string();
        auto r = run_cli("train --corpus " + corpus + " --config " + (dir / "model.cfg").string() +
                         " --epochs 0 --out-dir " + out);
        CHECK(r.code == 0);
        CHECK(fs::exists(fs::path(out) / "ckpt-0.bin"));
        CHECK(read_file(fs::path(out) / "loss.csv") == "step,epoch,mean_loss\n");
        int ckpts = 0;
        for (auto& e : fs::directory_iterator(out))
            ckpts += e.path().extension() == ".bin";
        CHECK(ckpts == 1);
    }
    SUBCASE("loss.csv rows equal executed steps") {
        auto out = (dir / "run1").string();
        auto r = run_cli("train --corpus " + corpus + " --config " + (dir / "model.cfg").string() +
                         " --epochs 2 --out-dir " + out);
        CHECK(r.code == 0);
        auto csv = read_file(fs::path(out) / "loss.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4);  // header + 2 steps x 2 epochs
        CHECK(fs::exists(fs::path(out) / "ckpt-4.bin"));
    }
}

TEST_CASE("decode on the trained copy model") {
    const auto& fx = copy_fixture();
    SUBCASE("plain greedy decoding copies exactly") {
        auto out = (fx.dir / "dec.txt").string();
        auto r = run_cli("decode --ckpt " + fx.ckpt + " --corpus " + fx.eval_corpus +
                         " --out " + out);
        CHECK(r.code == 0);
        CHECK(r.out.find("ter=0.000000") != std::string::npos);
        CHECK(r.out.find("duration_acc=1.000000") != std::string::npos);
        // records: one line per utterance, four tab fields, B/E path letters
        auto records = read_file(out);
        CHECK(std::count(records.begin(), records.end(), '\n') == 25);
        auto first = records.substr(0, records.find('\n'));
        CHECK(std::count(first.begin(), first.end(), '\t') == 3);
        auto path_part = first.substr(first.rfind('\t') + 1);
        for (char ch : path_part) CHECK((ch == 'B' || ch == 'E'));
    }
    SUBCASE("degenerate window runs and terminates") {
        auto r = run_cli("decode --ckpt " + fx.ckpt + " --corpus " + fx.eval_corpus +
                         " --window 0,0");
        CHECK(r.code == 0);
        CHECK(r.out.find("ter=") != std::string::npos);
    }
    SUBCASE("prompt and pseudo-prompt modes run") {
        auto r1 = run_cli("decode --ckpt " + fx.ckpt + " --corpus " + fx.eval_corpus +
                          " --mode prompt");
        CHECK(r1.code == 0);
        auto r2 = run_cli("decode --ckpt " + fx.ckpt + " --corpus " + fx.eval_corpus +
                          " --mode pseudo-prompt --seed 5");
        CHECK(r2.code == 0);
    }
}

TEST_CASE("align exports maps and reports boundary accuracy") {
    const auto& fx = copy_fixture();
    auto out = (fx.dir / "align").string();
    auto r = run_cli("align --ckpt " + fx.ckpt + " --corpus " + fx.eval_corpus +
                     " --out-dir " + out);
    CHECK(r.code == 0);
    auto pos = r.out.find("boundary_acc=");
    REQUIRE(pos != std::string::npos);
    double acc = std::stod(r.out.substr(pos + 13));
    CHECK(acc >= 0.95);

    // PGM dims are (U+1) wide and T tall
    auto eval = load_corpus(fx.eval_corpus);
    auto pgm = read_file(fs::path(out) / "utt00000.gamma.pgm");
    std::string want_header = "P5\n" + std::to_string(eval[0].y.size() + 1) + " " +
                              std::to_string(eval[0].x.size()) + "\n255\n";
    CHECK(pgm.substr(0, want_header.size()) == want_header);
    CHECK(fs::exists(fs::path(out) / "utt00000.alpha.pgm"));
    CHECK(fs::exists(fs::path(out) / "utt00000.beta.pgm"));
    auto path_text = read_file(fs::path(out) / "utt00000.path.txt");
    CHECK(path_text.substr(0, 4) == "0,0\n");
}

TEST_CASE("sweep emits a deterministic CSV") {
    const auto& fx = copy_fixture();
    SUBCASE("single n gives one data row") {
        auto out = (fx.dir / "sweep1.csv").string();
        auto r = run_cli("sweep --ckpt " + fx.ckpt + " --long-corpus " + fx.eval_corpus +
                         " --n-list 2 --m 1 --out " + out);
        CHECK(r.code == 0);
        auto csv = read_file(out);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
        CHECK(csv.substr(0, 6) == "n,ter\n");
    }
    SUBCASE("includes the unbounded sentinel and reproduces bit-exactly") {
        auto a = (fx.dir / "sweep_a.csv").string(), b = (fx.dir / "sweep_b.csv").string();
        std::string args = " --ckpt " + fx.ckpt + " --long-corpus " + fx.eval_corpus +
                           " --n-list 0,2,unbounded --m 1 --seed 9 --out ";
        CHECK(run_cli("sweep" + args + a).code == 0);
        CHECK(run_cli("sweep" + args + b).code == 0);
        auto csv = read_file(a);
        CHECK(csv.find("unbounded,") != std::string::npos);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
        CHECK(csv == read_file(b));
    }
}

TEST_CASE("exit codes") {
    auto dir = fresh_dir("motr_cli_codes");
    SUBCASE("usage errors exit 2") {
        CHECK(run_cli("gen --no-such-flag 1 --out x.txt").code == 2);
        CHECK(run_cli("decode").code == 2);  // missing required options
        CHECK(run_cli("").code == 2);        // missing subcommand
    }
    SUBCASE("missing input file exits 1") {
        CHECK(run_cli("train --corpus " + (dir / "absent.txt").string() +
                      " --epochs 1 --out-dir " + (dir / "r").string()).code == 1);
    }
    SUBCASE("corpus that does not fit the checkpoint exits 4") {
        const auto& fx = copy_fixture();
        auto big = (dir / "big.txt").string();
        save_corpus({SequencePair{{1, 2}, {19, 19}, {1, 1}, 0}}, big);  // token 19 > vocab 8
        CHECK(run_cli("decode --ckpt " + fx.ckpt + " --corpus " + big).code == 4);
    }
    SUBCASE("corrupt checkpoint exits 4") {
        const auto& fx = copy_fixture();
        auto bad = (dir / "bad.bin").string();
        auto bytes = read_file(fx.ckpt);
        bytes[0] = 'X';
        write_file(bad, bytes);
        CHECK(run_cli("decode --ckpt " + bad + " --corpus " + fx.eval_corpus).code == 4);
    }
    SUBCASE("diverging training exits 3") {
        auto corpus = (dir / "c.txt").string();
        REQUIRE(run_cli("gen --spec identity --n 16 --len-min 2 --len-max 3 --seed 1 --out " +
                        corpus).code == 0);
        std::ofstream cfg(dir / "hot.cfg");
        cfg << "n_layers=1\nn_heads=2\nd_model=16\nd_ff=32\ninput_vocab=20\n"
            << "output_vocab=20\nmax_len=64\nbatch_size=8\nlr=1e300\nwarmup_steps=0\n"
            << "clip_norm=0\n";
        cfg.close();
        auto r = run_cli("train --corpus " + corpus + " --config " + (dir / "hot.cfg").string() +
                         " --epochs 1 --out-dir " + (dir / "boom").string());
        CHECK(r.code == 3);
    }
}
