#include "motr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace motr {

TaskSpec TaskSpec::defaults(uint64_t seed) {
    TaskSpec s;
    s.seed = seed;
    return s;
}

TaskSpec TaskSpec::identity_map(int vocab, uint64_t seed) {
    TaskSpec s;
    s.input_vocab = vocab;
    s.output_vocab = vocab;
    s.identity = true;
    s.seed = seed;
    return s;
}

TaskLaw::TaskLaw(const TaskSpec& s) : spec(s) {
    const int vin = s.input_vocab;
    require(vin >= 2, "task: input vocabulary too small");
    field.resize(vin);
    base_dur.assign(vin, 1);
    pert.assign(vin + 1, 0);
    jitter.assign(vin + 1, std::vector<int>(vin, 0));
    if (s.identity) {
        require(s.output_vocab >= vin, "task: identity map needs output_vocab >= input_vocab");
        std::iota(field.begin(), field.end(), 0);  // unused as fields, kept for symmetry
        return;
    }
    const int n_fields = s.output_vocab / 6;
    require(n_fields >= 2, "task: contextual law needs output_vocab >= 12");
    Rng rng(s.seed);
    // balanced field assignment via a seeded shuffle
    std::vector<int> perm(vin);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = vin - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    for (int i = 0; i < vin; ++i) field[perm[i]] = i % n_fields;
    for (int i = 0; i < vin; ++i) base_dur[i] = rng.uniform_int(1, 4);
    for (auto& row : jitter)
        for (auto& j : row) j = rng.uniform_int(-1, 1);
    for (auto& p : pert) p = rng.uniform_int(0, 1);
}

int TaskLaw::duration(int s, int nxt) const {
    if (spec.identity) return 1;
    return std::max(1, base_dur[s] + jitter[nxt][s]);
}

std::vector<int> TaskLaw::emissions(int s, int nxt) const {
    if (spec.identity) return {s};
    int d = duration(s, nxt);
    std::vector<int> toks(d);
    toks[0] = field[s] * 6 + pert[nxt];
    for (int j = 1; j < d; ++j) toks[j] = field[s] * 6 + j + 1;
    return toks;
}

Corpus generate(const TaskSpec& spec, int n_utts, int len_lo, int len_hi) {
    require(n_utts >= 0, "generate: n_utts must be >= 0");
    require(len_lo >= 1 && len_hi >= len_lo, "generate: bad length range");
    TaskLaw law(spec);
    Rng rng(spec.seed ^ 0xC0FFEEull);
    Corpus out;
    out.reserve(n_utts);
    for (int i = 0; i < n_utts; ++i) {
        SequencePair pair;
        int T = rng.uniform_int(len_lo, len_hi);
        pair.x.resize(T);
        for (int t = 0; t < T; ++t) {
            int s = rng.uniform_int(0, spec.input_vocab - 1);
            if (!spec.identity && t > 0)
                while (law.field[s] == law.field[pair.x[t - 1]])
                    s = rng.uniform_int(0, spec.input_vocab - 1);
            pair.x[t] = s;
        }
        pair.gt_durations.resize(T);
        for (int t = 0; t < T; ++t) {
            int nxt = t + 1 < T ? pair.x[t + 1] : spec.input_vocab;
            auto toks = law.emissions(pair.x[t], nxt);
            pair.gt_durations[t] = static_cast<int>(toks.size());
            pair.y.insert(pair.y.end(), toks.begin(), toks.end());
        }
        out.push_back(std::move(pair));
    }
    return out;
}

Corpus make_long_concat(const Corpus& corpus, int k) {
    require(k >= 1, "make_long_concat: k must be >= 1");
    Corpus out;
    for (size_t i = 0; i + k <= corpus.size(); i += k) {
        SequencePair cat;
        for (int j = 0; j < k; ++j) {
            const auto& p = corpus[i + j];
            cat.x.insert(cat.x.end(), p.x.begin(), p.x.end());
            cat.y.insert(cat.y.end(), p.y.begin(), p.y.end());
            cat.gt_durations.insert(cat.gt_durations.end(), p.gt_durations.begin(),
                                    p.gt_durations.end());
        }
        out.push_back(std::move(cat));
    }
    return out;
}

namespace {

void append_ids(std::ostringstream& os, const std::vector<int>& ids) {
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) os << ' ';
        os << ids[i];
    }
}

std::vector<int> parse_ids(const std::string& fieldtext, int line_no) {
    std::vector<int> out;
    std::istringstream is(fieldtext);
    std::string tok;
    while (is >> tok) {
        try {
            size_t used = 0;
            int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": bad id '" + tok + "'");
        }
    }
    return out;
}

}  // namespace

std::string corpus_to_string(const Corpus& corpus) {
    std::ostringstream os;
    for (const auto& p : corpus) {
        append_ids(os, p.x);
        os << '\t';
        append_ids(os, p.y);
        os << '\t';
        append_ids(os, p.gt_durations);
        os << '\n';
    }
    return os.str();
}

Corpus corpus_from_string(const std::string& text) {
    Corpus out;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        size_t tab1 = line.find('\t');
        size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos)
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": expected three tab-separated fields");
        SequencePair p;
        p.x = parse_ids(line.substr(0, tab1), line_no);
        p.y = parse_ids(line.substr(tab1 + 1, tab2 - tab1 - 1), line_no);
        p.gt_durations = parse_ids(line.substr(tab2 + 1), line_no);

        auto fail = [&](const std::string& why) {
            throw std::runtime_error("corpus line " + std::to_string(line_no) + ": " + why);
        };
        if (p.x.empty()) fail("empty input sequence");
        if (p.gt_durations.size() != p.x.size())
            fail("durations count does not match input length");
        long long total = 0;
        for (int d : p.gt_durations) {
            if (d < 1) fail("duration below 1");
            total += d;
        }
        if (total != static_cast<long long>(p.y.size()))
            fail("durations do not sum to output length");
        for (int v : p.x)
            if (v < 0) fail("negative input id");
        for (int v : p.y)
            if (v < 0) fail("negative output id");
        out.push_back(std::move(p));
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    auto text = corpus_to_string(corpus);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open corpus: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return corpus_from_string(os.str());
}

ContinuationExample split_for_continuation(const SequencePair& pair, int prompt_len) {
    require(prompt_len >= 0 && prompt_len <= static_cast<int>(pair.x.size()),
            "split_for_continuation: prompt length out of range");
    ContinuationExample ex;
    ex.x_prompt.assign(pair.x.begin(), pair.x.begin() + prompt_len);
    ex.x_target.assign(pair.x.begin() + prompt_len, pair.x.end());
    int y_split = 0;
    for (int t = 0; t < prompt_len; ++t) y_split += pair.gt_durations[t];
    ex.y_prompt.assign(pair.y.begin(), pair.y.begin() + y_split);
    ex.y_target.assign(pair.y.begin() + y_split, pair.y.end());
    ex.target_durations.assign(pair.gt_durations.begin() + prompt_len,
                               pair.gt_durations.end());
    return ex;
}

}  // namespace motr
