#pragma once

#include <optional>
#include <string>
#include <vector>

#include "motr/common.hpp"

namespace motr {

// One utterance: input symbols x, output tokens y, and the ground-truth
// number of tokens each symbol produced. The alignment is known by
// construction, which is what makes forced-alignment accuracy measurable.
struct SequencePair {
    std::vector<int> x;
    std::vector<int> y;
    std::vector<int> gt_durations;  // size |x|, each >= 1, sums to |y|
    int prompt_len = 0;             // symbols used as prompt in continuation setups

    bool operator==(const SequencePair&) const = default;
};

using Corpus = std::vector<SequencePair>;

// Synthetic monotonic task. Every quantity below is a deterministic function
// of the seed, and — deliberately — of the local input context only:
//
//   duration(s, nxt) = clamp>=1( base_dur[s] + jitter[nxt][s] )
//   token(s, nxt, j) = field[s] * 6 + (j == 0 ? pert[nxt] : j + 1)
//
// where s is the symbol, nxt its right neighbour (or the end sentinel) and
// j the emission index. base_dur is in {1..4}, jitter in {-1,0,+1}, so
// durations land in {1..5} and the six slots per field suffice. Keying the
// jitter and perturbation on the neighbouring symbol keeps the mapping
// deterministic given x, so a trained model can in principle reach zero
// error, while still being unsolvable without attending to input context.
// Adjacent symbols are drawn from different fields, which makes the field of
// an output token identify which phoneme produced it.
struct TaskSpec {
    int input_vocab = 20;
    int output_vocab = 24;
    bool identity = false;  // identity token map, all durations 1
    uint64_t seed = 1;

    static TaskSpec defaults(uint64_t seed = 1);
    // y is a verbatim copy of x and every duration is 1.
    static TaskSpec identity_map(int vocab = 20, uint64_t seed = 1);
};

// Realized law tables for a TaskSpec; shared by the generator and by tests
// that want to compute expectations analytically.
struct TaskLaw {
    TaskSpec spec;
    std::vector<int> field;     // per symbol, in [0, output_vocab/6)
    std::vector<int> base_dur;  // per symbol, in {1..4}
    std::vector<std::vector<int>> jitter;  // [nxt (input_vocab = end)][s], {-1,0,+1}
    std::vector<int> pert;      // [nxt], {0, 1}

    explicit TaskLaw(const TaskSpec& spec);

    int duration(int s, int nxt) const;               // nxt == input_vocab at the end
    std::vector<int> emissions(int s, int nxt) const;
};

Corpus generate(const TaskSpec& spec, int n_utts, int len_lo, int len_hi);

// Concatenates consecutive groups of k pairs end-to-end (inputs, outputs and
// durations); leftover pairs that do not fill a group are dropped.
Corpus make_long_concat(const Corpus& corpus, int k);

// Line-delimited text: "x ids<TAB>y ids<TAB>durations", ids space-separated.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

std::string corpus_to_string(const Corpus& corpus);
Corpus corpus_from_string(const std::string& text);

// Splits symbols [0, prompt_len) and their tokens off as a prompt.
struct ContinuationExample {
    std::vector<int> x_prompt, y_prompt, x_target, y_target;
    std::vector<int> target_durations;
};
ContinuationExample split_for_continuation(const SequencePair& pair, int prompt_len);

}  // namespace motr
