#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "motr/corpus.hpp"
#include "motr/model.hpp"

namespace motr {

// ─── Options ─────────────────────────────────────────────────────────────────

enum class SamplingKind { kGreedy, kTemperature, kTopK };

struct Sampling {
    SamplingKind kind = SamplingKind::kGreedy;
    double temperature = 1.0;
    int top_k = 1;
};

// Aligned context window: keep n symbols before the current one and m after
// it, plus the output tokens aligned to the kept history.
struct ContextWindow {
    int n = 0;
    int m = 0;
};

struct DecodeOptions {
    Sampling sampling;
    uint64_t seed = 0;  // consumed only by stochastic sampling
    std::optional<ContextWindow> window;
    int max_steps_per_phoneme = 32;

    void validate() const;
};

// ─── Session state ───────────────────────────────────────────────────────────

struct DecodeSession {
    std::vector<int> x_prompt, x_target;
    std::vector<int> y_prompt;
    std::vector<int> y_out;
    int t = 0;                          // current relative-position shift
    std::vector<int> emission_counts;   // per target symbol, the decoded alignment
    std::optional<ContextWindow> window;
};

// The model inputs for the current step: possibly windowed input/output views
// with absolute positions renumbered from 0 and relative 0 kept on symbol t.
struct SessionView {
    std::vector<int> x_view;
    std::vector<int> y_view;
    PositionPlan plan;
};

// Applies the aligned context window (or passes everything through when the
// session has none). While the window still reaches into the prompt the
// prompt is kept whole — its internal alignment is unknown — and once the
// history horizon moves past it the prompt drops out entirely. The current
// symbol's partial emissions are always retained.
SessionView apply_context_window(const DecodeSession& session);

// ─── Decoding ────────────────────────────────────────────────────────────────

struct DecodeResult {
    std::vector<int> y_out;
    AlignmentPath path;          // realized alignment over the target symbols
    std::vector<int> durations;  // per target symbol
};

// Thrown when one symbol emits more than max_steps_per_phoneme tokens; the
// output produced so far rides along.
class DecodeBudgetError : public std::runtime_error {
  public:
    DecodeBudgetError(const std::string& msg, DecodeResult partial)
        : std::runtime_error(msg), partial_(std::move(partial)) {}
    const DecodeResult& partial() const { return partial_; }

  private:
    DecodeResult partial_;
};

// Next-token distribution callback; lets tests drive the decoder with rigged
// models. Must return rows whose last row is the current distribution.
using RowFn = std::function<RowBlock(const std::vector<int>& x_view,
                                     const std::vector<int>& y_view,
                                     const PositionPlan& plan)>;

// Blank-triggered monotonic inference: sample from the last output row;
// a blank shifts relative position 0 to the next target symbol, anything
// else is appended and decoding stays on the current symbol. Ends after the
// blank of the last symbol.
DecodeResult decode(const ModelParams& params, const std::vector<int>& x_prompt,
                    const std::vector<int>& y_prompt, const std::vector<int>& x_target,
                    const DecodeOptions& opts);

// Same mechanics with an arbitrary transcription standing in for the prompt's
// unknown one. The pseudo transcription must be nonempty so the output prompt
// keeps an alignment pattern the absolute positions have seen in training.
DecodeResult decode_with_pseudo_prompt(const ModelParams& params,
                                       const std::vector<int>& y_prompt_untranscribed,
                                       const std::vector<int>& pseudo_x_prompt,
                                       const std::vector<int>& x_target,
                                       const DecodeOptions& opts);

// Decoder core over an arbitrary row callback.
DecodeResult decode_core(const RowFn& row_fn, int vbar, const std::vector<int>& x_prompt,
                         const std::vector<int>& y_prompt, const std::vector<int>& x_target,
                         const DecodeOptions& opts);

// ─── Metrics and sweeps ──────────────────────────────────────────────────────

// Levenshtein distance over token ids.
int edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// edit distance / reference length
double token_error_rate(const std::vector<int>& hyp, const std::vector<int>& ref);

// Corpus-level TER: summed edit distance over summed reference length.
struct TerAccum {
    long long edits = 0;
    long long ref_len = 0;
    void add(const std::vector<int>& hyp, const std::vector<int>& ref);
    double value() const { return ref_len ? double(edits) / double(ref_len) : 0.0; }
};

// Fraction of symbols whose decoded duration matches the ground truth.
double duration_match_rate(const std::vector<int>& pred, const std::vector<int>& gt);

// Fraction of emission boundaries (cumulative durations) within +-tol output
// steps of the ground truth.
double boundary_accuracy(const std::vector<int>& pred, const std::vector<int>& gt, int tol = 1);

struct SweepRow {
    std::optional<int> n;  // nullopt = unbounded
    double ter = 0.0;
};

// Greedy-decodes the corpus once per history size n (m fixed); a budget
// overrun counts the partial output instead of aborting the sweep.
std::vector<SweepRow> window_sweep(const ModelParams& params, const Corpus& corpus_long,
                                   const std::vector<std::optional<int>>& n_values,
                                   int m_fixed, const DecodeOptions& base_opts,
                                   int threads = 1);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace motr
