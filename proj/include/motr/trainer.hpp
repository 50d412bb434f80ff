#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "motr/corpus.hpp"
#include "motr/model.hpp"

namespace motr {

struct TrainOptions {
    int batch_size = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    int warmup_steps = 100;   // linear warmup, constant lr afterwards
    double clip_norm = 5.0;   // global norm of the summed batch gradient
    int threads = 0;          // 0 = hardware concurrency
};

// Adam moments live in float32 like the parameters, so a checkpointed
// optimizer resumes onto exactly the in-memory state it was saved from.
struct AdamState {
    int64_t step = 0;  // completed optimizer steps
    ModelParams m, v;
};

AdamState init_adam(const ModelConfig& config);

// Optimizer state rides in checkpoints as extra tensors ("opt." prefix).
std::vector<ExtraTensor> adam_to_extras(const AdamState& opt);
AdamState adam_from_extras(const ModelConfig& config, const std::vector<ExtraTensor>& extras);

struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One optimizer step on a batch: per-example lattice + loss + backward pass
// (examples fan out over threads), gradients summed in example order, global
// norm clip, Adam update. Returns the mean per-example loss. Throws
// TrainingDiverged on a non-finite loss.
double train_step(ModelParams& params, std::span<const SequencePair> batch,
                  AdamState& opt, const TrainOptions& opts);

struct LossPoint {
    int64_t step = 0;  // 1-based optimizer step
    int epoch = 0;     // 0-based
    double mean_loss = 0.0;
};

using StepCallback =
    std::function<void(const LossPoint&, const ModelParams&, const AdamState&)>;

// Seeded-shuffle epochs over the corpus until `epochs` epochs have completed.
// Resumes from opt.step: earlier batches of the schedule are skipped, which
// together with the per-epoch seeding makes save -> load -> train reproduce
// the uninterrupted trajectory bit for bit. Returns the loss curve of the
// steps it ran.
std::vector<LossPoint> train_loop(ModelParams& params, AdamState& opt,
                                  const Corpus& corpus, int epochs,
                                  const TrainOptions& opts, uint64_t shuffle_seed,
                                  const StepCallback& on_step = nullptr);

// "step,epoch,mean_loss" with a header line.
std::string curve_to_csv(const std::vector<LossPoint>& curve);

}  // namespace motr
