#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "medkan/arch.hpp"
#include "medkan/checkpoint.hpp"
#include "medkan/data.hpp"

namespace medkan {

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 64;
    int max_epochs = 150;
    int patience = 20; // epochs without val-accuracy improvement before stopping
    std::uint64_t seed = 0;
    std::string dtype = "f32";
    // harness-only knobs (not part of the JSON config surface): stop as soon
    // as the given accuracy is reached; negative disables
    double stop_at_train_acc = -1.0;
    double stop_at_val_acc = -1.0;

    void validate() const;
};

/// Adam first/second moments aligned with a parameter list, plus step count.
template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::int64_t step = 0;

    void init(const NamedParams<T>& params);
    bool initialized() const { return !m.empty(); }
};

/// Classic Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8);
/// weight decay enters as an L2 term added to the gradient. Parameters with
/// no gradient buffer are treated as zero-gradient.
template <class T>
void adam_step(NamedParams<T>& params, AdamState<T>& state, const TrainConfig& cfg);

// --- metrics -----------------------------------------------------------------

/// Argmax accuracy; ties resolve to the lowest class index.
template <class T>
double accuracy(const Tensor<T>& logits, const std::vector<std::int64_t>& labels);

/// Macro one-vs-rest AUC via the rank statistic (ties share ranks). Classes
/// with no positives or no negatives are skipped; if nothing is computable
/// the AUC is undefined and a DataError is thrown.
template <class T>
double auc_macro_ovr(const Tensor<T>& scores, const std::vector<std::int64_t>& labels);

struct EvalReport {
    double acc = 0, auc = 0, loss = 0;
    std::vector<std::int64_t> per_class_correct, per_class_total;
    std::size_t n = 0;
};

template <class T>
EvalReport evaluate(const MedKan<T>& model, const DatasetSplit& split, int batch_size,
                    Tensor<float>* logits_out = nullptr);

// --- training loop ----------------------------------------------------------------

struct EpochRow {
    int epoch;
    double train_loss, val_loss, val_acc, val_auc, seconds;
};

struct TrainResult {
    std::vector<EpochRow> history;
    int best_epoch = 0;
    double best_val_acc = 0, best_val_auc = 0;
    bool stopped_early = false;
    std::int64_t adam_steps = 0;
};

/// Optimizer/loop state surfaced for checkpointing alongside the result.
template <class T>
struct TrainHandles {
    std::vector<std::vector<T>> final_weights; // weights at the last epoch run
    AdamState<T> adam;
    std::string rng_state; // serialized shuffle engine
    int epochs_since_best = 0;
};

/// Shuffled mini-batch training with cross-entropy + Adam. Monitors
/// validation accuracy, stops after `patience` epochs without improvement and
/// restores the best weights into the model before returning.
template <class T>
TrainResult train_loop(MedKan<T>& model, const Dataset& data, const TrainConfig& cfg,
                       const std::function<void(const EpochRow&)>& on_epoch = {},
                       TrainHandles<T>* handles = nullptr);

/// Batch assembly used by both the trainer and the evaluator: slices rows
/// out of a split, converts to T and applies the [-1,1] normalization.
template <class T>
Tensor<T> assemble_batch(const DatasetSplit& split, const std::vector<std::size_t>& rows);

} // namespace medkan
