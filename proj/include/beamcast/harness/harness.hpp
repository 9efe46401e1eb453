#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beamcast/airsim/scene.hpp"
#include "beamcast/beamnet/model.hpp"
#include "beamcast/numcore/optim.hpp"
#include "beamcast/pipeline/preprocess.hpp"

namespace beamcast::harness {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double lr = 1e-4;
    std::vector<int> milestones{30, 60, 90};
    double decay_factor = 0.1;
    std::uint64_t seed = 0;
    int eval_every = 5;
    double train_fraction = 0.8;
    double grad_clip = 0.0; // 0 disables clipping
    pipeline::AugmentConfig augment;

    void validate() const;
    LrSchedule schedule() const { return {lr, milestones, decay_factor}; }

    bool operator==(const TrainConfig&) const = default;
};

/// Top-K accuracies for the requested K values plus the top-1 confusion matrix
/// (rows: true class, columns: predicted class).
struct EvalResult {
    std::vector<int> ks;
    std::vector<double> accuracy; // aligned with ks
    std::vector<std::vector<std::uint64_t>> confusion;
    std::uint64_t count = 0;

    /// Accuracy for K; throws IndexError if K was not evaluated.
    double top(int k) const;
};

struct EpochRecord {
    int epoch = 0; // 0-based
    double lr = 0.0;
    double train_loss = 0.0;
    std::optional<EvalResult> eval; // present on evaluation epochs
    double seconds = 0.0;
};

struct MetricsReport {
    std::vector<EpochRecord> epochs;
    EvalResult final_eval;
};

/// Scores every row of `logits` ([N, Q] row-major) against `labels`.
/// Ks above Q are clamped to Q. Throws EvaluationError on an empty set.
EvalResult evaluate_logits(std::span<const float> logits, std::span<const int> labels, int num_classes,
                           std::span<const int> ks);

/// K = 1, 3, 5.
std::span<const int> default_ks();

/// Eval-mode accuracy of `model` on `indices` of `data`.
EvalResult evaluate(beamnet::BeamNet<float>& model, const airsim::Dataset& data, std::span<const std::size_t> indices,
                    const pipeline::StructScaler& scaler, std::span<const int> ks = default_ks(), int batch_size = 64);

struct Batch {
    Tensor<float> images;   // [B,3,S,S], augmented then normalized
    Tensor<float> features; // [B,8], min-max scaled
    std::vector<int> labels;
};

/// Assembles a batch. In train mode each sample is augmented with a stream
/// derived from (seed, epoch, sample index), so batch composition does not
/// affect the augmentation a sample receives.
Batch make_batch(const airsim::Dataset& data, std::span<const std::size_t> indices,
                 const pipeline::StructScaler& scaler, bool train, const pipeline::AugmentConfig& augment,
                 std::uint64_t seed, int epoch);

/// Throws ConfigError naming num_beams or image_size when `data` cannot feed
/// a model built from `model`.
void check_compatible(const beamnet::ModelConfig& model, const airsim::Dataset& data);

/// Fixes the split and fits the scaler on the training part only.
struct PreparedData {
    pipeline::SplitIndices split;
    pipeline::StructScaler scaler;
};
PreparedData prepare(const airsim::Dataset& data, const TrainConfig& cfg);

/// Single training run. Everything random derives from `TrainConfig::seed`:
/// the split, the initial weights, per-epoch shuffling, augmentation and
/// dropout. Resuming from saved parameters, batchnorm statistics and optimizer
/// state therefore continues bit-identically.
class Trainer {
public:
    Trainer(const beamnet::ModelConfig& model_config, const TrainConfig& train_config, const airsim::Dataset& data);

    beamnet::BeamNet<float>& model() { return model_; }
    const beamnet::BeamNet<float>& model() const { return model_; }
    AdamState<float>& optimizer() { return adam_; }
    const AdamState<float>& optimizer() const { return adam_; }
    const PreparedData& prepared() const { return prepared_; }
    const TrainConfig& config() const { return config_; }

    int epochs_done() const { return epochs_done_; }
    void set_epochs_done(int epochs) { epochs_done_ = epochs; }

    /// Trains one epoch, evaluating on the test split when due.
    EpochRecord run_epoch();

    /// Runs the remaining epochs and a final evaluation. `on_epoch` is called
    /// after every epoch (checkpointing hook).
    MetricsReport run(const std::function<void(const Trainer&, const EpochRecord&)>& on_epoch = {});

    EvalResult evaluate_test() { return evaluate(model_, data_, prepared_.split.test, prepared_.scaler); }

private:
    bool eval_due(int epoch) const;

    TrainConfig config_;
    const airsim::Dataset& data_;
    PreparedData prepared_;
    beamnet::BeamNet<float> model_;
    AdamState<float> adam_;
    int epochs_done_ = 0;
};

/// Convenience wrapper: construct a Trainer and run it to completion.
MetricsReport train(const beamnet::ModelConfig& model_config, const TrainConfig& train_config,
                    const airsim::Dataset& data);

struct SweepArm {
    double lr = 0.0;
    std::optional<MetricsReport> report;
    std::string error; // set when the arm failed
    bool diverged = false;
};

struct SweepResult {
    std::vector<SweepArm> arms;
    std::vector<std::string> warnings;
};

/// One full run per distinct learning rate with everything else fixed.
/// Duplicates are dropped with a warning; a failing arm is recorded and the
/// remaining arms still run. `threads` > 1 runs arms concurrently; `on_epoch`
/// is then called from worker threads.
SweepResult lr_sweep(const beamnet::ModelConfig& model_config, const TrainConfig& base, const airsim::Dataset& data,
                     std::span<const double> lrs, unsigned threads = 1,
                     const std::function<void(const SweepArm&)>& on_arm = {},
                     const std::function<void(const Trainer&, const EpochRecord&)>& on_epoch = {});

/// The n most populous true classes of a confusion matrix, rows normalized to
/// percentages of the class count. Mass predicted outside the n classes is in
/// `excluded`.
struct ConfusionSummary {
    std::vector<int> classes; // descending true count, ties by lower index
    std::vector<std::uint64_t> counts;
    std::vector<std::vector<double>> percent;
    std::vector<double> excluded;
};
ConfusionSummary confusion_topn(const std::vector<std::vector<std::uint64_t>>& matrix, int n);

} // namespace beamcast::harness
