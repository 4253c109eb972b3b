#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bikeflow/data.hpp"
#include "bikeflow/model.hpp"

namespace bikeflow {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 512;
    int max_epochs = 1000;
    int patience = 100;
    /// Validation loss must drop by more than this to count as an improvement.
    double min_improvement = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded uniform permutation cut 70/10/20; the rounding remainder goes to
/// the test split. Requires n >= 10.
SplitIndices split_dataset(std::size_t n, std::uint64_t seed);

/// One Adam update of `w` in place. `t` is the 1-based step index.
void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long t, const TrainConfig& cfg);

/// First and second moment buffers for every tensor of a model.
struct AdamState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    long step = 0;
};

/// Applies one Adam step to every tensor. `weights` and `grads` must list
/// tensors of identical shapes in the same order.
void adam_step(std::span<TensorView> weights, std::span<const TensorView> grads, AdamState& state,
               long t, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainedModel {
    ModelConfig config;
    ModelWeights weights;
    StandardizationStats stats;
    std::vector<EpochRecord> history;
    std::uint64_t seed = 0;
    int best_epoch = 0;
    /// Mean squared residual of the mean prediction on the validation split
    /// (standardized scale).
    double residual_variance = 1.0;

    Prediction predict(const Matrix& standardized_seq) const {
        return bikeflow::predict(config, weights, standardized_seq);
    }
    int epochs_run() const noexcept { return history.empty() ? 0 : history.back().epoch; }
};

struct TrainHooks {
    /// Replaces the computed validation loss of an epoch (test seam for the
    /// stopping rule).
    std::function<double(int epoch, double computed)> validation_override;
    /// Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Minimizes the architecture's loss with Adam, checks the validation loss
/// once per epoch, and stops after `patience` epochs without improvement or
/// at `max_epochs`. Returns the best-validation weights. Samples must already
/// be standardized. Throws TrainingError on a non-finite loss.
TrainedModel train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                   std::span<const SequenceSample> train_samples,
                   std::span<const SequenceSample> validation_samples,
                   const StandardizationStats& stats, const TrainHooks& hooks = {});

/// Mean loss of the architecture over the samples, inference mode.
double dataset_loss(const ModelConfig& cfg, const ModelWeights& w,
                    std::span<const SequenceSample> samples, std::size_t batch_size = 512);

inline constexpr int kModelFormatVersion = 1;

/// Versioned text format; values printed with 17 significant digits so that
/// a load/save cycle is bit-exact.
std::string serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(const std::string& text);
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

/// epoch,train_loss,val_loss
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace bikeflow
