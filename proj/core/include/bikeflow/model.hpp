#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bikeflow/dense.hpp"
#include "bikeflow/lstm.hpp"
#include "bikeflow/mdn.hpp"
#include "bikeflow/mlp.hpp"
#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

namespace bikeflow {

enum class Architecture { lstm_mdn, lstm_regression, lstm_dense_regression, mlp_baseline };

std::string_view to_string(Architecture a) noexcept;
/// Accepts "lstm-mdn", "lstm-regression", "lstm-dense-regression", "mlp-baseline".
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
    Architecture architecture = Architecture::lstm_mdn;
    std::size_t hidden = 32;       // LSTM units per gate (k)
    std::size_t components = 6;    // mixture components (A)
    std::size_t dense_width = 6;   // intermediate dense layer (m)
    std::size_t features = 18;     // inputs per time step (D)
    std::size_t steps = 6;         // time steps per sequence (S)
    std::size_t mlp_width = kMlpDefaultWidth;
    double dropout = 0.2;

    /// Throws ConfigError on non-positive sizes or a dropout outside [0, 1).
    void validate() const;
    bool is_mixture() const noexcept { return architecture == Architecture::lstm_mdn; }
    bool uses_lstm() const noexcept { return architecture != Architecture::mlp_baseline; }
    /// k ∈ {32, 64}, A ∈ {6, 8}, S = 6.
    bool is_replication_config() const noexcept;
};

/// Number of trainable scalars implied by the configuration.
std::size_t param_count(const ModelConfig& cfg);

/// Parameters for any architecture; only the blocks used by the
/// configuration are allocated.
struct ModelWeights {
    LstmWeights lstm;
    MdnHeadWeights head;   // lstm-mdn
    DenseLayer dense;      // lstm-dense-regression: k -> m
    DenseLayer output;     // lstm-regression: k -> 1; lstm-dense-regression: m -> 1
    MlpWeights mlp;        // mlp-baseline

    static ModelWeights zeros(const ModelConfig& cfg);
    static ModelWeights initialized(const ModelConfig& cfg, RngStream& rng);

    /// Fixed-order list of every allocated block, named "<block>.<tensor>".
    std::vector<TensorView> tensors(const ModelConfig& cfg);
    std::size_t parameter_count(const ModelConfig& cfg) const;
};

/// Output of a model for one input sequence: a mixture for lstm-mdn, a point
/// estimate otherwise. Both on the standardized target scale.
struct Prediction {
    bool is_mixture = false;
    MixtureParams mixture;
    double value = 0.0;

    double mean() const { return is_mixture ? mixture_mean(mixture) : value; }
};

/// Inference-mode prediction for one S×D sequence.
Prediction predict(const ModelConfig& cfg, const ModelWeights& w, const Matrix& seq);

/// Per-sample dropout masks for one training example.
struct DropoutMasks {
    Vector lstm;
    std::array<Vector, kMlpHiddenLayers> mlp;
};

/// Draws the masks a training example uses, in a fixed order from `rng`.
DropoutMasks draw_masks(const ModelConfig& cfg, RngStream& rng);

/// Flattens an S×D sequence row by row.
Vector flatten(const Matrix& seq);

/// Batched loss and gradient evaluation. Loss is mean NLL for lstm-mdn and
/// mean squared error for the regression architectures.
class BatchEvaluator {
public:
    /// Returns the mean loss over the batch. When `grads` is non-null the
    /// gradient of the mean loss is added into it. `masks` is empty for
    /// inference mode or one entry per sample.
    double evaluate(const ModelConfig& cfg, const ModelWeights& w,
                    std::span<const Matrix* const> seqs, std::span<const double> targets,
                    std::span<const DropoutMasks> masks, ModelWeights* grads);

    /// Batched inference predictions.
    std::vector<Prediction> predict(const ModelConfig& cfg, const ModelWeights& w,
                                    std::span<const Matrix* const> seqs);

private:
    void forward(const ModelConfig& cfg, const ModelWeights& w,
                 std::span<const Matrix* const> seqs, std::span<const DropoutMasks> masks);

    LstmBatch lstm_;
    MlpBatch mlp_;
    Matrix dense_out_;
    Matrix outputs_;  // 3A × batch or 1 × batch
};

}  // namespace bikeflow
