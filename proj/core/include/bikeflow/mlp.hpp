#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "bikeflow/dense.hpp"
#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

namespace bikeflow {

inline constexpr std::size_t kMlpHiddenLayers = 3;
inline constexpr std::size_t kMlpDefaultWidth = 258;

/// Feed-forward regression baseline: three ELU hidden layers with inverted
/// dropout after each, then a linear scalar output. Input is a flattened
/// (row-major) S×D sequence.
struct MlpWeights {
    std::array<DenseLayer, kMlpHiddenLayers> hidden;
    DenseLayer output;

    static MlpWeights zeros(std::size_t inputs, std::size_t width);
    static MlpWeights initialized(std::size_t inputs, std::size_t width, RngStream& rng);

    std::size_t inputs() const noexcept { return hidden[0].inputs(); }
    std::size_t width() const noexcept { return hidden[0].outputs(); }
    std::size_t parameter_count() const noexcept;
    std::vector<TensorView> tensors();
};

/// in·w + w + 2(w² + w) + w + 1
std::size_t param_count_mlp(std::size_t inputs, std::size_t width);

/// Dropout multipliers for all hidden layers of one sample, drawn layer by layer.
std::array<Vector, kMlpHiddenLayers> draw_mlp_masks(std::size_t width, double rate, RngStream& rng);

double mlp_forward(std::span<const double> x, const MlpWeights& w, double dropout, Mode mode,
                   RngStream& rng);

/// Batched forward/backward. Inputs are inputs × batch.
class MlpBatch {
public:
    /// `masks` empty (no dropout) or one mask set per sample.
    void forward(const MlpWeights& w, const Matrix& x,
                 std::span<const std::array<Vector, kMlpHiddenLayers>> masks);
    /// 1 × batch
    const Matrix& output() const noexcept { return out_; }
    /// Accumulates gradients for upstream dLoss/dOutput (1 × batch). Writes
    /// dLoss/dInput to `dx` when non-null.
    void backward(const MlpWeights& w, const Matrix& dout, MlpWeights& grads, Matrix* dx = nullptr);

private:
    Matrix x_;
    std::array<Matrix, kMlpHiddenLayers> pre_;   // pre-activations
    std::array<Matrix, kMlpHiddenLayers> act_;   // post activation and dropout
    std::array<Matrix, kMlpHiddenLayers> mask_;  // width × batch, empty if no dropout
    Matrix out_;
};

}  // namespace bikeflow
