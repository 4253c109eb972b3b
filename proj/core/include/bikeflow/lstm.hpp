#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

namespace bikeflow {

/// Parameters of a single LSTM cell with `hidden` units per gate over
/// `inputs` features per time step. Gate order everywhere is f, i, o, C.
struct LstmWeights {
    std::size_t hidden = 0;
    std::size_t inputs = 0;

    Matrix W_fx, W_ix, W_ox, W_Cx;  // hidden × inputs
    Matrix W_fh, W_ih, W_oh, W_Ch;  // hidden × hidden
    Vector b_f, b_i, b_o, b_C;      // hidden

    static LstmWeights zeros(std::size_t hidden, std::size_t inputs);

    /// Uniform on [-1/sqrt(hidden), 1/sqrt(hidden)] for every matrix, zero biases.
    static LstmWeights initialized(std::size_t hidden, std::size_t inputs, RngStream& rng);

    /// Throws ShapeError if any block disagrees with (hidden, inputs).
    void validate() const;

    std::vector<TensorView> tensors();
    std::size_t parameter_count() const;
};

/// Gradients mirror the weight layout exactly.
using LstmGradients = LstmWeights;

struct LstmState {
    Vector h;
    Vector c;

    static LstmState zeros(std::size_t hidden) { return {Vector(hidden, 0.0), Vector(hidden, 0.0)}; }
};

/// One cell update.
LstmState lstm_step(std::span<const double> x, const LstmState& prev, const LstmWeights& w);

/// Activations cached by lstm_forward for backpropagation through time.
struct LstmTape {
    struct Step {
        Vector x;
        Vector h_in;  // recurrent input after dropout
        Vector c_prev;
        Vector f, i, o, g;
        Vector c, tanh_c;
    };
    std::vector<Step> steps;
    Vector mask;  // per-unit multiplier applied to h_{t-1}; empty when no dropout
};

struct LstmForwardResult {
    LstmState final;
    LstmTape tape;
};

/// Runs the sequence (S×D, one row per time step) from a zero state. In train
/// mode with dropout > 0 a per-sequence inverted-dropout mask is drawn from
/// `rng` (hidden uniforms) and applied to h_{t-1} at every step.
LstmForwardResult lstm_forward(const Matrix& seq, const LstmWeights& w, double dropout, Mode mode,
                               RngStream& rng);

/// Same, with an explicit recurrent mask (empty means none).
LstmForwardResult lstm_forward_masked(const Matrix& seq, const LstmWeights& w,
                                      std::span<const double> mask);

/// Draws the inverted-dropout multipliers for one sequence: 0 or 1/(1-rate).
Vector draw_dropout_mask(std::size_t n, double rate, RngStream& rng);

struct LstmBackwardResult {
    LstmGradients grads;
    Matrix input_grad;  // S×D
};

/// Exact gradients given dLoss/dh_final.
LstmBackwardResult lstm_backward(const LstmTape& tape, const LstmWeights& w,
                                 std::span<const double> dh_final);

/// 4·k·(D + k + 1)
std::size_t param_count_lstm(std::size_t hidden, std::size_t inputs);

/// Batched forward/backward used by the trainer. States are laid out
/// hidden × batch so inner loops run over the batch. Results agree with the
/// per-sequence functions.
class LstmBatch {
public:
    /// `masks` is either empty or has one entry per sequence (each empty or of
    /// length hidden).
    void forward(const LstmWeights& w, std::span<const Matrix* const> seqs,
                 std::span<const Vector> masks);

    /// hidden × batch
    const Matrix& final_hidden() const noexcept { return h_.back(); }

    /// Accumulates (adds) weight gradients for upstream dLoss/dh_final (hidden × batch).
    void backward(const LstmWeights& w, const Matrix& dh_final, LstmGradients& grads);

private:
    std::size_t batch_ = 0;
    std::size_t steps_ = 0;
    std::size_t hidden_ = 0;
    Matrix wx_, wh_;  // packed 4k×D and 4k×k
    Vector bias_;
    Matrix mask_;     // hidden × batch multipliers
    bool has_mask_ = false;
    std::vector<Matrix> x_;      // D × batch per step
    std::vector<Matrix> h_in_;   // masked recurrent input per step
    std::vector<Matrix> gates_;  // 4k × batch post-activation per step
    std::vector<Matrix> c_;      // c_[t+1] is the cell state after step t; c_[0] = 0
    std::vector<Matrix> tanh_c_;
    std::vector<Matrix> h_;      // h_[t] is the output of step t
};

}  // namespace bikeflow
