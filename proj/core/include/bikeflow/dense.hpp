#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

namespace bikeflow {

/// Fully connected layer y = W x + b with W stored outputs × inputs.
struct DenseLayer {
    Matrix W;
    Vector b;

    static DenseLayer zeros(std::size_t inputs, std::size_t outputs);
    /// Uniform on [-1/sqrt(inputs), 1/sqrt(inputs)], zero bias.
    static DenseLayer initialized(std::size_t inputs, std::size_t outputs, RngStream& rng);

    std::size_t inputs() const noexcept { return W.cols(); }
    std::size_t outputs() const noexcept { return W.rows(); }
    std::size_t parameter_count() const noexcept { return W.size() + b.size(); }

    std::vector<TensorView> tensors(const std::string& prefix);

    Vector forward(std::span<const double> x) const;

    /// Z (outputs × batch) = W X + b for X inputs × batch.
    void forward_batch(const Matrix& x, Matrix& z) const;

    /// Accumulates dW, db into `grad` and writes dX (inputs × batch) if non-null.
    void backward_batch(const Matrix& x, const Matrix& dz, DenseLayer& grad, Matrix* dx) const;
};

double elu(double x) noexcept;
/// Derivative of ELU, taking 1 at the origin.
double elu_derivative(double x) noexcept;

}  // namespace bikeflow
