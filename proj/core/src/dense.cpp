#include "bikeflow/dense.hpp"

#include <cmath>

#include "bikeflow/errors.hpp"

namespace bikeflow {

DenseLayer DenseLayer::zeros(std::size_t inputs, std::size_t outputs) {
    return {Matrix(outputs, inputs), Vector(outputs, 0.0)};
}

DenseLayer DenseLayer::initialized(std::size_t inputs, std::size_t outputs, RngStream& rng) {
    DenseLayer layer = zeros(inputs, outputs);
    const double bound = 1.0 / std::sqrt(static_cast<double>(inputs));
    for (double& w : layer.W.data()) w = rng.uniform(-bound, bound);
    return layer;
}

std::vector<TensorView> DenseLayer::tensors(const std::string& prefix) {
    return {{prefix + ".W", W.rows(), W.cols(), W.data()}, {prefix + ".b", 1, b.size(), b}};
}

Vector DenseLayer::forward(std::span<const double> x) const {
    Vector y = matvec(W, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
    return y;
}

void DenseLayer::forward_batch(const Matrix& x, Matrix& z) const {
    if (x.rows() != inputs()) {
        throw ShapeError("DenseLayer: input " + x.shape_string() + " for layer " +
                         W.shape_string());
    }
    const std::size_t nb = x.cols();
    z = Matrix(outputs(), nb);
    for (std::size_t r = 0; r < outputs(); ++r) {
        double* zr = z.row(r).data();
        for (std::size_t c = 0; c < nb; ++c) zr[c] = b[r];
    }
    gemm_acc(W, false, x, z);
}

void DenseLayer::backward_batch(const Matrix& x, const Matrix& dz, DenseLayer& grad,
                                Matrix* dx) const {
    const std::size_t nb = x.cols();
    if (dz.rows() != outputs() || dz.cols() != nb) {
        throw ShapeError("DenseLayer: upstream " + dz.shape_string() + " for layer " +
                         W.shape_string());
    }
    for (std::size_t r = 0; r < outputs(); ++r) {
        const double* dzr = dz.row(r).data();
        double s = 0.0;
        for (std::size_t c = 0; c < nb; ++c) s += dzr[c];
        grad.b[r] += s;
    }
    gemm_acc(dz, false, x.transpose(), grad.W);
    if (dx != nullptr) {
        *dx = Matrix(inputs(), nb);
        gemm_acc(W, true, dz, *dx);
    }
}

double elu(double x) noexcept { return x > 0.0 ? x : std::expm1(x); }

double elu_derivative(double x) noexcept { return x >= 0.0 ? 1.0 : std::exp(x); }

}  // namespace bikeflow
