#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bikeflow {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Every operation checks shapes; nothing
/// broadcasts.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    void fill(double v);
    Matrix transpose() const;
    std::string shape_string() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// y = A x
Vector matvec(const Matrix& a, std::span<const double> x);

/// y = Aᵀ x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

/// Softmax after subtracting max(v). Throws DomainError on empty input.
Vector stable_softmax(std::span<const double> v);

/// ln Σ exp(v_i), max-shifted. Throws DomainError on empty input.
double log_sum_exp(std::span<const double> v);

/// Log density of N(mu, var) at y, var being the variance.
double log_gaussian(double y, double mu, double var);

/// Standard normal CDF.
double normal_cdf(double z);

double sigmoid(double x) noexcept;

/// ln(n!) through lgamma.
double log_factorial(double n);

/// Solves the symmetric positive definite system A x = b via Cholesky.
/// Throws NumericalError when A is not numerically positive definite.
Vector cholesky_solve(const Matrix& a, std::span<const double> b);

/// Inverse of a symmetric positive definite matrix.
Matrix spd_inverse(const Matrix& a);

/// Lower-triangular Cholesky factor. Returns false if a pivot falls below
/// `rel_tol` times the largest diagonal entry.
bool cholesky(const Matrix& a, Matrix& lower, double rel_tol = 1e-12);

bool all_finite(std::span<const double> v) noexcept;

}  // namespace bikeflow

namespace bikeflow {

enum class Mode { train, infer };

/// Named, shaped view over a block of trainable scalars. Vectors are 1×n.
struct TensorView {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<double> values;
};

/// Dot product with four independent partial sums; the summation order is
/// fixed, so results are reproducible.
double dot(const double* a, const double* b, std::size_t n) noexcept;

/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;

/// C += op(A) B, where op(A) is A or Aᵀ. Each entry of C receives its sum
/// over the inner dimension in increasing order, so results do not depend on
/// the blocking.
void gemm_acc(const Matrix& a, bool transpose_a, const Matrix& b, Matrix& c);

}  // namespace bikeflow
