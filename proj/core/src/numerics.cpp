#include "bikeflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include "bikeflow/errors.hpp"

namespace bikeflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto orow = out.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            auto brow = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError("matvec: matrix " + a.shape_string() + " vs vector of length " +
                         std::to_string(x.size()));
    }
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * x[j];
        y[i] = s;
    }
    return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError("matvec_transposed: matrix " + a.shape_string() +
                         " vs vector of length " + std::to_string(x.size()));
    }
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        const double xi = x[i];
        for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * xi;
    }
    return y;
}

Vector stable_softmax(std::span<const double> v) {
    if (v.empty()) throw DomainError("stable_softmax: empty vector");
    const double mx = *std::max_element(v.begin(), v.end());
    Vector out(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw DomainError("log_sum_exp: empty vector");
    const double mx = *std::max_element(v.begin(), v.end());
    if (std::isinf(mx)) return mx;
    double total = 0.0;
    for (double x : v) total += std::exp(x - mx);
    return mx + std::log(total);
}

double log_gaussian(double y, double mu, double var) {
    if (!(var > 0.0)) {
        throw DomainError("log_gaussian: variance must be positive, got " + std::to_string(var));
    }
    const double r = y - mu;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - r * r / (2.0 * var);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_factorial(double n) { return std::lgamma(n + 1.0); }

bool cholesky(const Matrix& a, Matrix& lower, double rel_tol) {
    if (a.rows() != a.cols()) throw ShapeError("cholesky: matrix " + a.shape_string() + " not square");
    const std::size_t n = a.rows();
    lower = Matrix(n, n);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double floor = rel_tol * (max_diag > 0.0 ? max_diag : 1.0);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t p = 0; p < j; ++p) d -= lower(j, p) * lower(j, p);
        if (!(d > floor)) return false;
        const double ljj = std::sqrt(d);
        lower(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t p = 0; p < j; ++p) s -= lower(i, p) * lower(j, p);
            lower(i, j) = s / ljj;
        }
    }
    return true;
}

namespace {

Vector solve_with_factor(const Matrix& l, std::span<const double> b) {
    const std::size_t n = l.rows();
    Vector z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t p = 0; p < i; ++p) s -= l(i, p) * z[p];
        z[i] = s / l(i, i);
    }
    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = z[ii];
        for (std::size_t p = ii + 1; p < n; ++p) s -= l(p, ii) * x[p];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

}  // namespace

Vector cholesky_solve(const Matrix& a, std::span<const double> b) {
    if (a.rows() != b.size()) {
        throw ShapeError("cholesky_solve: matrix " + a.shape_string() + " vs rhs of length " +
                         std::to_string(b.size()));
    }
    Matrix l;
    if (!cholesky(a, l)) throw NumericalError("cholesky_solve: matrix is not positive definite");
    return solve_with_factor(l, b);
}

Matrix spd_inverse(const Matrix& a) {
    Matrix l;
    if (!cholesky(a, l)) throw NumericalError("spd_inverse: matrix is not positive definite");
    const std::size_t n = a.rows();
    Matrix inv(n, n);
    Vector e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        Vector col = solve_with_factor(l, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    // Symmetrize against round-off.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = m;
            inv(j, i) = m;
        }
    return inv;
}

bool all_finite(std::span<const double> v) noexcept {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace bikeflow

namespace bikeflow {

double dot(const double* a, const double* b, std::size_t n) noexcept {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

#if BIKEFLOW_HAVE_AVX2_KERNEL
void gemm_kernel_avx2(std::size_t m, std::size_t n, std::size_t p, const double* a, std::size_t ars,
                      std::size_t acs, const double* b, std::size_t ldb, double* c, std::size_t ldc);
#endif

namespace {

#include "gemm_kernel.inc"

void gemm_dispatch(std::size_t m, std::size_t n, std::size_t p, const double* a, std::size_t ars,
                   std::size_t acs, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
#if BIKEFLOW_HAVE_AVX2_KERNEL
    static const bool use_avx2 = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    if (use_avx2) {
        gemm_kernel_avx2(m, n, p, a, ars, acs, b, ldb, c, ldc);
        return;
    }
#endif
    gemm_kernel(m, n, p, a, ars, acs, b, ldb, c, ldc);
}

}  // namespace

void gemm_acc(const Matrix& a, bool transpose_a, const Matrix& b, Matrix& c) {
    const std::size_t m = transpose_a ? a.cols() : a.rows();
    const std::size_t p = transpose_a ? a.rows() : a.cols();
    if (b.rows() != p || c.rows() != m || c.cols() != b.cols()) {
        throw ShapeError("gemm_acc: " + std::string(transpose_a ? "transposed " : "") + a.shape_string() +
                         " times " + b.shape_string() + " into " + c.shape_string());
    }
    if (m == 0 || p == 0 || b.cols() == 0) return;
    const std::size_t ars = transpose_a ? 1 : a.cols();
    const std::size_t acs = transpose_a ? a.cols() : 1;
    gemm_dispatch(m, b.cols(), p, a.data().data(), ars, acs, b.data().data(), b.cols(), c.data().data(), c.cols());
}

}  // namespace bikeflow
