#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bikeflow/numerics.hpp"
#include "bikeflow/random.hpp"

namespace bikeflow {

/// Bounds applied to the raw variance output before exponentiation.
inline constexpr double kLogVarianceMin = -20.0;
inline constexpr double kLogVarianceMax = 20.0;

/// Linear output layer feeding the Gaussian mixture. Output columns are laid
/// out as [A mixing logits | A means | A log-variances].
struct MdnHeadWeights {
    std::size_t hidden = 0;
    std::size_t components = 0;
    Matrix W;  // hidden × 3A
    Vector b;  // 3A

    static MdnHeadWeights zeros(std::size_t hidden, std::size_t components);
    static MdnHeadWeights initialized(std::size_t hidden, std::size_t components, RngStream& rng);

    void validate() const;
    std::vector<TensorView> tensors();
    std::size_t parameter_count() const { return hidden * 3 * components + 3 * components; }
};

/// Mixture of univariate Gaussians. `nu` holds the component variances.
struct MixtureParams {
    Vector alpha;
    Vector mu;
    Vector nu;

    std::size_t components() const noexcept { return alpha.size(); }
    /// Throws DomainError unless Σα = 1 (1e-9), α ∈ [0,1] and ν > 0.
    void validate() const;
};

/// Raw head outputs o = Wᵀh + b.
Vector mdn_outputs(std::span<const double> h, const MdnHeadWeights& w);

/// Mixture parameters from raw outputs: softmax, identity, clamped exp.
MixtureParams mixture_from_outputs(std::span<const double> outputs, std::size_t components);

MixtureParams mdn_params(std::span<const double> h, const MdnHeadWeights& w);

/// log Σ α_i N(y; μ_i, ν_i)
double mixture_log_density(double y, const MixtureParams& p);

/// Mean negative log density over a batch. Throws DomainError on an empty batch.
double nll_loss(std::span<const double> targets, std::span<const MixtureParams> params);

/// Gradient of -log p(y) with respect to the raw outputs (3A).
Vector mdn_output_gradient(double y, std::span<const double> outputs, std::size_t components);

struct MdnBackwardResult {
    Matrix dW;  // hidden × 3A
    Vector db;  // 3A
    Vector dh;  // hidden
};

/// Gradient of -log p(y | h) through the head.
MdnBackwardResult mdn_backward(double y, std::span<const double> h, const MdnHeadWeights& w);

/// Component drawn from α, then a Gaussian draw from it. `component` (if
/// non-null) receives the index of the originating component.
double sample(const MixtureParams& p, RngStream& rng, std::size_t* component = nullptr);

double mixture_mean(const MixtureParams& p);
double mixture_variance(const MixtureParams& p);

}  // namespace bikeflow
