#include "bikeflow/mdn.hpp"

#include <algorithm>
#include <cmath>

#include "bikeflow/errors.hpp"

namespace bikeflow {

MdnHeadWeights MdnHeadWeights::zeros(std::size_t hidden, std::size_t components) {
    MdnHeadWeights w;
    w.hidden = hidden;
    w.components = components;
    w.W = Matrix(hidden, 3 * components);
    w.b = Vector(3 * components, 0.0);
    return w;
}

MdnHeadWeights MdnHeadWeights::initialized(std::size_t hidden, std::size_t components,
                                           RngStream& rng) {
    MdnHeadWeights w = zeros(hidden, components);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& x : w.W.data()) x = rng.uniform(-bound, bound);
    // Spread the initial means so components do not start identical.
    for (std::size_t a = 0; a < components; ++a) {
        const double frac = components == 1 ? 0.0
                                            : static_cast<double>(a) /
                                                  static_cast<double>(components - 1);
        w.b[components + a] = -1.0 + 2.0 * frac;
    }
    return w;
}

void MdnHeadWeights::validate() const {
    if (hidden == 0 || components == 0) throw ShapeError("MdnHeadWeights: empty head");
    if (W.rows() != hidden || W.cols() != 3 * components) {
        throw ShapeError("MdnHeadWeights.W is " + W.shape_string() + ", expected " +
                         std::to_string(hidden) + "x" + std::to_string(3 * components));
    }
    if (b.size() != 3 * components) {
        throw ShapeError("MdnHeadWeights.b has length " + std::to_string(b.size()) +
                         ", expected " + std::to_string(3 * components));
    }
}

std::vector<TensorView> MdnHeadWeights::tensors() {
    return {{"W", W.rows(), W.cols(), W.data()}, {"b", 1, b.size(), b}};
}

void MixtureParams::validate() const {
    const std::size_t a = alpha.size();
    if (a == 0 || mu.size() != a || nu.size() != a) {
        throw DomainError("MixtureParams: inconsistent component counts");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a; ++i) {
        if (!(alpha[i] >= 0.0 && alpha[i] <= 1.0)) throw DomainError("MixtureParams: alpha out of [0,1]");
        if (!(nu[i] > 0.0) || !std::isfinite(nu[i])) throw DomainError("MixtureParams: variance must be positive");
        if (!std::isfinite(mu[i])) throw DomainError("MixtureParams: non-finite mean");
        total += alpha[i];
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("MixtureParams: alpha does not sum to 1");
}

Vector mdn_outputs(std::span<const double> h, const MdnHeadWeights& w) {
    if (h.size() != w.hidden) {
        throw ShapeError("mdn_params: hidden state of length " + std::to_string(h.size()) +
                         ", head expects " + std::to_string(w.hidden));
    }
    Vector o = matvec_transposed(w.W, h);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += w.b[j];
    return o;
}

MixtureParams mixture_from_outputs(std::span<const double> outputs, std::size_t components) {
    if (outputs.size() != 3 * components) {
        throw ShapeError("mixture_from_outputs: " + std::to_string(outputs.size()) +
                         " outputs for " + std::to_string(components) + " components");
    }
    MixtureParams p;
    p.alpha = stable_softmax(outputs.subspan(0, components));
    p.mu.assign(outputs.begin() + components, outputs.begin() + 2 * components);
    p.nu.resize(components);
    for (std::size_t a = 0; a < components; ++a) {
        p.nu[a] = std::exp(std::clamp(outputs[2 * components + a], kLogVarianceMin, kLogVarianceMax));
    }
    return p;
}

MixtureParams mdn_params(std::span<const double> h, const MdnHeadWeights& w) {
    return mixture_from_outputs(mdn_outputs(h, w), w.components);
}

double mixture_log_density(double y, const MixtureParams& p) {
    const std::size_t a = p.components();
    Vector terms(a);
    for (std::size_t i = 0; i < a; ++i) {
        terms[i] = std::log(p.alpha[i]) + log_gaussian(y, p.mu[i], p.nu[i]);
    }
    return log_sum_exp(terms);
}

double nll_loss(std::span<const double> targets, std::span<const MixtureParams> params) {
    if (targets.empty()) throw DomainError("nll_loss: empty batch");
    if (targets.size() != params.size()) {
        throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets vs " +
                         std::to_string(params.size()) + " mixtures");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < targets.size(); ++j) total -= mixture_log_density(targets[j], params[j]);
    return total / static_cast<double>(targets.size());
}

Vector mdn_output_gradient(double y, std::span<const double> outputs, std::size_t components) {
    const MixtureParams p = mixture_from_outputs(outputs, components);
    const std::size_t a = components;
    // Posterior responsibilities.
    Vector log_terms(a);
    for (std::size_t i = 0; i < a; ++i) {
        log_terms[i] = std::log(p.alpha[i]) + log_gaussian(y, p.mu[i], p.nu[i]);
    }
    const double lse = log_sum_exp(log_terms);
    Vector grad(3 * a);
    for (std::size_t i = 0; i < a; ++i) {
        const double gamma = std::exp(log_terms[i] - lse);
        const double r = y - p.mu[i];
        grad[i] = p.alpha[i] - gamma;
        grad[a + i] = -gamma * r / p.nu[i];
        const double raw = outputs[2 * a + i];
        const bool clamped = raw < kLogVarianceMin || raw > kLogVarianceMax;
        grad[2 * a + i] = clamped ? 0.0 : 0.5 * gamma * (1.0 - r * r / p.nu[i]);
    }
    return grad;
}

MdnBackwardResult mdn_backward(double y, std::span<const double> h, const MdnHeadWeights& w) {
    const Vector o = mdn_outputs(h, w);
    const Vector g = mdn_output_gradient(y, o, w.components);
    MdnBackwardResult out{Matrix(w.hidden, g.size()), g, Vector(w.hidden, 0.0)};
    for (std::size_t q = 0; q < w.hidden; ++q) {
        auto dw = out.dW.row(q);
        auto wr = w.W.row(q);
        double s = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            dw[j] = h[q] * g[j];
            s += wr[j] * g[j];
        }
        out.dh[q] = s;
    }
    return out;
}

double sample(const MixtureParams& p, RngStream& rng, std::size_t* component) {
    const std::size_t i = rng.categorical(p.alpha);
    if (component != nullptr) *component = i;
    return p.mu[i] + std::sqrt(p.nu[i]) * rng.normal();
}

double mixture_mean(const MixtureParams& p) {
    double m = 0.0;
    for (std::size_t i = 0; i < p.components(); ++i) m += p.alpha[i] * p.mu[i];
    return m;
}

double mixture_variance(const MixtureParams& p) {
    const double m = mixture_mean(p);
    double v = 0.0;
    for (std::size_t i = 0; i < p.components(); ++i) {
        const double d = p.mu[i] - m;
        v += p.alpha[i] * (p.nu[i] + d * d);
    }
    return v;
}

}  // namespace bikeflow
