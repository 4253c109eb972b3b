#include "bikeflow/mlp.hpp"

#include <string>

#include "bikeflow/errors.hpp"
#include "bikeflow/lstm.hpp"

namespace bikeflow {

MlpWeights MlpWeights::zeros(std::size_t inputs, std::size_t width) {
    MlpWeights w;
    w.hidden[0] = DenseLayer::zeros(inputs, width);
    for (std::size_t l = 1; l < kMlpHiddenLayers; ++l) w.hidden[l] = DenseLayer::zeros(width, width);
    w.output = DenseLayer::zeros(width, 1);
    return w;
}

MlpWeights MlpWeights::initialized(std::size_t inputs, std::size_t width, RngStream& rng) {
    MlpWeights w;
    w.hidden[0] = DenseLayer::initialized(inputs, width, rng);
    for (std::size_t l = 1; l < kMlpHiddenLayers; ++l)
        w.hidden[l] = DenseLayer::initialized(width, width, rng);
    w.output = DenseLayer::initialized(width, 1, rng);
    return w;
}

std::size_t MlpWeights::parameter_count() const noexcept {
    std::size_t n = output.parameter_count();
    for (const auto& l : hidden) n += l.parameter_count();
    return n;
}

std::vector<TensorView> MlpWeights::tensors() {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < kMlpHiddenLayers; ++l) {
        auto t = hidden[l].tensors("hidden" + std::to_string(l + 1));
        out.insert(out.end(), t.begin(), t.end());
    }
    auto t = output.tensors("output");
    out.insert(out.end(), t.begin(), t.end());
    return out;
}

std::size_t param_count_mlp(std::size_t inputs, std::size_t width) {
    return inputs * width + width + 2 * (width * width + width) + width + 1;
}

std::array<Vector, kMlpHiddenLayers> draw_mlp_masks(std::size_t width, double rate, RngStream& rng) {
    std::array<Vector, kMlpHiddenLayers> masks;
    for (auto& m : masks) m = draw_dropout_mask(width, rate, rng);
    return masks;
}

double mlp_forward(std::span<const double> x, const MlpWeights& w, double dropout, Mode mode,
                   RngStream& rng) {
    if (x.size() != w.inputs()) {
        throw ShapeError("mlp_forward: input of length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(w.inputs()));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("mlp_forward: dropout must lie in [0, 1)");
    Matrix input(x.size(), 1, Vector(x.begin(), x.end()));
    MlpBatch batch;
    if (mode == Mode::train && dropout > 0.0) {
        const std::array<std::array<Vector, kMlpHiddenLayers>, 1> masks = {
            draw_mlp_masks(w.width(), dropout, rng)};
        batch.forward(w, input, masks);
    } else {
        batch.forward(w, input, {});
    }
    return batch.output()(0, 0);
}

void MlpBatch::forward(const MlpWeights& w, const Matrix& x,
                       std::span<const std::array<Vector, kMlpHiddenLayers>> masks) {
    const std::size_t nb = x.cols();
    if (!masks.empty() && masks.size() != nb) {
        throw ShapeError("MlpBatch::forward: mask count does not match batch size");
    }
    x_ = x;
    const Matrix* in = &x_;
    for (std::size_t l = 0; l < kMlpHiddenLayers; ++l) {
        w.hidden[l].forward_batch(*in, pre_[l]);
        act_[l] = pre_[l];
        for (double& v : act_[l].data()) v = elu(v);
        if (!masks.empty()) {
            mask_[l] = Matrix(w.width(), nb);
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t j = 0; j < w.width(); ++j) mask_[l](j, b) = masks[b][l][j];
            auto a = act_[l].data();
            auto m = mask_[l].data();
            for (std::size_t i = 0; i < a.size(); ++i) a[i] *= m[i];
        } else {
            mask_[l] = Matrix();
        }
        in = &act_[l];
    }
    w.output.forward_batch(*in, out_);
}

void MlpBatch::backward(const MlpWeights& w, const Matrix& dout, MlpWeights& grads, Matrix* dx) {
    Matrix d_act;
    w.output.backward_batch(act_[kMlpHiddenLayers - 1], dout, grads.output, &d_act);
    for (std::size_t l = kMlpHiddenLayers; l-- > 0;) {
        Matrix d_pre = d_act;
        auto dp = d_pre.data();
        auto pre = pre_[l].data();
        const bool masked = !mask_[l].empty();
        for (std::size_t i = 0; i < dp.size(); ++i) {
            double g = dp[i];
            if (masked) g *= mask_[l].data()[i];
            dp[i] = g * elu_derivative(pre[i]);
        }
        const Matrix& in = l == 0 ? x_ : act_[l - 1];
        Matrix* next = (l == 0) ? dx : &d_act;
        w.hidden[l].backward_batch(in, d_pre, grads.hidden[l], next);
    }
}

}  // namespace bikeflow
