#include "bikeflow/model.hpp"

#include <cmath>

#include "bikeflow/errors.hpp"

namespace bikeflow {

std::string_view to_string(Architecture a) noexcept {
    switch (a) {
        case Architecture::lstm_mdn: return "lstm-mdn";
        case Architecture::lstm_regression: return "lstm-regression";
        case Architecture::lstm_dense_regression: return "lstm-dense-regression";
        case Architecture::mlp_baseline: return "mlp-baseline";
    }
    return "unknown";
}

Architecture parse_architecture(std::string_view name) {
    for (auto a : {Architecture::lstm_mdn, Architecture::lstm_regression,
                   Architecture::lstm_dense_regression, Architecture::mlp_baseline}) {
        if (to_string(a) == name) return a;
    }
    throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (features == 0 || steps == 0) throw ConfigError("model: features and steps must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
    switch (architecture) {
        case Architecture::lstm_mdn:
            if (hidden == 0 || components == 0) throw ConfigError("model: lstm-mdn needs k >= 1 and A >= 1");
            break;
        case Architecture::lstm_regression:
            if (hidden == 0) throw ConfigError("model: lstm-regression needs k >= 1");
            break;
        case Architecture::lstm_dense_regression:
            if (hidden == 0 || dense_width == 0) throw ConfigError("model: lstm-dense-regression needs k >= 1 and m >= 1");
            break;
        case Architecture::mlp_baseline:
            if (mlp_width == 0) throw ConfigError("model: mlp-baseline needs width >= 1");
            break;
    }
}

bool ModelConfig::is_replication_config() const noexcept {
    if (steps != 6) return false;
    if (architecture == Architecture::mlp_baseline) return mlp_width == kMlpDefaultWidth;
    if (hidden != 32 && hidden != 64) return false;
    if (architecture == Architecture::lstm_mdn) return components == 6 || components == 8;
    if (architecture == Architecture::lstm_dense_regression) return dense_width == 6 || dense_width == 8;
    return true;
}

std::size_t param_count(const ModelConfig& cfg) {
    const std::size_t k = cfg.hidden;
    switch (cfg.architecture) {
        case Architecture::lstm_mdn:
            return param_count_lstm(k, cfg.features) + k * 3 * cfg.components + 3 * cfg.components;
        case Architecture::lstm_regression:
            return param_count_lstm(k, cfg.features) + k + 1;
        case Architecture::lstm_dense_regression:
            return param_count_lstm(k, cfg.features) + (k * cfg.dense_width + cfg.dense_width) +
                   (cfg.dense_width + 1);
        case Architecture::mlp_baseline:
            return param_count_mlp(cfg.steps * cfg.features, cfg.mlp_width);
    }
    throw ConfigError("param_count: unknown architecture");
}

ModelWeights ModelWeights::zeros(const ModelConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    switch (cfg.architecture) {
        case Architecture::lstm_mdn:
            w.lstm = LstmWeights::zeros(cfg.hidden, cfg.features);
            w.head = MdnHeadWeights::zeros(cfg.hidden, cfg.components);
            break;
        case Architecture::lstm_regression:
            w.lstm = LstmWeights::zeros(cfg.hidden, cfg.features);
            w.output = DenseLayer::zeros(cfg.hidden, 1);
            break;
        case Architecture::lstm_dense_regression:
            w.lstm = LstmWeights::zeros(cfg.hidden, cfg.features);
            w.dense = DenseLayer::zeros(cfg.hidden, cfg.dense_width);
            w.output = DenseLayer::zeros(cfg.dense_width, 1);
            break;
        case Architecture::mlp_baseline:
            w.mlp = MlpWeights::zeros(cfg.steps * cfg.features, cfg.mlp_width);
            break;
    }
    return w;
}

ModelWeights ModelWeights::initialized(const ModelConfig& cfg, RngStream& rng) {
    cfg.validate();
    ModelWeights w;
    switch (cfg.architecture) {
        case Architecture::lstm_mdn:
            w.lstm = LstmWeights::initialized(cfg.hidden, cfg.features, rng);
            w.head = MdnHeadWeights::initialized(cfg.hidden, cfg.components, rng);
            break;
        case Architecture::lstm_regression:
            w.lstm = LstmWeights::initialized(cfg.hidden, cfg.features, rng);
            w.output = DenseLayer::initialized(cfg.hidden, 1, rng);
            break;
        case Architecture::lstm_dense_regression:
            w.lstm = LstmWeights::initialized(cfg.hidden, cfg.features, rng);
            w.dense = DenseLayer::initialized(cfg.hidden, cfg.dense_width, rng);
            w.output = DenseLayer::initialized(cfg.dense_width, 1, rng);
            break;
        case Architecture::mlp_baseline:
            w.mlp = MlpWeights::initialized(cfg.steps * cfg.features, cfg.mlp_width, rng);
            break;
    }
    return w;
}

namespace {

void append(std::vector<TensorView>& out, std::vector<TensorView> views, const std::string& prefix) {
    for (auto& v : views) {
        v.name = prefix + "." + v.name;
        out.push_back(std::move(v));
    }
}

}  // namespace

std::vector<TensorView> ModelWeights::tensors(const ModelConfig& cfg) {
    std::vector<TensorView> out;
    if (cfg.uses_lstm()) append(out, lstm.tensors(), "lstm");
    switch (cfg.architecture) {
        case Architecture::lstm_mdn: append(out, head.tensors(), "head"); break;
        case Architecture::lstm_regression: append(out, output.tensors("output"), "head"); break;
        case Architecture::lstm_dense_regression:
            append(out, dense.tensors("dense"), "head");
            append(out, output.tensors("output"), "head");
            break;
        case Architecture::mlp_baseline: append(out, mlp.tensors(), "mlp"); break;
    }
    return out;
}

std::size_t ModelWeights::parameter_count(const ModelConfig& cfg) const {
    std::size_t n = 0;
    for (const auto& t : const_cast<ModelWeights*>(this)->tensors(cfg)) n += t.values.size();
    return n;
}

Vector flatten(const Matrix& seq) { return seq.values(); }

Prediction predict(const ModelConfig& cfg, const ModelWeights& w, const Matrix& seq) {
    if (seq.rows() != cfg.steps || seq.cols() != cfg.features) {
        throw ShapeError("predict: sequence " + seq.shape_string() + ", model expects " +
                         std::to_string(cfg.steps) + "x" + std::to_string(cfg.features));
    }
    Prediction p;
    if (cfg.architecture == Architecture::mlp_baseline) {
        RngStream unused(0);
        p.value = mlp_forward(flatten(seq), w.mlp, 0.0, Mode::infer, unused);
        return p;
    }
    const LstmForwardResult fwd = lstm_forward_masked(seq, w.lstm, {});
    const Vector& h = fwd.final.h;
    switch (cfg.architecture) {
        case Architecture::lstm_mdn:
            p.is_mixture = true;
            p.mixture = mdn_params(h, w.head);
            break;
        case Architecture::lstm_regression: p.value = w.output.forward(h)[0]; break;
        case Architecture::lstm_dense_regression:
            p.value = w.output.forward(w.dense.forward(h))[0];
            break;
        case Architecture::mlp_baseline: break;
    }
    return p;
}

DropoutMasks draw_masks(const ModelConfig& cfg, RngStream& rng) {
    DropoutMasks m;
    if (cfg.dropout <= 0.0) return m;
    if (cfg.uses_lstm())
        m.lstm = draw_dropout_mask(cfg.hidden, cfg.dropout, rng);
    else
        m.mlp = draw_mlp_masks(cfg.mlp_width, cfg.dropout, rng);
    return m;
}

void BatchEvaluator::forward(const ModelConfig& cfg, const ModelWeights& w,
                             std::span<const Matrix* const> seqs,
                             std::span<const DropoutMasks> masks) {
    const std::size_t nb = seqs.size();
    if (nb == 0) throw DomainError("BatchEvaluator: empty batch");
    if (!masks.empty() && masks.size() != nb) throw ShapeError("BatchEvaluator: mask count mismatch");

    if (cfg.architecture == Architecture::mlp_baseline) {
        const std::size_t n_in = cfg.steps * cfg.features;
        Matrix x(n_in, nb);
        for (std::size_t b = 0; b < nb; ++b) {
            if (seqs[b]->size() != n_in) throw ShapeError("BatchEvaluator: sequence shape mismatch");
            auto v = seqs[b]->data();
            for (std::size_t i = 0; i < n_in; ++i) x(i, b) = v[i];
        }
        std::vector<std::array<Vector, kMlpHiddenLayers>> mlp_masks;
        bool any = false;
        for (const auto& m : masks) any = any || !m.mlp[0].empty();
        if (any) {
            mlp_masks.reserve(nb);
            for (const auto& m : masks) mlp_masks.push_back(m.mlp);
        }
        mlp_.forward(w.mlp, x, mlp_masks);
        outputs_ = mlp_.output();
        return;
    }

    std::vector<Vector> lstm_masks;
    bool any = false;
    for (const auto& m : masks) any = any || !m.lstm.empty();
    if (any) {
        lstm_masks.reserve(nb);
        for (const auto& m : masks) lstm_masks.push_back(m.lstm);
    }
    lstm_.forward(w.lstm, seqs, lstm_masks);
    const Matrix& h = lstm_.final_hidden();
    switch (cfg.architecture) {
        case Architecture::lstm_mdn: {
            const std::size_t n_out = 3 * w.head.components;
            outputs_ = Matrix(n_out, nb);
            for (std::size_t j = 0; j < n_out; ++j) {
                double* r = outputs_.row(j).data();
                for (std::size_t b = 0; b < nb; ++b) r[b] = w.head.b[j];
            }
            gemm_acc(w.head.W, true, h, outputs_);
            break;
        }
        case Architecture::lstm_regression: w.output.forward_batch(h, outputs_); break;
        case Architecture::lstm_dense_regression:
            w.dense.forward_batch(h, dense_out_);
            w.output.forward_batch(dense_out_, outputs_);
            break;
        case Architecture::mlp_baseline: break;
    }
}

double BatchEvaluator::evaluate(const ModelConfig& cfg, const ModelWeights& w,
                                std::span<const Matrix* const> seqs,
                                std::span<const double> targets,
                                std::span<const DropoutMasks> masks, ModelWeights* grads) {
    if (targets.size() != seqs.size()) throw ShapeError("BatchEvaluator: target count mismatch");
    forward(cfg, w, seqs, masks);
    const std::size_t nb = seqs.size();
    const double inv_n = 1.0 / static_cast<double>(nb);
    double loss = 0.0;

    if (cfg.is_mixture()) {
        const std::size_t a = w.head.components;
        Matrix g(3 * a, nb);
        Vector o(3 * a);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t j = 0; j < 3 * a; ++j) o[j] = outputs_(j, b);
            loss -= mixture_log_density(targets[b], mixture_from_outputs(o, a));
            if (grads != nullptr) {
                const Vector gb = mdn_output_gradient(targets[b], o, a);
                for (std::size_t j = 0; j < 3 * a; ++j) g(j, b) = gb[j] * inv_n;
            }
        }
        if (grads != nullptr) {
            const Matrix& h = lstm_.final_hidden();
            Matrix dh(w.head.hidden, nb);
            for (std::size_t j = 0; j < 3 * a; ++j) {
                const double* gj = g.row(j).data();
                double s = 0.0;
                for (std::size_t b = 0; b < nb; ++b) s += gj[b];
                grads->head.b[j] += s;
            }
            gemm_acc(h, false, g.transpose(), grads->head.W);
            gemm_acc(w.head.W, false, g, dh);
            lstm_.backward(w.lstm, dh, grads->lstm);
        }
        return loss * inv_n;
    }

    Matrix dout(1, nb);
    for (std::size_t b = 0; b < nb; ++b) {
        const double r = outputs_(0, b) - targets[b];
        loss += r * r;
        dout(0, b) = 2.0 * r * inv_n;
    }
    if (grads != nullptr) {
        switch (cfg.architecture) {
            case Architecture::lstm_regression: {
                Matrix dh;
                w.output.backward_batch(lstm_.final_hidden(), dout, grads->output, &dh);
                lstm_.backward(w.lstm, dh, grads->lstm);
                break;
            }
            case Architecture::lstm_dense_regression: {
                Matrix dm, dh;
                w.output.backward_batch(dense_out_, dout, grads->output, &dm);
                w.dense.backward_batch(lstm_.final_hidden(), dm, grads->dense, &dh);
                lstm_.backward(w.lstm, dh, grads->lstm);
                break;
            }
            case Architecture::mlp_baseline: mlp_.backward(w.mlp, dout, grads->mlp); break;
            case Architecture::lstm_mdn: break;
        }
    }
    return loss * inv_n;
}

std::vector<Prediction> BatchEvaluator::predict(const ModelConfig& cfg, const ModelWeights& w,
                                                std::span<const Matrix* const> seqs) {
    forward(cfg, w, seqs, {});
    std::vector<Prediction> out(seqs.size());
    for (std::size_t b = 0; b < seqs.size(); ++b) {
        if (cfg.is_mixture()) {
            Vector o(outputs_.rows());
            for (std::size_t j = 0; j < o.size(); ++j) o[j] = outputs_(j, b);
            out[b].is_mixture = true;
            out[b].mixture = mixture_from_outputs(o, w.head.components);
        } else {
            out[b].value = outputs_(0, b);
        }
    }
    return out;
}

}  // namespace bikeflow
