#include "bikeflow/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train: Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be positive");
    if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("train: max epochs must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

SplitIndices split_dataset(std::size_t n, std::uint64_t seed) {
    if (n < 10) throw DomainError("split_dataset: need at least 10 samples, got " + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    RngStream rng(seed, 0x5011);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(perm[i], perm[j]);
    }
    const std::size_t n_train = n * 7 / 10;
    const std::size_t n_val = n / 10;
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                        perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return s;
}

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, long t, const TrainConfig& cfg) {
    if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
        throw ShapeError("adam_update: buffers of different lengths");
    }
    if (t < 1) throw DomainError("adam_update: step index must be >= 1");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        w[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

void adam_step(std::span<TensorView> weights, std::span<const TensorView> grads, AdamState& state,
               long t, const TrainConfig& cfg) {
    if (weights.size() != grads.size()) throw ShapeError("adam_step: tensor count mismatch");
    if (state.m.empty()) {
        for (const auto& w : weights) {
            state.m.emplace_back(w.values.size(), 0.0);
            state.v.emplace_back(w.values.size(), 0.0);
        }
    }
    if (state.m.size() != weights.size()) throw ShapeError("adam_step: state does not match tensors");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].values.size() != grads[i].values.size()) {
            throw ShapeError("adam_step: gradient for " + weights[i].name + " has wrong size");
        }
        adam_update(weights[i].values, grads[i].values, state.m[i], state.v[i], t, cfg);
    }
    state.step = t;
}

double dataset_loss(const ModelConfig& cfg, const ModelWeights& w,
                    std::span<const SequenceSample> samples, std::size_t batch_size) {
    if (samples.empty()) throw DomainError("dataset_loss: empty sample set");
    BatchEvaluator eval;
    std::vector<const Matrix*> seqs;
    Vector targets;
    double total = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        seqs.clear();
        targets.clear();
        for (std::size_t i = start; i < end; ++i) {
            seqs.push_back(&samples[i].x);
            targets.push_back(samples[i].y);
        }
        total += eval.evaluate(cfg, w, seqs, targets, {}, nullptr) * static_cast<double>(end - start);
    }
    return total / static_cast<double>(samples.size());
}

namespace {

void zero(ModelWeights& g, const ModelConfig& cfg) {
    for (auto& t : g.tensors(cfg)) std::fill(t.values.begin(), t.values.end(), 0.0);
}

double residual_variance(const ModelConfig& cfg, const ModelWeights& w,
                         std::span<const SequenceSample> samples) {
    BatchEvaluator eval;
    double total = 0.0;
    std::vector<const Matrix*> seqs;
    for (std::size_t start = 0; start < samples.size(); start += 512) {
        const std::size_t end = std::min(samples.size(), start + 512);
        seqs.clear();
        for (std::size_t i = start; i < end; ++i) seqs.push_back(&samples[i].x);
        const auto preds = eval.predict(cfg, w, seqs);
        for (std::size_t i = start; i < end; ++i) {
            const double r = preds[i - start].mean() - samples[i].y;
            total += r * r;
        }
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace

TrainedModel train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                   std::span<const SequenceSample> train_samples,
                   std::span<const SequenceSample> validation_samples,
                   const StandardizationStats& stats, const TrainHooks& hooks) {
    model_cfg.validate();
    train_cfg.validate();
    if (train_samples.empty()) throw ConfigError("train: empty training split");
    if (validation_samples.empty()) throw ConfigError("train: empty validation split");
    for (const auto* set : {&train_samples, &validation_samples})
        for (const auto& s : *set)
            if (s.x.rows() != model_cfg.steps || s.x.cols() != model_cfg.features) {
                throw ShapeError("train: sample " + s.x.shape_string() + " does not match model " +
                                 std::to_string(model_cfg.steps) + "x" +
                                 std::to_string(model_cfg.features));
            }

    const RngStream root(train_cfg.seed);
    RngStream init_rng = root.child(1);
    const RngStream shuffle_root = root.child(2);
    const RngStream dropout_root = root.child(3);

    TrainedModel result;
    result.config = model_cfg;
    result.stats = stats;
    result.seed = train_cfg.seed;
    result.weights = ModelWeights::initialized(model_cfg, init_rng);

    ModelWeights& w = result.weights;
    ModelWeights grads = ModelWeights::zeros(model_cfg);
    ModelWeights best = w;
    auto weight_views = w.tensors(model_cfg);
    auto grad_views = grads.tensors(model_cfg);
    AdamState adam;
    long step = 0;

    BatchEvaluator eval;
    std::vector<std::size_t> order(train_samples.size());
    std::vector<const Matrix*> seqs;
    Vector targets;
    std::vector<DropoutMasks> masks;

    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream shuffle = shuffle_root.child(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[static_cast<std::size_t>(shuffle.below(i + 1))]);
        }
        const RngStream epoch_dropout = dropout_root.child(static_cast<std::uint64_t>(epoch));

        double epoch_loss = 0.0;
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
            seqs.clear();
            targets.clear();
            masks.clear();
            const RngStream batch_dropout = epoch_dropout.child(static_cast<std::uint64_t>(batch_index));
            for (std::size_t p = start; p < end; ++p) {
                const auto& s = train_samples[order[p]];
                seqs.push_back(&s.x);
                targets.push_back(s.y);
                if (model_cfg.dropout > 0.0) {
                    RngStream sample_rng = batch_dropout.child(static_cast<std::uint64_t>(order[p]));
                    masks.push_back(draw_masks(model_cfg, sample_rng));
                }
            }
            zero(grads, model_cfg);
            const double loss = eval.evaluate(model_cfg, w, seqs, targets, masks, &grads);
            bool finite = std::isfinite(loss);
            for (const auto& g : grad_views) finite = finite && all_finite(g.values);
            if (!finite) throw TrainingError(epoch, batch_index + 1, "non-finite loss or gradient");
            ++step;
            adam_step(weight_views, grad_views, adam, step, train_cfg);
            epoch_loss += loss * static_cast<double>(end - start);
        }
        epoch_loss /= static_cast<double>(order.size());

        double val = dataset_loss(model_cfg, w, validation_samples, train_cfg.batch_size);
        if (hooks.validation_override) val = hooks.validation_override(epoch, val);
        if (!std::isfinite(val)) throw TrainingError(epoch, 0, "non-finite validation loss");
        const EpochRecord rec{epoch, epoch_loss, val};
        result.history.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (val < best_val - train_cfg.min_improvement) {
            best_val = val;
            best = w;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= train_cfg.patience) {
            break;
        }
    }
    result.weights = std::move(best);
    result.residual_variance = residual_variance(model_cfg, result.weights, validation_samples);
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kMagic = "bikeflow-model";

std::string join_values(std::span<const double> v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out.push_back(' ');
        out += format_double(v[i]);
    }
    return out;
}

class LineParser {
public:
    explicit LineParser(const std::string& text) : in_(text) {}

    std::vector<std::string> next(const std::string& what) {
        std::string line;
        if (!std::getline(in_, line)) {
            throw ModelFormatError(ModelFormatError::Kind::truncated,
                                   "model file truncated: expected " + what + " at line " +
                                       std::to_string(line_ + 1));
        }
        if (in_.eof()) {
            throw ModelFormatError(ModelFormatError::Kind::truncated,
                                   "model file truncated: line " + std::to_string(line_ + 1) + " is incomplete");
        }
        ++line_;
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ss >> tok) tokens.push_back(tok);
        return tokens;
    }

    std::vector<std::string> keyed(const std::string& key, std::size_t min_tokens = 2) {
        auto t = next("'" + key + "'");
        if (t.empty() || t[0] != key || t.size() < min_tokens) {
            throw ModelFormatError(ModelFormatError::Kind::malformed,
                                   "model file line " + std::to_string(line_) + ": expected '" + key + "'");
        }
        return t;
    }

    double number(const std::string& tok) const {
        if (tok == "nan") return std::numeric_limits<double>::quiet_NaN();
        auto v = parse_double(tok);
        if (!v) {
            throw ModelFormatError(ModelFormatError::Kind::malformed,
                                   "model file line " + std::to_string(line_) + ": bad number '" + tok + "'");
        }
        return *v;
    }

    std::size_t count(const std::string& tok) const {
        auto v = parse_int(tok);
        if (!v || *v < 0) {
            throw ModelFormatError(ModelFormatError::Kind::malformed,
                                   "model file line " + std::to_string(line_) + ": bad count '" + tok + "'");
        }
        return static_cast<std::size_t>(*v);
    }

    Vector numbers(const std::vector<std::string>& t, std::size_t from, std::size_t expected) const {
        if (t.size() != from + expected) {
            throw ModelFormatError(ModelFormatError::Kind::shape_mismatch,
                                   "model file line " + std::to_string(line_) + ": expected " +
                                       std::to_string(expected) + " values, found " +
                                       std::to_string(t.size() - std::min(t.size(), from)));
        }
        Vector out;
        for (std::size_t i = from; i < t.size(); ++i) out.push_back(number(t[i]));
        return out;
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::istringstream in_;
    std::size_t line_ = 0;
};

}  // namespace

std::string serialize_model(const TrainedModel& model) {
    const ModelConfig& c = model.config;
    std::ostringstream out;
    out << kMagic << " " << kModelFormatVersion << "\n";
    out << "architecture " << to_string(c.architecture) << "\n";
    out << "hidden " << c.hidden << "\n";
    out << "components " << c.components << "\n";
    out << "dense_width " << c.dense_width << "\n";
    out << "features " << c.features << "\n";
    out << "steps " << c.steps << "\n";
    out << "mlp_width " << c.mlp_width << "\n";
    out << "dropout " << format_double(c.dropout) << "\n";
    out << "seed " << model.seed << "\n";
    out << "best_epoch " << model.best_epoch << "\n";
    out << "residual_variance " << format_double(model.residual_variance) << "\n";
    const auto& st = model.stats;
    out << "feature_names " << st.feature_names.size();
    for (const auto& n : st.feature_names) out << " " << n;
    out << "\n";
    out << "feature_mean " << st.feature_mean.size() << " " << join_values(st.feature_mean) << "\n";
    out << "feature_std " << st.feature_std.size() << " " << join_values(st.feature_std) << "\n";
    out << "target_mean " << format_double(st.target_mean) << "\n";
    out << "target_std " << format_double(st.target_std) << "\n";
    out << "history " << model.history.size() << "\n";
    for (const auto& h : model.history) {
        out << h.epoch << " " << format_double(h.train_loss) << " " << format_double(h.val_loss) << "\n";
    }
    ModelWeights copy = model.weights;
    for (const auto& t : copy.tensors(c)) {
        out << "block " << t.name << " " << t.rows << " " << t.cols << "\n";
        for (std::size_t r = 0; r < t.rows; ++r) {
            out << join_values(t.values.subspan(r * t.cols, t.cols)) << "\n";
        }
    }
    out << "end\n";
    return out.str();
}

TrainedModel deserialize_model(const std::string& text) {
    LineParser p(text);
    auto head = p.next("header");
    if (head.size() != 2 || head[0] != kMagic) {
        throw ModelFormatError(ModelFormatError::Kind::malformed, "not a bikeflow model file");
    }
    if (head[1] != std::to_string(kModelFormatVersion)) {
        throw ModelFormatError(ModelFormatError::Kind::version_mismatch,
                               "model format version " + head[1] + " is not supported (expected " +
                                   std::to_string(kModelFormatVersion) + ")");
    }
    TrainedModel m;
    ModelConfig& c = m.config;
    try {
        c.architecture = parse_architecture(p.keyed("architecture")[1]);
    } catch (const ConfigError& e) {
        throw ModelFormatError(ModelFormatError::Kind::malformed, e.what());
    }
    c.hidden = p.count(p.keyed("hidden")[1]);
    c.components = p.count(p.keyed("components")[1]);
    c.dense_width = p.count(p.keyed("dense_width")[1]);
    c.features = p.count(p.keyed("features")[1]);
    c.steps = p.count(p.keyed("steps")[1]);
    c.mlp_width = p.count(p.keyed("mlp_width")[1]);
    c.dropout = p.number(p.keyed("dropout")[1]);
    {
        auto v = parse_int(p.keyed("seed")[1]);
        m.seed = v ? static_cast<std::uint64_t>(*v) : 0;
    }
    m.best_epoch = static_cast<int>(p.count(p.keyed("best_epoch")[1]));
    m.residual_variance = p.number(p.keyed("residual_variance")[1]);

    auto names = p.keyed("feature_names");
    const std::size_t n_feat = p.count(names[1]);
    if (names.size() != 2 + n_feat) {
        throw ModelFormatError(ModelFormatError::Kind::shape_mismatch, "feature_names count mismatch");
    }
    m.stats.feature_names.assign(names.begin() + 2, names.end());
    auto fm = p.keyed("feature_mean");
    m.stats.feature_mean = p.numbers(fm, 2, p.count(fm[1]));
    auto fs = p.keyed("feature_std");
    m.stats.feature_std = p.numbers(fs, 2, p.count(fs[1]));
    if (m.stats.feature_mean.size() != n_feat || m.stats.feature_std.size() != n_feat) {
        throw ModelFormatError(ModelFormatError::Kind::shape_mismatch, "standardization statistics length mismatch");
    }
    m.stats.target_mean = p.number(p.keyed("target_mean")[1]);
    m.stats.target_std = p.number(p.keyed("target_std")[1]);
    const std::size_t n_hist = p.count(p.keyed("history")[1]);
    for (std::size_t i = 0; i < n_hist; ++i) {
        auto t = p.next("history row");
        if (t.size() != 3) throw ModelFormatError(ModelFormatError::Kind::malformed, "bad history row");
        m.history.push_back({static_cast<int>(p.count(t[0])), p.number(t[1]), p.number(t[2])});
    }

    try {
        c.validate();
        m.weights = ModelWeights::zeros(c);
    } catch (const ConfigError& e) {
        throw ModelFormatError(ModelFormatError::Kind::malformed, std::string("invalid model configuration: ") + e.what());
    }
    for (auto& t : m.weights.tensors(c)) {
        auto hdr = p.next("block " + t.name);
        if (hdr.size() != 4 || hdr[0] != "block") {
            throw ModelFormatError(ModelFormatError::Kind::malformed,
                                   "model file line " + std::to_string(p.line()) + ": expected block " + t.name);
        }
        if (hdr[1] != t.name) {
            throw ModelFormatError(ModelFormatError::Kind::bad_block,
                                   "unexpected block '" + hdr[1] + "', expected '" + t.name + "'");
        }
        if (p.count(hdr[2]) != t.rows || p.count(hdr[3]) != t.cols) {
            throw ModelFormatError(ModelFormatError::Kind::shape_mismatch,
                                   "block " + t.name + " is " + hdr[2] + "x" + hdr[3] + ", expected " +
                                       std::to_string(t.rows) + "x" + std::to_string(t.cols));
        }
        for (std::size_t r = 0; r < t.rows; ++r) {
            auto row = p.next("block " + t.name + " row");
            Vector vals = p.numbers(row, 0, t.cols);
            std::copy(vals.begin(), vals.end(), t.values.begin() + static_cast<std::ptrdiff_t>(r * t.cols));
        }
    }
    auto end = p.next("end");
    if (end.size() != 1 || end[0] != "end") {
        throw ModelFormatError(ModelFormatError::Kind::bad_block,
                               "unexpected content after the last block at line " + std::to_string(p.line()));
    }
    return m;
}

void save_model(const TrainedModel& model, const std::string& path) {
    write_text_file(path, serialize_model(model));
}

TrainedModel load_model(const std::string& path) { return deserialize_model(read_text_file(path)); }

std::string history_csv(std::span<const EpochRecord> history) {
    std::string out = "epoch,train_loss,val_loss\n";
    for (const auto& h : history) {
        out += std::to_string(h.epoch) + "," + format_double(h.train_loss) + "," +
               format_double(h.val_loss) + "\n";
    }
    return out;
}

}  // namespace bikeflow
