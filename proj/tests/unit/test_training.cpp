#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"
#include "bikeflow/training.hpp"
#include "helpers.hpp"

using namespace bikeflow;

namespace {

std::vector<SequenceSample> toy_samples(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<SequenceSample> out;
    for (std::size_t i = 0; i < n; ++i) {
        SequenceSample s;
        s.x = testing::random_matrix(6, 3, rng);
        double m = 0;
        for (std::size_t t = 0; t < 6; ++t) m += s.x(t, 0) - 0.5 * s.x(t, 2);
        s.y = 0.3 * m + 0.2 * rng.normal();
        out.push_back(std::move(s));
    }
    return out;
}

StandardizationStats toy_stats() {
    StandardizationStats s;
    s.feature_names = {"a", "b", "c"};
    s.feature_mean = {0, 0, 0};
    s.feature_std = {1, 1, 1};
    return s;
}

ModelConfig toy_model(Architecture arch = Architecture::lstm_mdn) {
    ModelConfig c;
    c.architecture = arch;
    c.hidden = 4;
    c.components = 2;
    c.dense_width = 3;
    c.features = 3;
    c.mlp_width = 6;
    c.dropout = 0.1;
    return c;
}

TrainConfig toy_train(int epochs) {
    TrainConfig t;
    t.batch_size = 32;
    t.max_epochs = epochs;
    t.patience = 1000;
    t.seed = 5;
    t.learning_rate = 1e-2;
    return t;
}

bool same_weights(const ModelConfig& cfg, ModelWeights a, ModelWeights b) {
    auto va = a.tensors(cfg), vb = b.tensors(cfg);
    for (std::size_t t = 0; t < va.size(); ++t)
        if (!std::equal(va[t].values.begin(), va[t].values.end(), vb[t].values.begin())) return false;
    return true;
}

}  // namespace

TEST_CASE("split sizes and rounding") {
    auto s = split_dataset(100, 1);
    CHECK(s.train.size() == 70);
    CHECK(s.validation.size() == 10);
    CHECK(s.test.size() == 20);
    auto r = split_dataset(101, 1);
    CHECK(r.train.size() == 70);
    CHECK(r.validation.size() == 10);
    CHECK(r.test.size() == 21);
    CHECK_THROWS_AS(split_dataset(9, 1), DomainError);
}

TEST_CASE("split is a deterministic partition") {
    auto a = split_dataset(1000, 77), b = split_dataset(1000, 77), c = split_dataset(1000, 78);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
    std::set<std::size_t> all;
    for (auto* part : {&a.train, &a.validation, &a.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == 1000);
    CHECK(*all.rbegin() == 999);
}

TEST_CASE("adam update rules") {
    TrainConfig cfg;
    Vector w{0.5}, g{0.0}, m{0.0}, v{0.0};
    adam_update(w, g, m, v, 1, cfg);
    CHECK(w[0] == 0.5);

    Vector w1{0.0}, g1{1.0}, m1{0.0}, v1{0.0};
    adam_update(w1, g1, m1, v1, 1, cfg);
    CHECK(w1[0] == doctest::Approx(-0.000999999990).epsilon(1e-12));

    // Scalar reference for two steps with constant gradient.
    Vector w2{0.2}, g2{0.7}, m2{0.0}, v2{0.0};
    double rw = 0.2, rm = 0, rv = 0;
    for (long t = 1; t <= 2; ++t) {
        adam_update(w2, g2, m2, v2, t, cfg);
        rm = 0.9 * rm + 0.1 * 0.7;
        rv = 0.999 * rv + 0.001 * 0.49;
        double mh = rm / (1 - std::pow(0.9, double(t)));
        double vh = rv / (1 - std::pow(0.999, double(t)));
        rw -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(std::abs(w2[0] - rw) < 1e-15);
    CHECK_THROWS_AS(adam_update(w2, Vector{1, 2}, m2, v2, 3, cfg), ShapeError);
}

TEST_CASE("train config validation") {
    TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("training lowers the loss for every architecture") {
    auto data = toy_samples(300, 1);
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 240), va(data.begin() + 240, data.end());
    for (auto arch : {Architecture::lstm_mdn, Architecture::lstm_regression, Architecture::lstm_dense_regression,
                      Architecture::mlp_baseline}) {
        ModelConfig mc = toy_model(arch);
        auto model = train(mc, toy_train(30), tr, va, toy_stats());
        REQUIRE(!model.history.empty());
        for (const auto& h : model.history) {
            CHECK(std::isfinite(h.train_loss));
            CHECK(std::isfinite(h.val_loss));
        }
        CAPTURE(to_string(arch));
        CHECK(model.history.back().val_loss < model.history.front().val_loss);
        double best = model.history[model.best_epoch - 1].val_loss;
        CHECK(best <= model.history.back().val_loss);
        CHECK(dataset_loss(mc, model.weights, va) == doctest::Approx(best).epsilon(1e-12));
        CHECK(model.residual_variance > 0.0);
    }
}

TEST_CASE("training is deterministic") {
    auto data = toy_samples(200, 2);
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 150), va(data.begin() + 150, data.end());
    ModelConfig mc = toy_model();
    auto a = train(mc, toy_train(5), tr, va, toy_stats());
    auto b = train(mc, toy_train(5), tr, va, toy_stats());
    CHECK(serialize_model(a) == serialize_model(b));
    TrainConfig other = toy_train(5);
    other.seed = 6;
    auto c = train(mc, other, tr, va, toy_stats());
    CHECK(serialize_model(a) != serialize_model(c));
}

TEST_CASE("early stopping halts at best epoch plus patience and keeps the best weights") {
    auto data = toy_samples(120, 3);
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 100), va(data.begin() + 100, data.end());
    ModelConfig mc = toy_model();
    for (int best_epoch : {1, 4}) {
        for (int patience : {1, 3}) {
            TrainConfig tc = toy_train(50);
            tc.patience = patience;
            TrainHooks hooks;
            hooks.validation_override = [best_epoch](int epoch, double) {
                return epoch <= best_epoch ? 10.0 - epoch : 10.0 + epoch;
            };
            auto model = train(mc, tc, tr, va, toy_stats(), hooks);
            CHECK(model.epochs_run() == best_epoch + patience);
            CHECK(model.best_epoch == best_epoch);

            TrainConfig ref = toy_train(best_epoch);
            auto prefix = train(mc, ref, tr, va, toy_stats(), hooks);
            CHECK(same_weights(mc, model.weights, prefix.weights));
        }
    }
}

TEST_CASE("improvements below the threshold do not reset patience") {
    auto data = toy_samples(60, 4);
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 50), va(data.begin() + 50, data.end());
    TrainConfig tc = toy_train(50);
    tc.patience = 3;
    TrainHooks hooks;
    hooks.validation_override = [](int epoch, double) { return 1.0 - 1e-7 * epoch; };
    auto model = train(toy_model(), tc, tr, va, toy_stats(), hooks);
    CHECK(model.epochs_run() == 4);
    CHECK(model.best_epoch == 1);
}

TEST_CASE("non-finite loss raises a training error naming the epoch") {
    auto data = toy_samples(60, 5);
    data[3].y = NAN;
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 50), va(data.begin() + 50, data.end());
    try {
        train(toy_model(), toy_train(3), tr, va, toy_stats());
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(e.epoch() == 1);
        CHECK(e.batch() >= 1);
    }
}

TEST_CASE("shape mismatch is rejected") {
    auto data = toy_samples(20, 6);
    ModelConfig mc = toy_model();
    mc.features = 4;
    CHECK_THROWS_AS(train(mc, toy_train(1), data, data, toy_stats()), ShapeError);
}

TEST_CASE("model file round-trip is bit exact") {
    auto data = toy_samples(100, 7);
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 80), va(data.begin() + 80, data.end());
    for (auto arch : {Architecture::lstm_mdn, Architecture::lstm_dense_regression, Architecture::mlp_baseline}) {
        ModelConfig mc = toy_model(arch);
        auto model = train(mc, toy_train(2), tr, va, toy_stats());
        auto dir = testing::temp_dir("roundtrip");
        auto path = (dir / "m.txt").string();
        save_model(model, path);
        auto loaded = load_model(path);
        auto path2 = (dir / "m2.txt").string();
        save_model(loaded, path2);
        CHECK(read_text_file(path) == read_text_file(path2));

        RngStream rng(9);
        for (int i = 0; i < 100; ++i) {
            Matrix x = testing::random_matrix(6, 3, rng);
            Prediction a = model.predict(x), b = loaded.predict(x);
            CHECK(a.mean() == b.mean());
            if (a.is_mixture) {
                CHECK(a.mixture.alpha == b.mixture.alpha);
                CHECK(a.mixture.nu == b.mixture.nu);
            }
        }
        CHECK(loaded.history.size() == model.history.size());
        CHECK(loaded.residual_variance == model.residual_variance);
        CHECK(loaded.stats.feature_names == model.stats.feature_names);
    }
}

TEST_CASE("model file errors are distinguished") {
    auto data = toy_samples(40, 8);
    auto model = train(toy_model(), toy_train(1), data, data, toy_stats());
    const std::string text = serialize_model(model);

    auto kind_of = [](const std::string& t) {
        try {
            deserialize_model(t);
        } catch (const ModelFormatError& e) {
            return e.kind();
        }
        FAIL("expected ModelFormatError");
        return ModelFormatError::Kind::malformed;
    };

    std::string version = text;
    version.replace(version.find(" 1\n"), 3, " 9\n");
    CHECK(kind_of(version) == ModelFormatError::Kind::version_mismatch);

    CHECK(kind_of(text.substr(0, text.size() / 2)) == ModelFormatError::Kind::truncated);

    std::string renamed = text;
    renamed.replace(renamed.find("block lstm.W_ox"), 15, "block lstm.W_zz");
    try {
        deserialize_model(renamed);
        FAIL("expected error");
    } catch (const ModelFormatError& e) {
        CHECK(e.kind() == ModelFormatError::Kind::bad_block);
        CHECK(std::string(e.what()).find("lstm.W_zz") != std::string::npos);
    }

    std::string reshaped = text;
    auto pos = reshaped.find("block head.b 1 6");
    REQUIRE(pos != std::string::npos);
    reshaped.replace(pos, 16, "block head.b 1 7");
    CHECK(kind_of(reshaped) == ModelFormatError::Kind::shape_mismatch);
}

TEST_CASE("history csv") {
    std::vector<EpochRecord> h{{1, 0.5, 0.25}, {2, 0.4, 0.2}};
    std::string csv = history_csv(h);
    CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
