#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "bikeflow/errors.hpp"
#include "bikeflow/mdn.hpp"
#include "helpers.hpp"
#include "quadrature.hpp"

using namespace bikeflow;

namespace {

MdnHeadWeights random_head(std::size_t k, std::size_t a, RngStream& rng) {
    MdnHeadWeights w = MdnHeadWeights::zeros(k, a);
    for (double& v : w.W.data()) v = 0.5 * rng.normal();
    for (double& v : w.b) v = 0.5 * rng.normal();
    return w;
}

MixtureParams random_mixture(std::size_t a, RngStream& rng) {
    Vector o(3 * a);
    for (std::size_t i = 0; i < a; ++i) {
        o[i] = rng.normal(0, 2);
        o[a + i] = rng.normal(0, 3);
        o[2 * a + i] = rng.normal(-1, 2);
    }
    return mixture_from_outputs(o, a);
}

const double kStdNormalEntropy = 0.5 * std::log(2 * std::numbers::pi) + 0.5;

}  // namespace

TEST_CASE("zero head gives uniform weights, zero means, unit variances") {
    MdnHeadWeights w = MdnHeadWeights::zeros(4, 6);
    MixtureParams p = mdn_params(Vector(4, 0.3), w);
    REQUIRE(p.components() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(p.alpha[i] == doctest::Approx(1.0 / 6).epsilon(1e-15));
        CHECK(p.mu[i] == 0.0);
        CHECK(p.nu[i] == 1.0);
    }
}

TEST_CASE("variance bias of ln 4 gives variance 4") {
    MdnHeadWeights w = MdnHeadWeights::zeros(3, 2);
    w.b[4] = w.b[5] = std::log(4.0);
    MixtureParams p = mdn_params(Vector{1, 2, 3}, w);
    CHECK(p.nu[0] == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(p.nu[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("head matches a scalar oracle") {
    RngStream rng(41);
    const std::size_t k = 8, a = 3;
    MdnHeadWeights w = random_head(k, a, rng);
    Vector h(k);
    for (auto& v : h) v = rng.normal();
    MixtureParams p = mdn_params(h, w);
    Vector o(3 * a);
    for (std::size_t j = 0; j < 3 * a; ++j) {
        o[j] = w.b[j];
        for (std::size_t q = 0; q < k; ++q) o[j] += w.W(q, j) * h[q];
    }
    double z = 0;
    for (std::size_t i = 0; i < a; ++i) z += std::exp(o[i]);
    for (std::size_t i = 0; i < a; ++i) {
        CHECK(p.alpha[i] == doctest::Approx(std::exp(o[i]) / z).epsilon(1e-12));
        CHECK(p.mu[i] == doctest::Approx(o[a + i]).epsilon(1e-12));
        CHECK(p.nu[i] == doctest::Approx(std::exp(o[2 * a + i])).epsilon(1e-12));
    }
}

TEST_CASE("variance output is clamped") {
    Vector o{0.0, 0.0, 0.0, 0.0, -500.0, 500.0};
    MixtureParams p = mixture_from_outputs(o, 2);
    CHECK(p.nu[0] == doctest::Approx(std::exp(-20.0)).epsilon(1e-15));
    CHECK(p.nu[1] == doctest::Approx(std::exp(20.0)).epsilon(1e-15));
    CHECK(std::isfinite(mixture_log_density(1e6, p)));
    CHECK(std::isfinite(mixture_log_density(0.0, p)));
}

TEST_CASE("head shape errors") {
    MdnHeadWeights w = MdnHeadWeights::zeros(3, 2);
    CHECK_THROWS_AS(mdn_outputs(Vector{1, 2}, w), ShapeError);
    w.b.pop_back();
    CHECK_THROWS_AS(w.validate(), ShapeError);
}

TEST_CASE("mixture log density examples") {
    MixtureParams one{{1.0}, {0.0}, {1.0}};
    CHECK(mixture_log_density(0.0, one) == doctest::Approx(-0.918938533204673).epsilon(1e-14));

    MixtureParams sym{{0.5, 0.5}, {-1.3, 1.3}, {0.7, 0.7}};
    CHECK(mixture_log_density(-1.3, sym) == doctest::Approx(mixture_log_density(1.3, sym)).epsilon(1e-15));

    MixtureParams six{Vector(6, 1.0 / 6), Vector(6, 0.0), Vector(6, 1.0)};
    CHECK(mixture_log_density(0.0, six) == doctest::Approx(-0.918938533204673).epsilon(1e-14));
}

TEST_CASE("nll loss") {
    MixtureParams one{{1.0}, {0.0}, {1.0}};
    std::vector<MixtureParams> ps{one};
    CHECK(nll_loss(Vector{0.0}, ps) == doctest::Approx(0.918938533204673).epsilon(1e-14));
    CHECK_THROWS_AS(nll_loss(Vector{}, std::vector<MixtureParams>{}), DomainError);

    RngStream rng(42);
    std::vector<MixtureParams> batch;
    Vector ys;
    for (int j = 0; j < 20; ++j) {
        batch.push_back(random_mixture(3, rng));
        ys.push_back(rng.normal(0, 3));
    }
    double naive = 0;
    for (std::size_t j = 0; j < ys.size(); ++j) {
        double dens = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            double nu = batch[j].nu[i], r = ys[j] - batch[j].mu[i];
            dens += batch[j].alpha[i] * std::exp(-r * r / (2 * nu)) / std::sqrt(2 * std::numbers::pi * nu);
        }
        naive -= std::log(dens);
    }
    naive /= double(ys.size());
    double loss = nll_loss(ys, batch);
    CHECK(loss == doctest::Approx(naive).epsilon(1e-12));

    auto doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());
    Vector yy = ys;
    yy.insert(yy.end(), ys.begin(), ys.end());
    CHECK(nll_loss(yy, doubled) == doctest::Approx(loss).epsilon(1e-14));
}

TEST_CASE("mdn_backward matches central differences") {
    RngStream rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t k = 4, a = 3;
        MdnHeadWeights w = random_head(k, a, rng);
        Vector h(k);
        for (auto& v : h) v = rng.normal();
        double y = rng.normal(0, 2);
        auto loss = [&](const MdnHeadWeights& ww, const Vector& hh) {
            return -mixture_log_density(y, mdn_params(hh, ww));
        };
        auto g = mdn_backward(y, h, w);
        const double eps = 1e-5;
        double worst = 0;
        MdnHeadWeights probe = w;
        for (std::size_t i = 0; i < w.W.size(); ++i) {
            double orig = probe.W.data()[i];
            probe.W.data()[i] = orig + eps;
            double up = loss(probe, h);
            probe.W.data()[i] = orig - eps;
            double down = loss(probe, h);
            probe.W.data()[i] = orig;
            worst = std::max(worst, testing::rel_err((up - down) / (2 * eps), g.dW.data()[i]));
        }
        for (std::size_t i = 0; i < w.b.size(); ++i) {
            double orig = probe.b[i];
            probe.b[i] = orig + eps;
            double up = loss(probe, h);
            probe.b[i] = orig - eps;
            double down = loss(probe, h);
            probe.b[i] = orig;
            worst = std::max(worst, testing::rel_err((up - down) / (2 * eps), g.db[i]));
        }
        Vector hp = h;
        for (std::size_t q = 0; q < k; ++q) {
            double orig = hp[q];
            hp[q] = orig + eps;
            double up = loss(w, hp);
            hp[q] = orig - eps;
            double down = loss(w, hp);
            hp[q] = orig;
            worst = std::max(worst, testing::rel_err((up - down) / (2 * eps), g.dh[q]));
        }
        CHECK(worst < 1e-4);

        double sum_alpha = 0;
        for (std::size_t i = 0; i < a; ++i) sum_alpha += g.db[i];
        CHECK(std::abs(sum_alpha) < 1e-12);
    }
}

TEST_CASE("symmetric mixture has zero gradient for a shared mean shift") {
    Vector o{0.0, 0.0, -1.0, 1.0, 0.2, 0.2};
    Vector g = mdn_output_gradient(0.0, o, 2);
    CHECK(std::abs(g[2] + g[3]) < 1e-15);
}

TEST_CASE("degenerate component draws its mean") {
    MixtureParams p{{0.0, 1.0}, {5.0, -2.5}, {1.0, 1e-12}};
    RngStream rng(44);
    for (int i = 0; i < 100; ++i) {
        std::size_t c = 99;
        double y = sample(p, rng, &c);
        CHECK(c == 1);
        CHECK(std::abs(y + 2.5) < 1e-5);
    }
}

TEST_CASE("sampling matches analytic moments and weights") {
    RngStream rng(45);
    for (int trial = 0; trial < 5; ++trial) {
        MixtureParams p = random_mixture(4, rng);
        const int n = 100000;
        double s = 0;
        std::vector<int> counts(4, 0);
        for (int i = 0; i < n; ++i) {
            std::size_t c;
            s += sample(p, rng, &c);
            ++counts[c];
        }
        double se = std::sqrt(mixture_variance(p) / n);
        CHECK(std::abs(s / n - mixture_mean(p)) < 3.5 * se);
        for (std::size_t i = 0; i < 4; ++i) {
            double sef = std::sqrt(p.alpha[i] * (1 - p.alpha[i]) / n);
            CHECK(std::abs(double(counts[i]) / n - p.alpha[i]) <= 3.5 * sef + 1e-12);
        }
    }
}

TEST_CASE("analytic moments") {
    MixtureParams one{{1.0}, {2.5}, {0.3}};
    CHECK(mixture_mean(one) == 2.5);
    CHECK(mixture_variance(one) == doctest::Approx(0.3).epsilon(1e-15));

    MixtureParams two{{0.5, 0.5}, {-1.0, 1.0}, {1e-300, 1e-300}};
    CHECK(mixture_mean(two) == 0.0);
    CHECK(mixture_variance(two) == doctest::Approx(1.0).epsilon(1e-15));

    RngStream rng(46);
    for (int trial = 0; trial < 5; ++trial) {
        MixtureParams p = random_mixture(3, rng);
        double m = testing::mixture_integral(p, [](double y) { return y; });
        double m2 = testing::mixture_integral(p, [m](double y) { return (y - m) * (y - m); });
        CHECK(std::abs(m - mixture_mean(p)) < 1e-8);
        CHECK(std::abs(m2 - mixture_variance(p)) < 1e-8 * std::max(1.0, m2));
    }
}

TEST_CASE("density integrates to one") {
    RngStream rng(47);
    for (int trial = 0; trial < 50; ++trial) {
        MixtureParams p = random_mixture(1 + rng.below(8), rng);
        double total = 0;
        for (double a : p.alpha) total += a;
        CHECK(std::abs(total - 1.0) < 1e-12);
        CHECK(std::abs(testing::mixture_integral(p, [](double) { return 1.0; }) - 1.0) < 1e-6);
    }
}

TEST_CASE("unconditional standard normal has the Gaussian entropy as NLL") {
    MixtureParams p{{1.0}, {0.0}, {1.0}};
    RngStream rng(48);
    const int n = 100000;
    double s = 0;
    for (int i = 0; i < n; ++i) s -= mixture_log_density(rng.normal(), p);
    CHECK(std::abs(s / n - kStdNormalEntropy) < 3.5 * std::sqrt(0.5 / n));
}

TEST_CASE("validate") {
    MixtureParams good{{0.4, 0.6}, {0, 1}, {1, 1}};
    CHECK_NOTHROW(good.validate());
    MixtureParams bad_sum{{0.4, 0.4}, {0, 1}, {1, 1}};
    CHECK_THROWS_AS(bad_sum.validate(), DomainError);
    MixtureParams bad_nu{{0.4, 0.6}, {0, 1}, {1, 0}};
    CHECK_THROWS_AS(bad_nu.validate(), DomainError);
}
