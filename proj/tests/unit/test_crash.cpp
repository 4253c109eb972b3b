#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bikeflow/crash.hpp"
#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"
#include "bikeflow/synthetic.hpp"
#include "bikeflow/timeutil.hpp"
#include "helpers.hpp"

using namespace bikeflow;

namespace {

TimePoint at(const std::string& text) {
    TimePoint t;
    REQUIRE(parse_timestamp(text, t));
    return t;
}

struct Glm {
    Matrix x;
    Vector y;
};

Glm three_covariates(std::size_t n, std::uint64_t seed) {
    RngStream rng(seed);
    Glm g{Matrix(n, 3), Vector(n)};
    for (std::size_t i = 0; i < n; ++i) {
        g.x(i, 0) = 1.0;
        g.x(i, 1) = rng.normal();
        g.x(i, 2) = rng.uniform() < 0.3 ? 1.0 : 0.0;
        g.y[i] = static_cast<double>(rng.poisson(std::exp(0.4 + 0.5 * g.x(i, 1) - 0.7 * g.x(i, 2))));
    }
    return g;
}

// Plain gradient ascent on the mean log-likelihood.
Vector gradient_ascent(const Glm& g) {
    const std::size_t n = g.x.rows(), p = g.x.cols();
    Vector beta(p, 0.0), grad(p);
    for (int it = 0; it < 2'000'000; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = 0;
            for (std::size_t j = 0; j < p; ++j) eta += g.x(i, j) * beta[j];
            const double r = g.y[i] - std::exp(eta);
            for (std::size_t j = 0; j < p; ++j) grad[j] += r * g.x(i, j) / double(n);
        }
        double norm = 0;
        for (std::size_t j = 0; j < p; ++j) {
            beta[j] += 0.2 * grad[j];
            norm = std::max(norm, std::abs(grad[j]));
        }
        if (norm < 1e-13) break;
    }
    return beta;
}

Vector fitted(const Matrix& x, const Vector& beta) {
    Vector mu(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double eta = 0;
        for (std::size_t j = 0; j < x.cols(); ++j) eta += x(i, j) * beta[j];
        mu[i] = std::exp(eta);
    }
    return mu;
}

GeneratorConfig small_panel() {
    GeneratorConfig c;
    c.seed = 21;
    c.days = 365;
    c.stations = 2;
    return c;
}

}  // namespace

TEST_CASE("exposure aggregation sums stations and flags gaps") {
    const TimePoint t = at("2021-01-04T08:00:00Z");
    const TimePoint u = t + std::chrono::hours{1};
    std::vector<StationHourEstimate> est{{"a", t, 100}, {"b", t, 200}, {"a", u, 50}};
    auto s = aggregate_exposure(est);
    CHECK(s.values.at(t) == 300);
    CHECK(s.values.at(u) == 50);
    CHECK(s.stations == 2);
    CHECK(s.incomplete.count(u) == 1);
    CHECK(s.incomplete.count(t) == 0);

    std::vector<StationHourEstimate> single{{"a", t, 12.5}};
    CHECK(aggregate_exposure(single).values.at(t) == 12.5);

    std::vector<CountRecord> counts{{"a", t, 7, 2000, 2400}, {"b", t, 9, 1000, 4800}, {"a", u, 3, 2000, 2400}};
    auto w = aawct_exposure(counts);
    CHECK(w.values.at(t) == doctest::Approx(300));
    CHECK(w.values.at(u) == doctest::Approx(100));
}

TEST_CASE("intercept-only fit equals the log of the mean") {
    const std::size_t n = 1000;
    Matrix x(n, 1, 1.0);
    Vector y(n, 0.0);
    for (std::size_t i = 0; i < 80; ++i) y[i * 12] = 1.0;
    auto fit = poisson_fit(x, y);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.beta[0] - std::log(0.08)) < 1e-10);
    CHECK(fit.beta[0] == doctest::Approx(-2.5257).epsilon(1e-4));
    CHECK(fit.std_error[0] == doctest::Approx(1 / std::sqrt(80.0)).epsilon(1e-8));
    CHECK(fit.observations == n);
}

TEST_CASE("all-zero counts do not converge") {
    Matrix x(50, 1, 1.0);
    Vector y(50, 0.0);
    auto fit = poisson_fit(x, y);
    CHECK_FALSE(fit.converged);
    REQUIRE(fit.trace.size() >= 2);
    for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1] - 1e-12);
}

TEST_CASE("three-covariate fit matches gradient ascent") {
    Glm g = three_covariates(300, 3);
    auto fit = poisson_fit(g.x, g.y, {"const", "x", "flag"});
    REQUIRE(fit.converged);
    Vector oracle = gradient_ascent(g);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(fit.beta[j] - oracle[j]) < 1e-6);

    Vector mu = fitted(g.x, fit.beta);
    for (std::size_t j = 0; j < 3; ++j) {
        double score = 0;
        for (std::size_t i = 0; i < g.y.size(); ++i) score += (g.y[i] - mu[i]) * g.x(i, j);
        CHECK(std::abs(score) < 1e-6);
    }
    for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1] - 1e-9);
    CHECK(fit.log_likelihood == doctest::Approx(poisson_log_likelihood(g.y, mu)).epsilon(1e-12));
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(fit.p_value[j] >= 0.0);
        CHECK(fit.p_value[j] <= 1.0);
        CHECK(fit.z[j] == doctest::Approx(fit.beta[j] / fit.std_error[j]));
        CHECK(fit.p_value[j] == doctest::Approx(2 * (1 - normal_cdf(std::abs(fit.z[j])))).epsilon(1e-9));
        for (std::size_t k = 0; k < 3; ++k) CHECK(fit.covariance(j, k) == doctest::Approx(fit.covariance(k, j)));
    }
}

TEST_CASE("fit is invariant to row order") {
    Glm g = three_covariates(200, 4);
    Glm r{Matrix(200, 3), Vector(200)};
    for (std::size_t i = 0; i < 200; ++i) {
        const std::size_t src = (i * 37) % 200;
        for (std::size_t j = 0; j < 3; ++j) r.x(i, j) = g.x(src, j);
        r.y[i] = g.y[src];
    }
    auto a = poisson_fit(g.x, g.y), b = poisson_fit(r.x, r.y);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(a.beta[j] - b.beta[j]) < 1e-10);
    CHECK(a.log_likelihood == doctest::Approx(b.log_likelihood).epsilon(1e-12));
}

TEST_CASE("fit input errors") {
    Matrix x(10, 2, 1.0);
    Vector y(10, 1.0);
    CHECK_THROWS_AS(poisson_fit(x, y), DesignError);
    Matrix ok(3, 1, 1.0);
    CHECK_THROWS_AS(poisson_fit(ok, Vector{1, -1, 2}), DomainError);
    CHECK_THROWS_AS(poisson_fit(ok, Vector{1, 0.5, 2}), DomainError);
    CHECK_THROWS_AS(poisson_fit(ok, Vector{1, 2}), ShapeError);
}

TEST_CASE("deviance and pearson statistics") {
    CHECK(deviance(Vector{0}, Vector{1}) == doctest::Approx(2.0));
    CHECK(pearson_chi2(Vector{0}, Vector{1}) == doctest::Approx(1.0));
    Vector y{0, 3, 7, 1}, mu{0.5, 2.5, 8.0, 1.0};
    double d = 0, c = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        d += 2 * ((y[i] > 0 ? y[i] * std::log(y[i] / mu[i]) : 0.0) - (y[i] - mu[i]));
        c += (y[i] - mu[i]) * (y[i] - mu[i]) / mu[i];
    }
    CHECK(std::abs(deviance(y, mu) - d) < 1e-10);
    CHECK(std::abs(pearson_chi2(y, mu) - c) < 1e-10);
    Vector same{1, 2, 5};
    CHECK(deviance(same, same) == 0.0);
    CHECK(pearson_chi2(same, same) == 0.0);
    CHECK(deviance(y, mu) > 0);
    CHECK_THROWS_AS(deviance(Vector{1}, Vector{0}), DomainError);
    CHECK(poisson_log_likelihood(Vector{2}, Vector{3}) == doctest::Approx(2 * std::log(3.0) - 3 - std::log(2.0)));
}

TEST_CASE("covariate flags") {
    HourlyWeather w{-2.0, 10.0, 0.4, 5000};
    auto r = crash_covariates(at("2021-03-02T08:00:00Z"), w, false);
    CHECK(r.morning_peak == 1);
    CHECK(r.afternoon_peak == 0);
    CHECK(r.temp_below_0 == 1);
    CHECK(r.temp_above_20 == 0);
    CHECK(r.wind_above_9 == 1);
    CHECK(r.wind_below_5 == 0);
    CHECK(r.precipitation == 1);
    CHECK(r.log_visibility == doctest::Approx(std::log(5000.0)));
    auto sat = crash_covariates(at("2021-03-06T16:00:00Z"), HourlyWeather{25, 2, 0, 9000}, false);
    CHECK(sat.afternoon_peak == 0);
    CHECK(sat.temp_above_20 == 1);
    CHECK(sat.wind_below_5 == 1);
    CHECK(sat.precipitation == 0);
    auto hol = crash_covariates(at("2021-03-02T16:00:00Z"), HourlyWeather{10, 6, 0, 9000}, true);
    CHECK(hol.bank_holiday == 1);
    CHECK(crash_design_names().size() == 11);
    CHECK(crash_design_names().front() == "intercept");
}

TEST_CASE("exposure comparison on synthetic data") {
    const SyntheticPanel panel = generate(small_panel());
    REQUIRE(!panel.crash_rows.empty());
    RngStream rng(31);
    HourlySeries noisy, lagged;
    for (const auto& [t, v] : panel.true_exposure) noisy[t] = v * std::exp(0.8 * rng.normal());
    for (const auto& [t, v] : panel.true_exposure) lagged[t + std::chrono::hours{5}] = v;

    std::vector<NamedExposure> same{{"a", panel.true_exposure}, {"b", panel.true_exposure}, {"c", panel.true_exposure}};
    auto ident = compare_exposures(panel.crash_rows, same);
    REQUIRE(ident.models.size() == 3);
    for (const auto& m : ident.models) {
        REQUIRE(m.fit);
        CHECK(m.fit->beta == ident.models[0].fit->beta);
    }

    std::vector<NamedExposure> three{{"true", panel.true_exposure}, {"noisy", noisy}, {"lagged", lagged}};
    auto cmp = compare_exposures(panel.crash_rows, three);
    REQUIRE(cmp.models.size() == 3);
    for (const auto& m : cmp.models) {
        REQUIRE(m.fit);
        CHECK(m.fit->converged);
        CHECK(m.fit->observations == cmp.observations);
    }
    CHECK(cmp.dropped_missing_exposure <= 5);
    CHECK(cmp.models[0].fit->log_likelihood > cmp.models[1].fit->log_likelihood);
    CHECK(cmp.models[0].fit->log_likelihood > cmp.models[2].fit->log_likelihood);
    CHECK(comparison_csv(cmp).find("lagged") != std::string::npos);
    CHECK(!comparison_text(cmp).empty());

    HourlySeries constant;
    for (const auto& [t, v] : panel.true_exposure) constant[t] = 1.0;
    std::vector<NamedExposure> with_bad{{"true", panel.true_exposure}, {"flat", constant}};
    auto partial = compare_exposures(panel.crash_rows, with_bad);
    CHECK(partial.models[0].fit.has_value());
    CHECK(!partial.models[1].error.empty());
}

TEST_CASE("crash and exposure files round-trip") {
    auto dir = testing::temp_dir("crash");
    HourlySeries c{{at("2021-01-01T00:00:00Z"), 0}, {at("2021-01-01T01:00:00Z"), 2}};
    write_text_file((dir / "c.csv").string(), crashes_csv(c));
    CHECK(load_crashes((dir / "c.csv").string()) == c);
    HourlySeries e{{at("2021-01-01T00:00:00Z"), 12.25}};
    write_text_file((dir / "e.csv").string(), exposure_csv(e));
    CHECK(load_exposure((dir / "e.csv").string()) == e);
}
