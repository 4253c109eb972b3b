#include "bikeflow/crash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

using namespace std::chrono;

ExposureSeries aggregate_exposure(std::span<const StationHourEstimate> estimates) {
    ExposureSeries out;
    std::set<std::string> stations;
    std::map<TimePoint, std::size_t> seen;
    for (const auto& e : estimates) {
        stations.insert(e.station_id);
        out.values[e.hour] += e.estimate;
        ++seen[e.hour];
    }
    out.stations = stations.size();
    for (const auto& [hour, n] : seen)
        if (n < out.stations) out.incomplete.insert(hour);
    return out;
}

ExposureSeries aawct_exposure(std::span<const CountRecord> counts) {
    std::vector<StationHourEstimate> est;
    est.reserve(counts.size());
    for (const auto& c : counts) est.push_back({c.station_id, c.hour, c.aawct / 24.0});
    return aggregate_exposure(est);
}

std::map<TimePoint, HourlyWeather> hourly_weather(std::span<const WeatherRecord> weather) {
    struct Acc {
        int rows = 0;
        int wind_rows = 0;
        double temp = 0, wind = 0, precip = 0, vis = 0;
    };
    std::map<TimePoint, Acc> acc;
    for (const auto& r : weather) {
        if (!r.is_clean()) continue;
        auto& a = acc[floor<hours>(r.timestamp)];
        ++a.rows;
        a.temp += *r.temp_c;
        a.precip += *r.precip_mm;
        a.vis += *r.visibility_m;
        if (r.wind_ms) {
            ++a.wind_rows;
            a.wind += *r.wind_ms;
        }
    }
    std::map<TimePoint, HourlyWeather> out;
    for (const auto& [hour, a] : acc) {
        if (a.rows != static_cast<int>(kStepsPerHour)) continue;
        HourlyWeather w;
        w.temp_c = a.temp / a.rows;
        w.precip_mm = a.precip;
        w.visibility_m = a.vis / a.rows;
        w.wind_ms = a.wind_rows ? a.wind / a.wind_rows : std::numeric_limits<double>::quiet_NaN();
        out.emplace_hint(out.end(), hour, w);
    }
    return out;
}

CrashRow crash_covariates(TimePoint hour, const HourlyWeather& w, bool holiday) {
    CrashRow r;
    r.hour = hour;
    const int h = hour_of(hour);
    const bool weekday = day_of_week(date_of(hour)) < 5;
    r.log_visibility = std::log(std::max(w.visibility_m, 1.0));
    r.bank_holiday = holiday ? 1.0 : 0.0;
    r.morning_peak = weekday && (h == 7 || h == 8) ? 1.0 : 0.0;
    r.afternoon_peak = weekday && (h == 15 || h == 16) ? 1.0 : 0.0;
    r.temp_below_0 = w.temp_c < 0.0 ? 1.0 : 0.0;
    r.temp_above_20 = w.temp_c > 20.0 ? 1.0 : 0.0;
    r.wind_below_5 = w.wind_ms < 5.0 ? 1.0 : 0.0;  // NaN compares false
    r.wind_above_9 = w.wind_ms > 9.0 ? 1.0 : 0.0;
    r.precipitation = w.precip_mm > 0.0 ? 1.0 : 0.0;
    return r;
}

CrashDataset build_crash_dataset(const HourlySeries& crashes, std::span<const WeatherRecord> weather,
                                 const HolidayCalendar& calendar) {
    const auto hw = hourly_weather(weather);
    CrashDataset ds;
    for (const auto& [hour, count] : crashes) {
        auto it = hw.find(hour);
        const Date d = date_of(hour);
        if (it == hw.end() || !calendar.covers(d)) {
            ++ds.dropped_weather;
            continue;
        }
        CrashRow r = crash_covariates(hour, it->second, calendar.is_holiday(d));
        r.crashes = count;
        ds.rows.push_back(r);
    }
    return ds;
}

const std::vector<std::string>& crash_design_names() {
    static const std::vector<std::string> names = {
        "intercept",     "log_visibility", "bank_holiday",  "log_exposure",  "morning_peak", "afternoon_peak",
        "temp_below_0",  "temp_above_20",  "wind_below_5",  "wind_above_9",  "precipitation"};
    return names;
}

Matrix crash_design(std::span<const CrashRow> rows) {
    Matrix x(rows.size(), crash_design_names().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!(r.exposure > 0.0)) {
            throw DomainError("crash design: exposure at " + format_timestamp(r.hour) + " must be positive");
        }
        const double v[] = {1.0,
                            r.log_visibility,
                            r.bank_holiday,
                            std::log(r.exposure),
                            r.morning_peak,
                            r.afternoon_peak,
                            r.temp_below_0,
                            r.temp_above_20,
                            r.wind_below_5,
                            r.wind_above_9,
                            r.precipitation};
        std::copy(std::begin(v), std::end(v), x.row(i).begin());
    }
    return x;
}

namespace {

void check_mu(std::span<const double> y, std::span<const double> mu) {
    if (y.size() != mu.size()) throw ShapeError("y and mu differ in length");
    for (double m : mu)
        if (!(m > 0.0)) throw DomainError("fitted mean must be positive");
}

Vector linear_predictor(const Matrix& x, std::span<const double> beta) {
    Vector eta(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) eta[i] = dot(x.row(i).data(), beta.data(), beta.size());
    return eta;
}

double log_likelihood_eta(const Matrix& x, std::span<const double> y, std::span<const double> beta,
                          std::span<const double> log_fact) {
    const Vector eta = linear_predictor(x, beta);
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ll += y[i] * eta[i] - std::exp(eta[i]) - log_fact[i];
    return ll;
}

}  // namespace

double poisson_log_likelihood(std::span<const double> y, std::span<const double> mu) {
    check_mu(y, mu);
    double ll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) ll += y[i] * std::log(mu[i]) - mu[i] - log_factorial(y[i]);
    return ll;
}

double deviance(std::span<const double> y, std::span<const double> mu) {
    check_mu(y, mu);
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double term = y[i] > 0.0 ? y[i] * std::log(y[i] / mu[i]) : 0.0;
        d += term - (y[i] - mu[i]);
    }
    return 2.0 * d;
}

double pearson_chi2(std::span<const double> y, std::span<const double> mu) {
    check_mu(y, mu);
    double c = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) c += (y[i] - mu[i]) * (y[i] - mu[i]) / mu[i];
    return c;
}

GlmFit poisson_fit(const Matrix& x, std::span<const double> y, std::vector<std::string> names,
                   const PoissonOptions& options) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (y.size() != n) {
        throw ShapeError("poisson_fit: design has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
    }
    if (n == 0 || p == 0) throw DomainError("poisson_fit: empty design");
    if (names.empty())
        for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    if (names.size() != p) throw ShapeError("poisson_fit: names do not match design columns");
    Vector log_fact(n);
    double y_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(y[i] >= 0.0) || y[i] != std::floor(y[i])) {
            throw DomainError("poisson_fit: y[" + std::to_string(i) + "] is not a non-negative integer");
        }
        log_fact[i] = log_factorial(y[i]);
        y_mean += y[i];
    }
    y_mean /= static_cast<double>(n);

    // Rank check on X'X with column scaling.
    {
        Matrix g(p, p, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto r = x.row(i);
            for (std::size_t a = 0; a < p; ++a)
                for (std::size_t b = 0; b <= a; ++b) g(a, b) += r[a] * r[b];
        }
        Vector scale(p);
        for (std::size_t a = 0; a < p; ++a) scale[a] = g(a, a) > 0.0 ? 1.0 / std::sqrt(g(a, a)) : 0.0;
        for (std::size_t a = 0; a < p; ++a) {
            if (scale[a] == 0.0) throw DesignError("poisson_fit: column '" + names[a] + "' is identically zero");
            for (std::size_t b = 0; b <= a; ++b) {
                g(a, b) *= scale[a] * scale[b];
                g(b, a) = g(a, b);
            }
        }
        Matrix l;
        if (!cholesky(g, l, 1e-10)) throw DesignError("poisson_fit: design matrix is rank deficient");
    }

    GlmFit fit;
    fit.names = std::move(names);
    fit.observations = n;
    Vector beta(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        bool ones = true;
        for (std::size_t i = 0; i < n && ones; ++i) ones = x(i, j) == 1.0;
        if (ones) {
            beta[j] = std::log(std::max(y_mean, 1e-10));
            break;
        }
    }

    double ll = log_likelihood_eta(x, y, beta, log_fact);
    Matrix info(p, p);
    Vector score(p);
    auto compute_derivatives = [&](std::span<const double> b) {
        const Vector eta = linear_predictor(x, b);
        info.fill(0.0);
        std::fill(score.begin(), score.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double mu = std::exp(eta[i]);
            auto r = x.row(i);
            axpy(y[i] - mu, r.data(), score.data(), p);
            for (std::size_t a = 0; a < p; ++a) {
                const double w = mu * r[a];
                for (std::size_t c = 0; c <= a; ++c) info(a, c) += w * r[c];
            }
        }
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t c = 0; c < a; ++c) info(c, a) = info(a, c);
    };

    for (int it = 1; it <= options.max_iterations; ++it) {
        compute_derivatives(beta);
        Vector delta;
        try {
            delta = cholesky_solve(info, score);
        } catch (const Error&) {
            break;  // information matrix singular: drifting towards a boundary
        }
        double max_score = 0.0, max_step = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            max_score = std::max(max_score, std::abs(score[j]));
            max_step = std::max(max_step, std::abs(delta[j]));
        }
        if (max_score < options.score_tol && max_step < options.step_tol) {
            fit.converged = true;
            break;
        }
        double step = 1.0;
        Vector trial(p);
        double trial_ll = -std::numeric_limits<double>::infinity();
        // Near the optimum the expected gain is below the rounding of ll, so take the full step.
        const double gain = 0.5 * dot(score.data(), delta.data(), p);
        const bool tiny = gain < 1e-11 * (1.0 + std::abs(ll));
        for (int halving = 0; halving < 40; ++halving) {
            for (std::size_t j = 0; j < p; ++j) trial[j] = beta[j] + step * delta[j];
            trial_ll = log_likelihood_eta(x, y, trial, log_fact);
            if (std::isfinite(trial_ll) && (trial_ll >= ll || tiny)) break;
            step *= 0.5;
        }
        fit.iterations = it;
        if (!(std::isfinite(trial_ll) && (trial_ll >= ll || tiny))) {
            fit.trace.push_back(ll);
            break;
        }
        beta = trial;
        ll = trial_ll;
        fit.trace.push_back(ll);
    }

    fit.beta = beta;
    fit.log_likelihood = ll;
    const Vector eta = linear_predictor(x, beta);
    Vector mu(n);
    for (std::size_t i = 0; i < n; ++i) mu[i] = std::exp(eta[i]);
    bool positive = std::all_of(mu.begin(), mu.end(), [](double m) { return m > 0.0 && std::isfinite(m); });
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (positive) {
        fit.deviance = deviance(y, mu);
        fit.pearson_chi2 = pearson_chi2(y, mu);
    } else {
        fit.deviance = fit.pearson_chi2 = nan;
    }
    fit.std_error.assign(p, nan);
    fit.z.assign(p, nan);
    fit.p_value.assign(p, nan);
    if (fit.converged) {
        compute_derivatives(beta);
        fit.covariance = spd_inverse(info);
        for (std::size_t j = 0; j < p; ++j) {
            fit.std_error[j] = std::sqrt(fit.covariance(j, j));
            fit.z[j] = beta[j] / fit.std_error[j];
            fit.p_value[j] = std::erfc(std::abs(fit.z[j]) / std::sqrt(2.0));
        }
    }
    return fit;
}

ExposureComparison compare_exposures(std::span<const CrashRow> rows, std::span<const NamedExposure> exposures) {
    ExposureComparison cmp;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        bool ok = true;
        for (const auto& e : exposures) {
            auto it = e.values.find(rows[i].hour);
            ok = ok && it != e.values.end() && it->second > 0.0 && std::isfinite(it->second);
        }
        if (ok) keep.push_back(i);
    }
    cmp.observations = keep.size();
    cmp.dropped_missing_exposure = rows.size() - keep.size();
    Vector y(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) y[k] = rows[keep[k]].crashes;
    std::vector<CrashRow> subset(keep.size());
    for (const auto& e : exposures) {
        ExposureFit ef;
        ef.name = e.name;
        try {
            for (std::size_t k = 0; k < keep.size(); ++k) {
                subset[k] = rows[keep[k]];
                subset[k].exposure = e.values.at(subset[k].hour);
            }
            ef.fit = poisson_fit(crash_design(subset), y, crash_design_names());
            if (!ef.fit->converged) ef.error = "did not converge";
        } catch (const Error& err) {
            ef.error = err.what();
        }
        cmp.models.push_back(std::move(ef));
    }
    return cmp;
}

namespace {

std::string num(double v, int decimals) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string p_cell(double p) {
    if (std::isnan(p)) return "nan";
    return p < 0.001 ? "<0.001" : num(p, 3);
}

}  // namespace

std::string comparison_csv(const ExposureComparison& cmp) {
    std::vector<std::string> header = {"term"};
    for (const auto& m : cmp.models) {
        header.push_back(m.name + "_beta");
        header.push_back(m.name + "_p");
    }
    std::string out = csv_join(header) + "\n";
    const auto& names = crash_design_names();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t j = 0; j < names.size(); ++j) {
        std::vector<std::string> row = {names[j]};
        for (const auto& m : cmp.models) {
            row.push_back(format_double(m.fit ? m.fit->beta[j] : nan));
            row.push_back(format_double(m.fit ? m.fit->p_value[j] : nan));
        }
        out += csv_join(row) + "\n";
    }
    auto stat_row = [&](const std::string& name, auto getter) {
        std::vector<std::string> row = {name};
        for (const auto& m : cmp.models) {
            row.push_back(m.fit ? getter(*m.fit) : "nan");
            row.push_back("");
        }
        out += csv_join(row) + "\n";
    };
    stat_row("log_likelihood", [](const GlmFit& f) { return format_double(f.log_likelihood); });
    stat_row("deviance", [](const GlmFit& f) { return format_double(f.deviance); });
    stat_row("pearson_chi2", [](const GlmFit& f) { return format_double(f.pearson_chi2); });
    stat_row("observations", [](const GlmFit& f) { return std::to_string(f.observations); });
    stat_row("converged", [](const GlmFit& f) { return std::string(f.converged ? "1" : "0"); });
    return out;
}

std::string comparison_text(const ExposureComparison& cmp) {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header = {""};
    for (const auto& m : cmp.models) {
        header.push_back(m.name + " beta");
        header.push_back("p-value");
    }
    cells.push_back(header);
    const auto& names = crash_design_names();
    for (std::size_t j = 0; j < names.size(); ++j) {
        std::vector<std::string> row = {names[j]};
        for (const auto& m : cmp.models) {
            row.push_back(m.fit ? num(m.fit->beta[j], 3) : "-");
            row.push_back(m.fit ? p_cell(m.fit->p_value[j]) : "-");
        }
        cells.push_back(row);
    }
    auto stat = [&](const std::string& name, auto getter) {
        std::vector<std::string> row = {name};
        for (const auto& m : cmp.models) {
            row.push_back(m.fit ? getter(*m.fit) : "-");
            row.push_back("");
        }
        cells.push_back(row);
    };
    stat("Log-likelihood", [](const GlmFit& f) { return num(f.log_likelihood, 1); });
    stat("Deviance", [](const GlmFit& f) { return num(f.deviance, 1); });
    stat("Chi-squared", [](const GlmFit& f) { return num(f.pearson_chi2, 1); });
    stat("Observations", [](const GlmFit& f) { return std::to_string(f.observations); });
    std::vector<std::size_t> width(cells[0].size(), 0);
    for (const auto& r : cells)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::string out;
    for (const auto& r : cells) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            const std::string pad(width[c] - r[c].size(), ' ');
            line += c == 0 ? r[c] + pad : "  " + pad + r[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    for (const auto& m : cmp.models)
        if (!m.error.empty()) out += m.name + ": " + m.error + "\n";
    return out;
}

namespace {

HourlySeries load_series(const std::string& path, const std::string& column, bool integral) {
    CsvReader reader(path);
    reader.expect_header({"hour_utc", column});
    HourlySeries out;
    while (auto row = reader.next()) {
        const auto& f = *row;
        if (f.size() != 2) throw ParseError(path, reader.line(), "expected 2 fields, found " + std::to_string(f.size()));
        TimePoint t;
        if (!parse_timestamp(f[0], t)) throw ParseError(path, reader.line(), "bad hour_utc '" + f[0] + "'");
        auto v = parse_double(f[1]);
        if (!v || !std::isfinite(*v) || *v < 0.0 || (integral && *v != std::floor(*v))) {
            throw ParseError(path, reader.line(), column + " '" + f[1] + "' is not a valid value");
        }
        if (!out.emplace(t, *v).second) {
            throw DataError(path + ": duplicate hour " + format_timestamp(t) + " at line " + std::to_string(reader.line()));
        }
    }
    return out;
}

std::string series_csv(const HourlySeries& s, const std::string& column) {
    std::string out = "hour_utc," + column + "\n";
    for (const auto& [t, v] : s) out += format_timestamp(t) + "," + format_double(v) + "\n";
    return out;
}

}  // namespace

HourlySeries load_crashes(const std::string& path) { return load_series(path, "crash_count", true); }
std::string crashes_csv(const HourlySeries& crashes) { return series_csv(crashes, "crash_count"); }
HourlySeries load_exposure(const std::string& path) { return load_series(path, "exposure", false); }
std::string exposure_csv(const HourlySeries& exposure) { return series_csv(exposure, "exposure"); }

}  // namespace bikeflow
