#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bikeflow/baselines.hpp"
#include "bikeflow/data.hpp"
#include "bikeflow/numerics.hpp"

namespace bikeflow {

using HourlySeries = std::map<TimePoint, double>;

struct ExposureSeries {
    HourlySeries values;
    std::set<TimePoint> incomplete;  // hours where some station had no estimate
    std::size_t stations = 0;
};

/// Sums per-station hourly estimates into a city-wide series.
ExposureSeries aggregate_exposure(std::span<const StationHourEstimate> estimates);

/// AAWCT/24 summed over the stations counted at each hour.
ExposureSeries aawct_exposure(std::span<const CountRecord> counts);

/// Hour-level weather built from six clean 10-minute rows.
struct HourlyWeather {
    double temp_c = 0.0;
    double wind_ms = 0.0;  // NaN when every row lacks wind speed
    double precip_mm = 0.0;
    double visibility_m = 0.0;
};

std::map<TimePoint, HourlyWeather> hourly_weather(std::span<const WeatherRecord> weather);

struct CrashRow {
    TimePoint hour;
    double crashes = 0.0;
    double log_visibility = 0.0;
    double bank_holiday = 0.0;
    double morning_peak = 0.0;    // weekday hours starting 07 and 08
    double afternoon_peak = 0.0;  // weekday hours starting 15 and 16
    double temp_below_0 = 0.0;
    double temp_above_20 = 0.0;
    double wind_below_5 = 0.0;
    double wind_above_9 = 0.0;
    double precipitation = 0.0;
    double exposure = 0.0;
};

/// Fills every field except `crashes` and `exposure`.
CrashRow crash_covariates(TimePoint hour, const HourlyWeather& w, bool holiday);

struct CrashDataset {
    std::vector<CrashRow> rows;
    std::size_t dropped_weather = 0;  // crash hours without complete weather
};

/// Joins crash counts with hourly weather and the holiday calendar.
CrashDataset build_crash_dataset(const HourlySeries& crashes, std::span<const WeatherRecord> weather,
                                 const HolidayCalendar& calendar);

/// Column names of the design matrix, intercept first.
const std::vector<std::string>& crash_design_names();
/// n × 11 design: intercept, ln visibility, bank holiday, ln exposure, the
/// two peak flags, the four temperature/wind flags and precipitation.
Matrix crash_design(std::span<const CrashRow> rows);

struct GlmFit {
    std::vector<std::string> names;
    Vector beta;
    Vector std_error;
    Vector z;
    Vector p_value;
    double log_likelihood = 0.0;
    double deviance = 0.0;
    double pearson_chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    std::size_t observations = 0;
    Vector trace;  // log-likelihood after each iteration
    Matrix covariance;
};

struct PoissonOptions {
    int max_iterations = 100;
    double score_tol = 1e-8;
    double step_tol = 1e-6;
};

/// Newton-Raphson maximization of the Poisson log-likelihood with a log link
/// and step halving. Throws DesignError if X lacks full column rank and
/// DomainError for negative or non-integer counts. Non-convergence is
/// reported through `converged` and `trace`.
GlmFit poisson_fit(const Matrix& x, std::span<const double> y, std::vector<std::string> names = {},
                   const PoissonOptions& options = {});

double poisson_log_likelihood(std::span<const double> y, std::span<const double> mu);
double deviance(std::span<const double> y, std::span<const double> mu);
double pearson_chi2(std::span<const double> y, std::span<const double> mu);

struct NamedExposure {
    std::string name;
    HourlySeries values;
};

struct ExposureFit {
    std::string name;
    std::optional<GlmFit> fit;
    std::string error;
};

struct ExposureComparison {
    std::vector<ExposureFit> models;
    std::size_t observations = 0;
    std::size_t dropped_missing_exposure = 0;
};

/// Fits one model per exposure on the hours where every exposure is present
/// and positive. A failing fit is recorded and the others still run.
ExposureComparison compare_exposures(std::span<const CrashRow> rows, std::span<const NamedExposure> exposures);

std::string comparison_csv(const ExposureComparison& cmp);
std::string comparison_text(const ExposureComparison& cmp);

/// hour_utc,crash_count
HourlySeries load_crashes(const std::string& path);
std::string crashes_csv(const HourlySeries& crashes);
/// hour_utc,exposure
HourlySeries load_exposure(const std::string& path);
std::string exposure_csv(const HourlySeries& exposure);

}  // namespace bikeflow
