#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bikeflow/config.hpp"
#include "bikeflow/crash.hpp"
#include "bikeflow/data.hpp"
#include "bikeflow/mdn.hpp"

namespace bikeflow {

struct GeneratorConfig {
    std::uint64_t seed = 1;
    int stations = 4;
    Date start = Date{std::chrono::year{2019} / 1 / 1};
    int days = 730;

    // Station traffic levels: AADCT of station s in year y is
    // (aadct_base + s * aadct_step) * (1 + aadct_growth)^y.
    double aadct_base = 3000.0;
    double aadct_step = 1500.0;
    double aadct_growth = 0.06;
    double aawct_ratio = 1.15;

    // True conditional mixture of the hourly volume.
    double temp_coef = 0.03;        // log-volume change per degree above 12 °C
    double rain_factor = 0.8;       // main-component scaling in rainy hours
    double disrupted_base = 0.04;   // weight of the disrupted component
    double disrupted_rain = 0.25;   // extra disrupted weight in rainy hours
    double disrupted_scale = 0.55;  // disrupted mean relative to the main mean
    double noise_cv = 0.08;         // component sd = noise_cv * mean + noise_floor
    double noise_floor = 1.0;

    // Weather process.
    double temp_mean = 9.0;
    double temp_seasonal = 8.0;
    double temp_daily = 4.0;
    double temp_noise = 1.5;
    double wind_mean = 4.5;
    double wind_noise = 2.0;
    double rain_start = 0.01;  // per 10 minutes
    double rain_stop = 0.08;
    double rain_mean_mm = 0.3;
    double wind_outage_primary = 0.002;
    double wind_outage_fallback = 0.01;
    double wind_outage_stop = 0.05;

    // Crash process: log rate linear in the crash design columns.
    double crash_rate = 0.08;
    double crash_log_visibility = -0.1;
    double crash_holiday = -0.2;
    double crash_log_exposure = 1.0;
    double crash_morning = 0.3;
    double crash_afternoon = 0.3;
    double crash_cold = 0.2;
    double crash_hot = -0.1;
    double crash_calm = 0.0;
    double crash_windy = 0.2;
    double crash_rain = 0.3;

    /// Throws ConfigError on invalid values.
    void validate() const;

    /// Keys are "synth.<field>" (start as YYYY-MM-DD).
    KeyValueConfig to_config() const;
    /// Reads "synth.*" keys; missing keys keep their defaults.
    static GeneratorConfig from_config(const KeyValueConfig& kv);

    double aadct(int station, int year_index) const;
    double aawct(int station, int year_index) const;
};

std::string station_name(int station);
/// Inverse of station_name; -1 for an unknown name.
int station_index(const GeneratorConfig& cfg, const std::string& name);

/// Relative intraday profile; averages to 1 over a weekday.
double true_profile(int hour, DayType type);

/// Raw-scale true mixture of the hourly volume.
MixtureParams true_mixture(const GeneratorConfig& cfg, double aadct, int hour, DayType type,
                           const HourlyWeather& weather);

/// One volume draw, truncated at 0.
double draw_volume(const MixtureParams& p, RngStream& rng, bool* truncated = nullptr);

struct SyntheticPanel {
    GeneratorConfig config;
    std::vector<WeatherRecord> weather;           // primary station, wind gaps included
    std::vector<WeatherRecord> fallback_weather;  // wind speed only
    std::vector<CountRecord> counts;
    HolidayCalendar holidays;
    std::vector<CrashRow> crash_rows;  // covariates with the true exposure
    Vector crash_mean;                 // Poisson mean per crash row
    HourlySeries crashes;
    HourlySeries true_exposure;
    double crash_intercept = 0.0;
    std::size_t truncated = 0;
};

SyntheticPanel generate(const GeneratorConfig& cfg);

/// Fresh crash counts for the panel's rates.
HourlySeries simulate_crashes(const SyntheticPanel& panel, RngStream& rng);

/// key=value: the generator configuration plus derived.* quantities.
std::string manifest_text(const SyntheticPanel& panel);

/// Writes weather.csv, weather_fallback.csv, counts.csv, holidays.csv,
/// crashes.csv, exposure_true.csv and manifest.txt into `dir`.
void write_panel(const SyntheticPanel& panel, const std::string& dir);

/// Mean negative log density of the samples under the true mixture, on the
/// standardized target scale when `stats` is given (raw scale otherwise).
/// Samples are raw (unstandardized). Throws ValidationError when a sample's
/// station or AADCT does not match the configuration, or its hour lacks
/// weather.
double true_nll(const GeneratorConfig& cfg, std::span<const WeatherRecord> weather,
                std::span<const SequenceSample> samples, const StandardizationStats* stats = nullptr);

/// The true mixture of one raw sample (standardized when `stats` is given).
MixtureParams true_sample_mixture(const GeneratorConfig& cfg, const std::map<TimePoint, HourlyWeather>& hourly,
                                  const SequenceSample& sample, const StandardizationStats* stats = nullptr);

}  // namespace bikeflow
