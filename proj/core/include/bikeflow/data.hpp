#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bikeflow/numerics.hpp"
#include "bikeflow/timeutil.hpp"

namespace bikeflow {

/// One 10-minute weather observation. Empty CSV cells are kept as nullopt.
struct WeatherRecord {
    TimePoint timestamp;
    std::optional<double> temp_c;
    std::optional<double> pressure_hpa;
    std::optional<double> wind_ms;
    std::optional<double> gust_ms;
    std::optional<double> wind_dir_deg;
    std::optional<double> precip_mm;
    std::optional<double> visibility_m;
    std::optional<double> snow_cm;

    bool wind_imputed = false;  // wind copied from the fallback station
    bool wind_missing = false;  // still missing after imputation

    /// Every field other than wind speed is present.
    bool is_clean() const noexcept;
};

inline const std::vector<std::string> kWeatherHeader = {
    "timestamp", "temp_c", "pressure_hpa", "wind_ms", "gust_ms",
    "wind_dir_deg", "precip_mm", "visibility_m", "snow_cm"};

/// Reads a weather CSV, sorted by timestamp. Throws ParseError naming the line
/// on malformed rows and DataError on duplicate timestamps.
std::vector<WeatherRecord> load_weather(const std::string& path);
std::string weather_csv(std::span<const WeatherRecord> records);

struct ImputationResult {
    std::vector<WeatherRecord> records;
    std::size_t imputed = 0;
    std::size_t still_missing = 0;
};

/// Fills missing wind speed from the fallback record with the identical
/// timestamp. Observed values are never overwritten; rows missing in both
/// are flagged.
ImputationResult impute_wind(std::span<const WeatherRecord> primary,
                             std::span<const WeatherRecord> fallback);

struct CountRecord {
    std::string station_id;
    TimePoint hour;
    double volume = 0.0;
    double aadct = 0.0;
    double aawct = 0.0;
};

inline const std::vector<std::string> kCountsHeader = {"station_id", "hour_utc", "volume", "aadct",
                                                      "aawct"};

/// Reads an hourly counts CSV sorted by (station, hour).
std::vector<CountRecord> load_counts(const std::string& path);
std::string counts_csv(std::span<const CountRecord> records);

/// Public holidays. Covers every day of each year from the first to the last
/// year that contains a listed date.
class HolidayCalendar {
public:
    HolidayCalendar() = default;
    explicit HolidayCalendar(std::set<Date> dates);

    bool covers(Date d) const noexcept;
    /// Throws DomainError when the date is outside the covered years.
    bool is_holiday(Date d) const;
    const std::set<Date>& dates() const noexcept { return dates_; }

private:
    std::set<Date> dates_;
    int first_year_ = 0;
    int last_year_ = -1;
};

HolidayCalendar load_holidays(const std::string& path);
std::string holidays_csv(const HolidayCalendar& calendar);

enum class DayType { weekday, saturday, sunday_holiday };

std::string_view to_string(DayType t) noexcept;
DayType parse_day_type(std::string_view text);
DayType day_type(Date d, bool holiday) noexcept;

struct TemporalFeatures {
    int hour = 0;         // 0..23
    int day_of_week = 0;  // 0 = Monday
    int week_of_year = 1; // ISO week
    int holiday = 0;
};

TemporalFeatures encode_temporal(TimePoint t, const HolidayCalendar& calendar);

/// Columns available to the sequence model, one value per 10-minute row.
enum class Feature {
    temp_c, pressure_hpa, wind_ms, gust_ms, wind_dir_deg, precip_mm, visibility_m, snow_cm,
    wind_dir_sin, wind_dir_cos, wind_imputed, wind_missing,
    hour, day_of_week, week_of_year, holiday,
    aadct, aawct
};

std::string_view to_string(Feature f) noexcept;
Feature parse_feature(std::string_view name);

/// The 18-column default: 8 weather fields, wind direction sine/cosine, two
/// wind missingness flags, 4 temporal codes, AADCT and AAWCT.
std::vector<Feature> default_roster();

inline constexpr std::size_t kStepsPerHour = 6;

/// One hourly target with its six 10-minute predictor rows.
struct SequenceSample {
    Matrix x;  // 6 × D
    double y = 0.0;
    std::string station_id;
    TimePoint hour;
    double aadct = 0.0;
    double aawct = 0.0;
    bool holiday = false;
};

struct DropRecord {
    std::string station_id;
    TimePoint hour;
    std::string reason;
};

struct AssemblyResult {
    std::vector<SequenceSample> samples;  // raw (unstandardized) features
    std::vector<DropRecord> drops;
};

/// Builds raw samples: for every count, the six weather rows at minutes
/// 0..50 of the hour. Hours lacking six clean rows are dropped and reported.
/// Missing wind speed (after imputation) is left as NaN, with the
/// wind_missing flag set.
AssemblyResult assemble_raw(std::span<const WeatherRecord> weather,
                            std::span<const CountRecord> counts, const HolidayCalendar& calendar,
                            std::span<const Feature> roster);

std::string drop_report_csv(std::span<const DropRecord> drops);

struct StandardizationStats {
    std::vector<std::string> feature_names;
    Vector feature_mean;
    Vector feature_std;
    double target_mean = 0.0;
    double target_std = 1.0;

    std::size_t features() const noexcept { return feature_mean.size(); }
    double standardize_target(double y) const noexcept { return (y - target_mean) / target_std; }
    double invert_target(double z) const noexcept { return z * target_std + target_mean; }
};

/// Z-score statistics over every row of the training samples (NaN cells are
/// skipped). Throws ConfigError naming any zero-variance feature.
StandardizationStats fit_standardization(std::span<const SequenceSample> train,
                                         std::span<const std::string> feature_names);

/// Applies the statistics; NaN cells become 0 (the training mean).
SequenceSample standardize(const SequenceSample& raw, const StandardizationStats& stats);
std::vector<SequenceSample> standardize(std::span<const SequenceSample> raw,
                                        const StandardizationStats& stats);

/// assemble_raw followed by standardize.
AssemblyResult assemble_sequences(std::span<const WeatherRecord> weather,
                                  std::span<const CountRecord> counts,
                                  const HolidayCalendar& calendar, std::span<const Feature> roster,
                                  const StandardizationStats& stats);

/// Raw sample table as written by the ingest step.
struct SampleSet {
    std::vector<std::string> feature_names;
    std::vector<SequenceSample> samples;
};

std::string samples_csv(const SampleSet& set);
SampleSet load_samples(const std::string& path);

std::vector<std::string> feature_names(std::span<const Feature> roster);

}  // namespace bikeflow
