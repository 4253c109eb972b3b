#include "bikeflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

using namespace std::chrono;

namespace {

std::optional<double> parse_cell(CsvReader& reader, const std::string& cell, const char* column) {
    if (cell.empty()) return std::nullopt;
    auto v = parse_double(cell);
    if (!v || !std::isfinite(*v)) {
        throw ParseError(reader.name(), reader.line(),
                         std::string("column ") + column + ": '" + cell + "' is not a number");
    }
    return v;
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

bool WeatherRecord::is_clean() const noexcept {
    return temp_c && pressure_hpa && gust_ms && wind_dir_deg && precip_mm && visibility_m && snow_cm;
}

std::vector<WeatherRecord> load_weather(const std::string& path) {
    CsvReader reader(path);
    reader.expect_header(kWeatherHeader);
    std::vector<WeatherRecord> out;
    while (auto row = reader.next()) {
        const auto& f = *row;
        if (f.size() != kWeatherHeader.size()) {
            throw ParseError(path, reader.line(), "expected " + std::to_string(kWeatherHeader.size()) +
                                                      " fields, found " + std::to_string(f.size()));
        }
        WeatherRecord r;
        if (!parse_timestamp(f[0], r.timestamp)) {
            throw ParseError(path, reader.line(), "bad timestamp '" + f[0] + "'");
        }
        const auto since_midnight = r.timestamp - floor<days>(r.timestamp);
        if (since_midnight % minutes{10} != seconds{0}) {
            throw ParseError(path, reader.line(), "timestamp '" + f[0] + "' is not on the 10-minute grid");
        }
        r.temp_c = parse_cell(reader, f[1], "temp_c");
        r.pressure_hpa = parse_cell(reader, f[2], "pressure_hpa");
        r.wind_ms = parse_cell(reader, f[3], "wind_ms");
        r.gust_ms = parse_cell(reader, f[4], "gust_ms");
        r.wind_dir_deg = parse_cell(reader, f[5], "wind_dir_deg");
        r.precip_mm = parse_cell(reader, f[6], "precip_mm");
        r.visibility_m = parse_cell(reader, f[7], "visibility_m");
        r.snow_cm = parse_cell(reader, f[8], "snow_cm");
        if (r.precip_mm && *r.precip_mm < 0.0) throw ParseError(path, reader.line(), "negative precipitation");
        if (r.visibility_m && *r.visibility_m < 0.0) throw ParseError(path, reader.line(), "negative visibility");
        r.wind_missing = !r.wind_ms;
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const WeatherRecord& a, const WeatherRecord& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].timestamp == out[i - 1].timestamp) {
            throw DataError(path + ": duplicate timestamp " + format_timestamp(out[i].timestamp));
        }
    }
    return out;
}

std::string weather_csv(std::span<const WeatherRecord> records) {
    std::string out = csv_join(kWeatherHeader) + "\n";
    for (const auto& r : records) {
        out += csv_join({format_timestamp(r.timestamp), cell(r.temp_c), cell(r.pressure_hpa),
                         cell(r.wind_ms), cell(r.gust_ms), cell(r.wind_dir_deg), cell(r.precip_mm),
                         cell(r.visibility_m), cell(r.snow_cm)});
        out += "\n";
    }
    return out;
}

ImputationResult impute_wind(std::span<const WeatherRecord> primary,
                             std::span<const WeatherRecord> fallback) {
    std::unordered_map<long long, const WeatherRecord*> by_time;
    by_time.reserve(fallback.size());
    for (const auto& r : fallback) by_time[r.timestamp.time_since_epoch().count()] = &r;

    ImputationResult result;
    result.records.assign(primary.begin(), primary.end());
    for (auto& r : result.records) {
        r.wind_imputed = false;
        if (!r.wind_ms) {
            auto it = by_time.find(r.timestamp.time_since_epoch().count());
            if (it != by_time.end() && it->second->wind_ms) {
                r.wind_ms = it->second->wind_ms;
                r.wind_imputed = true;
                ++result.imputed;
            }
        }
        r.wind_missing = !r.wind_ms;
        if (r.wind_missing) ++result.still_missing;
    }
    return result;
}

std::vector<CountRecord> load_counts(const std::string& path) {
    CsvReader reader(path);
    reader.expect_header(kCountsHeader);
    std::vector<CountRecord> out;
    while (auto row = reader.next()) {
        const auto& f = *row;
        if (f.size() != kCountsHeader.size()) {
            throw ParseError(path, reader.line(), "expected 5 fields, found " + std::to_string(f.size()));
        }
        CountRecord c;
        c.station_id = f[0];
        if (c.station_id.empty()) throw ParseError(path, reader.line(), "empty station_id");
        if (!parse_timestamp(f[1], c.hour)) throw ParseError(path, reader.line(), "bad hour_utc '" + f[1] + "'");
        if ((c.hour - floor<days>(c.hour)) % hours{1} != seconds{0}) {
            throw ParseError(path, reader.line(), "hour_utc '" + f[1] + "' is not on the hour");
        }
        auto v = parse_double(f[2]);
        auto a = parse_double(f[3]);
        auto w = parse_double(f[4]);
        if (!v || !(*v >= 0.0)) throw ParseError(path, reader.line(), "volume must be a non-negative number");
        if (!a || !(*a > 0.0)) throw ParseError(path, reader.line(), "aadct must be positive");
        if (!w || !(*w > 0.0)) throw ParseError(path, reader.line(), "aawct must be positive");
        c.volume = *v;
        c.aadct = *a;
        c.aawct = *w;
        out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(), [](const CountRecord& a, const CountRecord& b) {
        return a.station_id != b.station_id ? a.station_id < b.station_id : a.hour < b.hour;
    });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].station_id == out[i - 1].station_id && out[i].hour == out[i - 1].hour) {
            throw DataError(path + ": duplicate count for station " + out[i].station_id + " at " +
                            format_timestamp(out[i].hour));
        }
    }
    return out;
}

std::string counts_csv(std::span<const CountRecord> records) {
    std::string out = csv_join(kCountsHeader) + "\n";
    for (const auto& c : records) {
        out += csv_join({c.station_id, format_timestamp(c.hour), format_double(c.volume),
                         format_double(c.aadct), format_double(c.aawct)});
        out += "\n";
    }
    return out;
}

HolidayCalendar::HolidayCalendar(std::set<Date> dates) : dates_(std::move(dates)) {
    if (!dates_.empty()) {
        first_year_ = year_of(*dates_.begin());
        last_year_ = year_of(*dates_.rbegin());
    }
}

bool HolidayCalendar::covers(Date d) const noexcept {
    const int y = year_of(d);
    return y >= first_year_ && y <= last_year_;
}

bool HolidayCalendar::is_holiday(Date d) const {
    if (!covers(d)) throw DomainError("holiday calendar does not cover " + format_date(d));
    return dates_.contains(d);
}

HolidayCalendar load_holidays(const std::string& path) {
    CsvReader reader(path);
    reader.expect_header({"date"});
    std::set<Date> dates;
    while (auto row = reader.next()) {
        if (row->size() != 1) throw ParseError(path, reader.line(), "expected one field");
        Date d;
        if (!parse_date((*row)[0], d)) throw ParseError(path, reader.line(), "bad date '" + (*row)[0] + "'");
        dates.insert(d);
    }
    return HolidayCalendar(std::move(dates));
}

std::string holidays_csv(const HolidayCalendar& calendar) {
    std::string out = "date\n";
    for (Date d : calendar.dates()) out += format_date(d) + "\n";
    return out;
}

std::string_view to_string(DayType t) noexcept {
    switch (t) {
        case DayType::weekday: return "weekday";
        case DayType::saturday: return "saturday";
        case DayType::sunday_holiday: return "sunday_holiday";
    }
    return "unknown";
}

DayType parse_day_type(std::string_view text) {
    for (auto t : {DayType::weekday, DayType::saturday, DayType::sunday_holiday})
        if (to_string(t) == text) return t;
    throw DataError("unknown day type '" + std::string(text) + "'");
}

DayType day_type(Date d, bool holiday) noexcept {
    if (holiday) return DayType::sunday_holiday;
    const int dow = day_of_week(d);
    if (dow == 6) return DayType::sunday_holiday;
    if (dow == 5) return DayType::saturday;
    return DayType::weekday;
}

TemporalFeatures encode_temporal(TimePoint t, const HolidayCalendar& calendar) {
    const Date d = date_of(t);
    TemporalFeatures f;
    f.holiday = calendar.is_holiday(d) ? 1 : 0;
    f.hour = hour_of(t);
    f.day_of_week = day_of_week(d);
    f.week_of_year = iso_week(d);
    return f;
}

namespace {

constexpr std::pair<Feature, std::string_view> kFeatureNames[] = {
    {Feature::temp_c, "temp_c"},
    {Feature::pressure_hpa, "pressure_hpa"},
    {Feature::wind_ms, "wind_ms"},
    {Feature::gust_ms, "gust_ms"},
    {Feature::wind_dir_deg, "wind_dir_deg"},
    {Feature::precip_mm, "precip_mm"},
    {Feature::visibility_m, "visibility_m"},
    {Feature::snow_cm, "snow_cm"},
    {Feature::wind_dir_sin, "wind_dir_sin"},
    {Feature::wind_dir_cos, "wind_dir_cos"},
    {Feature::wind_imputed, "wind_imputed"},
    {Feature::wind_missing, "wind_missing"},
    {Feature::hour, "hour"},
    {Feature::day_of_week, "day_of_week"},
    {Feature::week_of_year, "week_of_year"},
    {Feature::holiday, "holiday"},
    {Feature::aadct, "aadct"},
    {Feature::aawct, "aawct"},
};

double feature_value(Feature f, const WeatherRecord& w, const TemporalFeatures& t,
                     const CountRecord& c) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    const double deg_to_rad = std::numbers::pi / 180.0;
    switch (f) {
        case Feature::temp_c: return *w.temp_c;
        case Feature::pressure_hpa: return *w.pressure_hpa;
        case Feature::wind_ms: return w.wind_ms ? *w.wind_ms : nan;
        case Feature::gust_ms: return *w.gust_ms;
        case Feature::wind_dir_deg: return *w.wind_dir_deg;
        case Feature::precip_mm: return *w.precip_mm;
        case Feature::visibility_m: return *w.visibility_m;
        case Feature::snow_cm: return *w.snow_cm;
        case Feature::wind_dir_sin: return std::sin(*w.wind_dir_deg * deg_to_rad);
        case Feature::wind_dir_cos: return std::cos(*w.wind_dir_deg * deg_to_rad);
        case Feature::wind_imputed: return w.wind_imputed ? 1.0 : 0.0;
        case Feature::wind_missing: return w.wind_ms ? 0.0 : 1.0;
        case Feature::hour: return t.hour;
        case Feature::day_of_week: return t.day_of_week;
        case Feature::week_of_year: return t.week_of_year;
        case Feature::holiday: return t.holiday;
        case Feature::aadct: return c.aadct;
        case Feature::aawct: return c.aawct;
    }
    return nan;
}

}  // namespace

std::string_view to_string(Feature f) noexcept {
    for (const auto& [feat, name] : kFeatureNames)
        if (feat == f) return name;
    return "unknown";
}

Feature parse_feature(std::string_view name) {
    for (const auto& [feat, n] : kFeatureNames)
        if (n == name) return feat;
    throw ConfigError("unknown feature '" + std::string(name) + "'");
}

std::vector<Feature> default_roster() {
    std::vector<Feature> out;
    for (const auto& [feat, name] : kFeatureNames) out.push_back(feat);
    return out;
}

std::vector<std::string> feature_names(std::span<const Feature> roster) {
    std::vector<std::string> out;
    for (Feature f : roster) out.emplace_back(to_string(f));
    return out;
}

AssemblyResult assemble_raw(std::span<const WeatherRecord> weather,
                            std::span<const CountRecord> counts, const HolidayCalendar& calendar,
                            std::span<const Feature> roster) {
    if (roster.empty()) throw ConfigError("assemble: empty feature roster");
    std::unordered_map<long long, const WeatherRecord*> by_time;
    by_time.reserve(weather.size());
    for (const auto& w : weather) by_time[w.timestamp.time_since_epoch().count()] = &w;

    std::vector<const CountRecord*> ordered;
    ordered.reserve(counts.size());
    for (const auto& c : counts) ordered.push_back(&c);
    std::stable_sort(ordered.begin(), ordered.end(), [](const CountRecord* a, const CountRecord* b) {
        return a->station_id != b->station_id ? a->station_id < b->station_id : a->hour < b->hour;
    });

    AssemblyResult result;
    result.samples.reserve(counts.size());
    for (const CountRecord* c : ordered) {
        if (!calendar.covers(date_of(c->hour))) {
            result.drops.push_back({c->station_id, c->hour, "outside_holiday_calendar"});
            continue;
        }
        std::array<const WeatherRecord*, kStepsPerHour> rows{};
        std::size_t found = 0;
        bool clean = true;
        for (std::size_t s = 0; s < kStepsPerHour; ++s) {
            const TimePoint t = c->hour + minutes{10 * static_cast<int>(s)};
            auto it = by_time.find(t.time_since_epoch().count());
            if (it == by_time.end()) continue;
            rows[s] = it->second;
            ++found;
            clean = clean && it->second->is_clean();
        }
        if (found < kStepsPerHour) {
            result.drops.push_back({c->station_id, c->hour, "missing_weather_rows"});
            continue;
        }
        if (!clean) {
            result.drops.push_back({c->station_id, c->hour, "incomplete_weather_rows"});
            continue;
        }
        SequenceSample sample;
        sample.x = Matrix(kStepsPerHour, roster.size());
        sample.y = c->volume;
        sample.station_id = c->station_id;
        sample.hour = c->hour;
        sample.aadct = c->aadct;
        sample.aawct = c->aawct;
        for (std::size_t s = 0; s < kStepsPerHour; ++s) {
            const TemporalFeatures tf = encode_temporal(rows[s]->timestamp, calendar);
            if (s == 0) sample.holiday = tf.holiday != 0;
            for (std::size_t j = 0; j < roster.size(); ++j)
                sample.x(s, j) = feature_value(roster[j], *rows[s], tf, *c);
        }
        result.samples.push_back(std::move(sample));
    }
    return result;
}

std::string drop_report_csv(std::span<const DropRecord> drops) {
    std::string out = "station_id,hour_utc,reason\n";
    for (const auto& d : drops) out += csv_join({d.station_id, format_timestamp(d.hour), d.reason}) + "\n";
    return out;
}

StandardizationStats fit_standardization(std::span<const SequenceSample> train,
                                         std::span<const std::string> feature_names) {
    if (train.empty()) throw ConfigError("fit_standardization: empty training split");
    const std::size_t d = train.front().x.cols();
    if (feature_names.size() != d) {
        throw ConfigError("fit_standardization: " + std::to_string(feature_names.size()) +
                          " feature names for " + std::to_string(d) + " columns");
    }
    StandardizationStats st;
    st.feature_names.assign(feature_names.begin(), feature_names.end());
    st.feature_mean.assign(d, 0.0);
    st.feature_std.assign(d, 0.0);
    std::vector<std::size_t> n(d, 0);
    for (const auto& s : train) {
        if (s.x.cols() != d) throw ShapeError("fit_standardization: inconsistent feature count");
        for (std::size_t r = 0; r < s.x.rows(); ++r)
            for (std::size_t j = 0; j < d; ++j) {
                const double v = s.x(r, j);
                if (std::isnan(v)) continue;
                st.feature_mean[j] += v;
                ++n[j];
            }
    }
    for (std::size_t j = 0; j < d; ++j) {
        if (n[j] == 0) throw ConfigError("feature '" + st.feature_names[j] + "' has no observed values");
        st.feature_mean[j] /= static_cast<double>(n[j]);
    }
    for (const auto& s : train)
        for (std::size_t r = 0; r < s.x.rows(); ++r)
            for (std::size_t j = 0; j < d; ++j) {
                const double v = s.x(r, j);
                if (std::isnan(v)) continue;
                const double e = v - st.feature_mean[j];
                st.feature_std[j] += e * e;
            }
    for (std::size_t j = 0; j < d; ++j) {
        st.feature_std[j] = std::sqrt(st.feature_std[j] / static_cast<double>(n[j]));
        if (!(st.feature_std[j] > 1e-12 * std::max(1.0, std::abs(st.feature_mean[j])))) {
            throw ConfigError("feature '" + st.feature_names[j] +
                              "' has zero variance on the training split");
        }
    }
    double ym = 0.0;
    for (const auto& s : train) ym += s.y;
    ym /= static_cast<double>(train.size());
    double yv = 0.0;
    for (const auto& s : train) yv += (s.y - ym) * (s.y - ym);
    yv /= static_cast<double>(train.size());
    st.target_mean = ym;
    st.target_std = std::sqrt(yv);
    if (!(st.target_std > 0.0)) throw ConfigError("target has zero variance on the training split");
    return st;
}

SequenceSample standardize(const SequenceSample& raw, const StandardizationStats& stats) {
    if (raw.x.cols() != stats.features()) {
        throw ShapeError("standardize: sample has " + std::to_string(raw.x.cols()) +
                         " features, statistics have " + std::to_string(stats.features()));
    }
    SequenceSample out = raw;
    for (std::size_t r = 0; r < out.x.rows(); ++r)
        for (std::size_t j = 0; j < out.x.cols(); ++j) {
            const double v = raw.x(r, j);
            out.x(r, j) = std::isnan(v) ? 0.0 : (v - stats.feature_mean[j]) / stats.feature_std[j];
        }
    out.y = stats.standardize_target(raw.y);
    return out;
}

std::vector<SequenceSample> standardize(std::span<const SequenceSample> raw,
                                        const StandardizationStats& stats) {
    std::vector<SequenceSample> out;
    out.reserve(raw.size());
    for (const auto& s : raw) out.push_back(standardize(s, stats));
    return out;
}

AssemblyResult assemble_sequences(std::span<const WeatherRecord> weather,
                                  std::span<const CountRecord> counts,
                                  const HolidayCalendar& calendar, std::span<const Feature> roster,
                                  const StandardizationStats& stats) {
    AssemblyResult r = assemble_raw(weather, counts, calendar, roster);
    r.samples = standardize(r.samples, stats);
    return r;
}

std::string samples_csv(const SampleSet& set) {
    std::vector<std::string> header = {"station_id", "hour_utc", "volume", "aadct", "aawct", "holiday"};
    for (std::size_t s = 0; s < kStepsPerHour; ++s)
        for (const auto& n : set.feature_names) header.push_back("t" + std::to_string(s + 1) + "." + n);
    std::string out = csv_join(header) + "\n";
    std::vector<std::string> fields;
    for (const auto& smp : set.samples) {
        fields.clear();
        fields.push_back(smp.station_id);
        fields.push_back(format_timestamp(smp.hour));
        fields.push_back(format_double(smp.y));
        fields.push_back(format_double(smp.aadct));
        fields.push_back(format_double(smp.aawct));
        fields.push_back(smp.holiday ? "1" : "0");
        for (double v : smp.x.data()) fields.push_back(cell(v));
        out += csv_join(fields);
        out += "\n";
    }
    return out;
}

SampleSet load_samples(const std::string& path) {
    CsvReader reader(path);
    auto header = reader.next();
    if (!header || header->size() < 6 + kStepsPerHour ||
        (header->size() - 6) % kStepsPerHour != 0 || (*header)[0] != "station_id") {
        throw ParseError(path, 1, "not a samples table");
    }
    const std::size_t d = (header->size() - 6) / kStepsPerHour;
    SampleSet set;
    for (std::size_t j = 0; j < d; ++j) {
        const std::string& h = (*header)[6 + j];
        if (h.rfind("t1.", 0) != 0) throw ParseError(path, 1, "unexpected column '" + h + "'");
        set.feature_names.push_back(h.substr(3));
    }
    while (auto row = reader.next()) {
        const auto& f = *row;
        if (f.size() != header->size()) throw ParseError(path, reader.line(), "wrong field count");
        SequenceSample s;
        s.station_id = f[0];
        if (!parse_timestamp(f[1], s.hour)) throw ParseError(path, reader.line(), "bad hour_utc");
        auto y = parse_double(f[2]);
        auto a = parse_double(f[3]);
        auto w = parse_double(f[4]);
        if (!y || !a || !w) throw ParseError(path, reader.line(), "bad numeric field");
        s.y = *y;
        s.aadct = *a;
        s.aawct = *w;
        s.holiday = f[5] == "1";
        s.x = Matrix(kStepsPerHour, d);
        auto data = s.x.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const std::string& c = f[6 + i];
            if (c.empty()) {
                data[i] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            auto v = parse_double(c);
            if (!v) throw ParseError(path, reader.line(), "bad value in column " + (*header)[6 + i]);
            data[i] = *v;
        }
        set.samples.push_back(std::move(s));
    }
    return set;
}

}  // namespace bikeflow
