#include "bikeflow/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

using namespace std::chrono;

namespace {

struct Field {
    const char* key;
    double GeneratorConfig::*member;
};

const Field kFields[] = {
    {"aadct_base", &GeneratorConfig::aadct_base},
    {"aadct_step", &GeneratorConfig::aadct_step},
    {"aadct_growth", &GeneratorConfig::aadct_growth},
    {"aawct_ratio", &GeneratorConfig::aawct_ratio},
    {"temp_coef", &GeneratorConfig::temp_coef},
    {"rain_factor", &GeneratorConfig::rain_factor},
    {"disrupted_base", &GeneratorConfig::disrupted_base},
    {"disrupted_rain", &GeneratorConfig::disrupted_rain},
    {"disrupted_scale", &GeneratorConfig::disrupted_scale},
    {"noise_cv", &GeneratorConfig::noise_cv},
    {"noise_floor", &GeneratorConfig::noise_floor},
    {"temp_mean", &GeneratorConfig::temp_mean},
    {"temp_seasonal", &GeneratorConfig::temp_seasonal},
    {"temp_daily", &GeneratorConfig::temp_daily},
    {"temp_noise", &GeneratorConfig::temp_noise},
    {"wind_mean", &GeneratorConfig::wind_mean},
    {"wind_noise", &GeneratorConfig::wind_noise},
    {"rain_start", &GeneratorConfig::rain_start},
    {"rain_stop", &GeneratorConfig::rain_stop},
    {"rain_mean_mm", &GeneratorConfig::rain_mean_mm},
    {"wind_outage_primary", &GeneratorConfig::wind_outage_primary},
    {"wind_outage_fallback", &GeneratorConfig::wind_outage_fallback},
    {"wind_outage_stop", &GeneratorConfig::wind_outage_stop},
    {"crash_rate", &GeneratorConfig::crash_rate},
    {"crash_log_visibility", &GeneratorConfig::crash_log_visibility},
    {"crash_holiday", &GeneratorConfig::crash_holiday},
    {"crash_log_exposure", &GeneratorConfig::crash_log_exposure},
    {"crash_morning", &GeneratorConfig::crash_morning},
    {"crash_afternoon", &GeneratorConfig::crash_afternoon},
    {"crash_cold", &GeneratorConfig::crash_cold},
    {"crash_hot", &GeneratorConfig::crash_hot},
    {"crash_calm", &GeneratorConfig::crash_calm},
    {"crash_windy", &GeneratorConfig::crash_windy},
    {"crash_rain", &GeneratorConfig::crash_rain},
};

double bump(double h, double centre, double width) {
    const double z = (h - centre) / width;
    return std::exp(-0.5 * z * z);
}

double raw_profile(int hour, DayType type) {
    const double x = hour + 0.5;
    switch (type) {
        case DayType::weekday:
            return 0.15 + 1.8 * bump(x, 8.0, 1.1) + 1.5 * bump(x, 16.5, 1.5) + 0.7 * bump(x, 12.5, 3.0);
        case DayType::saturday:
            return 0.75 * (0.15 + 1.0 * bump(x, 13.0, 3.2));
        case DayType::sunday_holiday:
            return 0.65 * (0.12 + 0.8 * bump(x, 14.0, 3.5));
    }
    return 0.0;
}

double weekday_norm() {
    static const double norm = [] {
        double s = 0.0;
        for (int h = 0; h < 24; ++h) s += raw_profile(h, DayType::weekday);
        return s / 24.0;
    }();
    return norm;
}

Date easter_sunday(int y) {
    const int a = y % 19, b = y / 100, c = y % 100, d = b / 4, e = b % 4;
    const int f = (b + 8) / 25, g = (b - f + 1) / 3, h = (19 * a + b - d - g + 15) % 30;
    const int i = c / 4, k = c % 4, l = (32 + 2 * e + 2 * i - h - k) % 7;
    const int m = (a + 11 * h + 22 * l) / 451;
    const int month = (h + l - 7 * m + 114) / 31;
    const int day = ((h + l - 7 * m + 114) % 31) + 1;
    return Date{year{y} / month / day};
}

HolidayCalendar make_holidays(int first_year, int last_year) {
    std::set<Date> dates;
    for (int y = first_year; y <= last_year; ++y) {
        const Date easter = easter_sunday(y);
        for (int offset : {-3, -2, 1, 39, 50}) dates.insert(easter + days{offset});
        dates.insert(Date{year{y} / 1 / 1});
        dates.insert(Date{year{y} / 6 / 5});
        dates.insert(Date{year{y} / 12 / 24});
        dates.insert(Date{year{y} / 12 / 25});
        dates.insert(Date{year{y} / 12 / 26});
    }
    return HolidayCalendar(std::move(dates));
}

class Ar1 {
public:
    Ar1(double phi, double sd) : phi_(phi), innovation_(sd * std::sqrt(1.0 - phi * phi)) {}
    double next(RngStream& rng) {
        value_ = phi_ * value_ + innovation_ * rng.normal();
        return value_;
    }

private:
    double phi_;
    double innovation_;
    double value_ = 0.0;
};

}  // namespace

void GeneratorConfig::validate() const {
    if (stations < 1) throw ConfigError("synth.stations must be >= 1");
    if (days < 7) throw ConfigError("synth.days must be >= 7");
    for (const auto& f : kFields) {
        if (!std::isfinite(this->*f.member)) throw ConfigError(std::string("synth.") + f.key + " must be finite");
    }
    if (!(aadct_base > 0.0) || aadct_step < 0.0 || aadct_growth <= -1.0 || !(aawct_ratio > 0.0)) {
        throw ConfigError("synth: AADCT and AAWCT must be positive for every station");
    }
    if (noise_cv < 0.0 || noise_floor < 0.0) throw ConfigError("synth: noise parameters must be non-negative");
    if (disrupted_base < 0.0 || disrupted_rain < 0.0 || disrupted_base + disrupted_rain >= 1.0) {
        throw ConfigError("synth: disrupted weights must be non-negative and sum below 1");
    }
    if (!(rain_factor > 0.0) || !(disrupted_scale > 0.0)) throw ConfigError("synth: volume factors must be positive");
    for (double p : {rain_start, rain_stop, wind_outage_primary, wind_outage_fallback, wind_outage_stop}) {
        if (p < 0.0 || p > 1.0) throw ConfigError("synth: transition probabilities must lie in [0, 1]");
    }
    if (!(rain_mean_mm > 0.0)) throw ConfigError("synth.rain_mean_mm must be positive");
    if (!(crash_rate > 0.0)) throw ConfigError("synth.crash_rate must be positive");
}

KeyValueConfig GeneratorConfig::to_config() const {
    KeyValueConfig kv;
    kv.set("synth.seed", std::to_string(seed));
    kv.set("synth.stations", std::to_string(stations));
    kv.set("synth.start", format_date(start));
    kv.set("synth.days", std::to_string(days));
    for (const auto& f : kFields) kv.set(std::string("synth.") + f.key, format_double(this->*f.member));
    return kv;
}

GeneratorConfig GeneratorConfig::from_config(const KeyValueConfig& kv) {
    GeneratorConfig cfg;
    cfg.seed = kv.get_u64("synth.seed", cfg.seed);
    cfg.stations = static_cast<int>(kv.get_int("synth.stations", cfg.stations));
    if (kv.has("synth.start")) {
        if (!parse_date(kv.get_string("synth.start"), cfg.start)) {
            throw ConfigError(kv.source() + ": synth.start is not a YYYY-MM-DD date");
        }
    }
    cfg.days = static_cast<int>(kv.get_int("synth.days", cfg.days));
    std::set<std::string> known = {"synth.seed", "synth.stations", "synth.start", "synth.days"};
    for (const auto& f : kFields) {
        const std::string key = std::string("synth.") + f.key;
        known.insert(key);
        cfg.*f.member = kv.get_double(key, cfg.*f.member);
    }
    kv.reject_unknown(known, {"synth"});
    cfg.validate();
    return cfg;
}

double GeneratorConfig::aadct(int station, int year_index) const {
    return (aadct_base + station * aadct_step) * std::pow(1.0 + aadct_growth, year_index);
}

double GeneratorConfig::aawct(int station, int year_index) const { return aawct_ratio * aadct(station, year_index); }

std::string station_name(int station) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "station_%02d", station + 1);
    return buf;
}

int station_index(const GeneratorConfig& cfg, const std::string& name) {
    for (int s = 0; s < cfg.stations; ++s)
        if (station_name(s) == name) return s;
    return -1;
}

double true_profile(int hour, DayType type) { return raw_profile(hour, type) / weekday_norm(); }

MixtureParams true_mixture(const GeneratorConfig& cfg, double aadct, int hour, DayType type,
                           const HourlyWeather& weather) {
    const bool rain = weather.precip_mm > 0.0;
    const double base = aadct / 24.0 * true_profile(hour, type) * std::exp(cfg.temp_coef * (weather.temp_c - 12.0));
    const double main = base * (rain ? cfg.rain_factor : 1.0);
    const double w_dis = cfg.disrupted_base + (rain ? cfg.disrupted_rain : 0.0);
    auto var = [&](double m) {
        const double sd = cfg.noise_cv * m + cfg.noise_floor;
        return sd * sd;
    };
    MixtureParams p;
    if (w_dis > 0.0) {
        const double dis = base * cfg.disrupted_scale;
        p.alpha = {1.0 - w_dis, w_dis};
        p.mu = {main, dis};
        p.nu = {var(main), var(dis)};
    } else {
        p.alpha = {1.0};
        p.mu = {main};
        p.nu = {var(main)};
    }
    return p;
}

double draw_volume(const MixtureParams& p, RngStream& rng, bool* truncated) {
    const std::size_t c = p.alpha.size() == 1 ? 0 : rng.categorical(p.alpha);
    const double v = p.mu[c] + std::sqrt(p.nu[c]) * rng.normal();
    if (truncated) *truncated = v < 0.0;
    return v < 0.0 ? 0.0 : v;
}

SyntheticPanel generate(const GeneratorConfig& cfg) {
    cfg.validate();
    SyntheticPanel panel;
    panel.config = cfg;
    const RngStream root(cfg.seed);
    const int first_year = year_of(cfg.start);
    const Date end = cfg.start + days{cfg.days};
    panel.holidays = make_holidays(first_year, year_of(end - days{1}));

    // Weather at 10-minute resolution.
    {
        RngStream rng = root.child(1);
        Ar1 temp(0.998, cfg.temp_noise), pressure(0.999, 9.0), wind(0.99, cfg.wind_noise), vis(0.995, 0.3);
        double direction = 225.0;
        bool raining = false, primary_out = false, fallback_out = false;
        const long steps = static_cast<long>(cfg.days) * 144;
        const TimePoint t0 = TimePoint{cfg.start};
        panel.weather.reserve(static_cast<std::size_t>(steps));
        panel.fallback_weather.reserve(static_cast<std::size_t>(steps));
        for (long k = 0; k < steps; ++k) {
            const TimePoint t = t0 + minutes{10 * k};
            const double day_of_year = static_cast<double>(k) / 144.0;
            const double hour = static_cast<double>(k % 144) / 6.0;
            WeatherRecord r;
            r.timestamp = t;
            const double temp_c = cfg.temp_mean -
                                  cfg.temp_seasonal * std::cos(2.0 * std::numbers::pi * (day_of_year - 20.0) / 365.25) -
                                  cfg.temp_daily * std::cos(2.0 * std::numbers::pi * (hour - 3.0) / 24.0) +
                                  temp.next(rng);
            r.temp_c = temp_c;
            r.pressure_hpa = 1013.0 + pressure.next(rng);
            const double true_wind = std::max(0.0, cfg.wind_mean + wind.next(rng));
            r.gust_ms = 1.4 * true_wind + std::abs(0.7 * rng.normal());
            direction = std::fmod(direction + 8.0 * rng.normal() + 360.0, 360.0);
            r.wind_dir_deg = direction;
            raining = raining ? !rng.bernoulli(cfg.rain_stop) : rng.bernoulli(cfg.rain_start);
            const double precip = raining ? cfg.rain_mean_mm * rng.exponential(1.0) : 0.0;
            r.precip_mm = precip;
            r.visibility_m = std::clamp(25000.0 * std::exp(vis.next(rng)) * (raining ? 0.35 : 1.0), 100.0, 60000.0);
            r.snow_cm = temp_c < 0.0 && raining ? 1.2 * precip : 0.0;
            primary_out = primary_out ? !rng.bernoulli(cfg.wind_outage_stop) : rng.bernoulli(cfg.wind_outage_primary);
            fallback_out = fallback_out ? !rng.bernoulli(cfg.wind_outage_stop) : rng.bernoulli(cfg.wind_outage_fallback);
            const double fallback_wind = std::max(0.0, true_wind + 0.4 * rng.normal());
            if (!primary_out) r.wind_ms = true_wind;
            r.wind_missing = primary_out;
            WeatherRecord f;
            f.timestamp = t;
            if (!fallback_out) f.wind_ms = fallback_wind;
            f.wind_missing = fallback_out;
            panel.weather.push_back(r);
            panel.fallback_weather.push_back(f);
        }
    }
    const auto hourly = hourly_weather(impute_wind(panel.weather, panel.fallback_weather).records);

    // Hourly counts per station.
    const long n_hours = static_cast<long>(cfg.days) * 24;
    std::vector<double> exposure(static_cast<std::size_t>(n_hours), 0.0);
    for (int s = 0; s < cfg.stations; ++s) {
        RngStream rng = root.child(2).child(static_cast<std::uint64_t>(s));
        const std::string name = station_name(s);
        for (long k = 0; k < n_hours; ++k) {
            const TimePoint t = TimePoint{cfg.start} + hours{k};
            const Date d = date_of(t);
            const int yi = year_of(d) - first_year;
            const DayType type = day_type(d, panel.holidays.is_holiday(d));
            const double aadct = cfg.aadct(s, yi);
            const MixtureParams p = true_mixture(cfg, aadct, hour_of(t), type, hourly.at(t));
            bool truncated = false;
            const double v = draw_volume(p, rng, &truncated);
            panel.truncated += truncated;
            panel.counts.push_back({name, t, v, aadct, cfg.aawct(s, yi)});
            exposure[static_cast<std::size_t>(k)] += v;
        }
    }

    // Crashes.
    {
        const double coef[] = {0.0,
                               cfg.crash_log_visibility,
                               cfg.crash_holiday,
                               cfg.crash_log_exposure,
                               cfg.crash_morning,
                               cfg.crash_afternoon,
                               cfg.crash_cold,
                               cfg.crash_hot,
                               cfg.crash_calm,
                               cfg.crash_windy,
                               cfg.crash_rain};
        Vector eta(static_cast<std::size_t>(n_hours));
        for (long k = 0; k < n_hours; ++k) {
            const TimePoint t = TimePoint{cfg.start} + hours{k};
            const std::size_t i = static_cast<std::size_t>(k);
            CrashRow r = crash_covariates(t, hourly.at(t), panel.holidays.is_holiday(date_of(t)));
            r.exposure = std::max(exposure[i], 1.0);
            panel.true_exposure[t] = r.exposure;
            const Matrix x = crash_design(std::span<const CrashRow>(&r, 1));
            eta[i] = dot(x.row(0).data(), coef, x.cols());
            panel.crash_rows.push_back(r);
        }
        const double shift = log_sum_exp(eta) - std::log(static_cast<double>(eta.size()));
        panel.crash_intercept = std::log(cfg.crash_rate) - shift;
        panel.crash_mean.resize(eta.size());
        for (std::size_t i = 0; i < eta.size(); ++i) panel.crash_mean[i] = std::exp(panel.crash_intercept + eta[i]);
        RngStream rng = root.child(3);
        panel.crashes = simulate_crashes(panel, rng);
        for (auto& r : panel.crash_rows) r.crashes = panel.crashes.at(r.hour);
    }
    return panel;
}

HourlySeries simulate_crashes(const SyntheticPanel& panel, RngStream& rng) {
    HourlySeries out;
    for (std::size_t i = 0; i < panel.crash_rows.size(); ++i) {
        out.emplace_hint(out.end(), panel.crash_rows[i].hour, static_cast<double>(rng.poisson(panel.crash_mean[i])));
    }
    return out;
}

std::string manifest_text(const SyntheticPanel& panel) {
    KeyValueConfig kv = panel.config.to_config();
    double crashes = 0.0;
    for (const auto& [t, c] : panel.crashes) crashes += c;
    kv.set("derived.samples", std::to_string(panel.counts.size()));
    kv.set("derived.weather_rows", std::to_string(panel.weather.size()));
    kv.set("derived.truncated", std::to_string(panel.truncated));
    kv.set("derived.truncated_fraction",
           format_double(panel.counts.empty() ? 0.0 : static_cast<double>(panel.truncated) / panel.counts.size()));
    kv.set("derived.crash_intercept", format_double(panel.crash_intercept));
    kv.set("derived.crash_total", format_double(crashes));
    kv.set("derived.crash_hours", std::to_string(panel.crashes.size()));
    return kv.to_text();
}

void write_panel(const SyntheticPanel& panel, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path p(dir);
    write_text_file((p / "weather.csv").string(), weather_csv(panel.weather));
    write_text_file((p / "weather_fallback.csv").string(), weather_csv(panel.fallback_weather));
    write_text_file((p / "counts.csv").string(), counts_csv(panel.counts));
    write_text_file((p / "holidays.csv").string(), holidays_csv(panel.holidays));
    write_text_file((p / "crashes.csv").string(), crashes_csv(panel.crashes));
    write_text_file((p / "exposure_true.csv").string(), exposure_csv(panel.true_exposure));
    write_text_file((p / "manifest.txt").string(), manifest_text(panel));
}

MixtureParams true_sample_mixture(const GeneratorConfig& cfg, const std::map<TimePoint, HourlyWeather>& hourly,
                                  const SequenceSample& sample, const StandardizationStats* stats) {
    const int s = station_index(cfg, sample.station_id);
    if (s < 0) throw ValidationError("true_nll: station '" + sample.station_id + "' is not part of the configuration");
    const Date d = date_of(sample.hour);
    const int yi = year_of(d) - year_of(cfg.start);
    const double expected = cfg.aadct(s, yi);
    if (std::abs(sample.aadct - expected) > 1e-9 * expected) {
        throw ValidationError("true_nll: AADCT " + format_double(sample.aadct) + " of " + sample.station_id + " at " +
                              format_timestamp(sample.hour) + " does not match the configured " +
                              format_double(expected));
    }
    auto it = hourly.find(sample.hour);
    if (it == hourly.end()) throw ValidationError("true_nll: no weather for " + format_timestamp(sample.hour));
    MixtureParams p = true_mixture(cfg, sample.aadct, hour_of(sample.hour), day_type(d, sample.holiday), it->second);
    const double floor = std::exp(kLogVarianceMin);
    for (std::size_t c = 0; c < p.mu.size(); ++c) {
        if (stats) {
            p.mu[c] = stats->standardize_target(p.mu[c]);
            p.nu[c] /= stats->target_std * stats->target_std;
        }
        p.nu[c] = std::max(p.nu[c], floor);
    }
    return p;
}

double true_nll(const GeneratorConfig& cfg, std::span<const WeatherRecord> weather,
                std::span<const SequenceSample> samples, const StandardizationStats* stats) {
    if (samples.empty()) throw DomainError("true_nll: no samples");
    const auto hourly = hourly_weather(weather);
    double total = 0.0;
    for (const auto& s : samples) {
        const MixtureParams p = true_sample_mixture(cfg, hourly, s, stats);
        const double y = stats ? stats->standardize_target(s.y) : s.y;
        total -= mixture_log_density(y, p);
    }
    return total / static_cast<double>(samples.size());
}

}  // namespace bikeflow
