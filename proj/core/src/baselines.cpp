#include "bikeflow/baselines.hpp"

#include <cmath>
#include <numbers>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

namespace {

constexpr unsigned kAllHours = (1u << 24) - 1;

void check_key(int month, int hour) {
    if (month < 1 || month > 12) throw DomainError("factor table: month " + std::to_string(month) + " outside 1..12");
    if (hour < 0 || hour > 23) throw DomainError("factor table: hour " + std::to_string(hour) + " outside 0..23");
}

std::string profile_name(int month, DayType type) {
    return "(month " + std::to_string(month) + ", " + std::string(to_string(type)) + ")";
}

}  // namespace

void FactorTable::set(int month, DayType type, int hour, double factor) {
    check_key(month, hour);
    if (!(factor >= 0.0) || !std::isfinite(factor)) {
        throw DomainError("factor table: factor for " + profile_name(month, type) + " hour " +
                          std::to_string(hour) + " must be a finite non-negative number");
    }
    factors_[index(month, type)][static_cast<std::size_t>(hour)] = factor;
    filled_[index(month, type)] |= 1u << hour;
}

bool FactorTable::has_profile(int month, DayType type) const noexcept {
    if (month < 1 || month > 12) return false;
    return filled_[index(month, type)] == kAllHours;
}

double FactorTable::factor(int month, DayType type, int hour) const {
    check_key(month, hour);
    if (!has_profile(month, type)) throw LookupError("factor table has no profile for " + profile_name(month, type));
    return factors_[index(month, type)][static_cast<std::size_t>(hour)];
}

void FactorTable::validate(double tol) const {
    for (int m = 1; m <= 12; ++m) {
        for (DayType t : {DayType::weekday, DayType::saturday, DayType::sunday_holiday}) {
            const unsigned bits = filled_[index(m, t)];
            if (bits == 0) continue;
            if (bits != kAllHours) {
                throw ValidationError("factor table profile " + profile_name(m, t) + " does not cover all 24 hours");
            }
            double sum = 0.0;
            for (double f : factors_[index(m, t)]) sum += f;
            if (std::abs(sum - 1.0) > tol) {
                throw ValidationError("factor table profile " + profile_name(m, t) + " sums to " +
                                      format_double(sum) + ", expected 1");
            }
        }
    }
}

std::size_t FactorTable::profiles() const noexcept {
    std::size_t n = 0;
    for (unsigned bits : filled_) n += bits == kAllHours;
    return n;
}

FactorTable load_factor_table(const std::string& path) {
    CsvReader reader(path);
    reader.expect_header({"month", "day_type", "hour", "factor"});
    FactorTable table;
    std::array<std::array<bool, 24>, 36> seen{};
    while (auto row = reader.next()) {
        const auto& f = *row;
        if (f.size() != 4) throw ParseError(path, reader.line(), "expected 4 fields, found " + std::to_string(f.size()));
        const auto month = parse_int(f[0]);
        const auto hour = parse_int(f[2]);
        const auto factor = parse_double(f[3]);
        if (!month || !hour || !factor) throw ParseError(path, reader.line(), "malformed factor row");
        DayType type;
        try {
            type = parse_day_type(f[1]);
        } catch (const Error& e) {
            throw ParseError(path, reader.line(), e.what());
        }
        try {
            check_key(static_cast<int>(*month), static_cast<int>(*hour));
        } catch (const Error& e) {
            throw ParseError(path, reader.line(), e.what());
        }
        auto& slot = seen[static_cast<std::size_t>(*month - 1) * 3 + static_cast<std::size_t>(type)]
                         [static_cast<std::size_t>(*hour)];
        if (slot) {
            throw ValidationError(path + " line " + std::to_string(reader.line()) + ": duplicate row for " +
                                  profile_name(static_cast<int>(*month), type) + " hour " + f[2]);
        }
        slot = true;
        try {
            table.set(static_cast<int>(*month), type, static_cast<int>(*hour), *factor);
        } catch (const DomainError& e) {
            throw ParseError(path, reader.line(), e.what());
        }
    }
    table.validate();
    return table;
}

std::string factor_table_csv(const FactorTable& table) {
    std::string out = "month,day_type,hour,factor\n";
    for (int m = 1; m <= 12; ++m) {
        for (DayType t : {DayType::weekday, DayType::saturday, DayType::sunday_holiday}) {
            if (!table.has_profile(m, t)) continue;
            for (int h = 0; h < 24; ++h) {
                out += std::to_string(m) + "," + std::string(to_string(t)) + "," + std::to_string(h) + "," +
                       format_double(table.factor(m, t, h)) + "\n";
            }
        }
    }
    return out;
}

FactorTable flat_factor_table() {
    FactorTable t;
    for (int m = 1; m <= 12; ++m)
        for (DayType d : {DayType::weekday, DayType::saturday, DayType::sunday_holiday})
            for (int h = 0; h < 24; ++h) t.set(m, d, h, 1.0 / 24.0);
    return t;
}

namespace {

double bump(double h, double centre, double width) {
    const double z = (h - centre) / width;
    return std::exp(-0.5 * z * z);
}

}  // namespace

FactorTable example_factor_table() {
    FactorTable t;
    for (int m = 1; m <= 12; ++m) {
        const double summer = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (m - 1) / 12.0);
        for (DayType d : {DayType::weekday, DayType::saturday, DayType::sunday_holiday}) {
            std::array<double, 24> raw{};
            double sum = 0.0;
            for (int h = 0; h < 24; ++h) {
                const double x = h + 0.5;
                double v = 0.05 + 0.6 * bump(x, 14.0, 5.0);
                if (d == DayType::weekday) {
                    v += 1.6 * bump(x, 8.0, 1.0) + 1.3 * bump(x, 16.5, 1.3);
                } else if (d == DayType::saturday) {
                    v += 0.8 * bump(x, 13.0, 3.0);
                } else {
                    v += 0.5 * bump(x, 14.0, 3.5);
                }
                v += 0.2 * summer * bump(x, 20.0, 2.0);
                raw[static_cast<std::size_t>(h)] = v;
                sum += v;
            }
            for (int h = 0; h < 24; ++h) t.set(m, d, h, raw[static_cast<std::size_t>(h)] / sum);
        }
    }
    return t;
}

double svf_estimate(double daily_volume, int month, DayType type, int hour, const FactorTable& table) {
    return daily_volume * table.factor(month, type, hour);
}

double svf_estimate(const SequenceSample& sample, const FactorTable& table, SvfVolumeMode mode) {
    const Date d = date_of(sample.hour);
    const DayType type = day_type(d, sample.holiday);
    const double daily =
        (mode == SvfVolumeMode::aawct_on_weekdays && type == DayType::weekday) ? sample.aawct : sample.aadct;
    return svf_estimate(daily, month_of(d), type, hour_of(sample.hour), table);
}

std::string svf_csv(std::span<const StationHourEstimate> rows) {
    std::string out = "station_id,hour_utc,estimate\n";
    for (const auto& r : rows) {
        out += csv_join({r.station_id, format_timestamp(r.hour), format_double(r.estimate)}) + "\n";
    }
    return out;
}

}  // namespace bikeflow
