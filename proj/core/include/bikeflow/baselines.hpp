#pragma once

#include <array>
#include <string>
#include <vector>

#include "bikeflow/data.hpp"

namespace bikeflow {

/// Seasonal variation factors: the fraction of a day's traffic falling in
/// each hour, per (month, day type).
class FactorTable {
public:
    FactorTable() = default;

    /// Throws DomainError on an out-of-range key or negative factor.
    void set(int month, DayType type, int hour, double factor);
    bool has_profile(int month, DayType type) const noexcept;
    /// Throws LookupError when the (month, day type) profile is absent.
    double factor(int month, DayType type, int hour) const;
    /// Throws ValidationError naming the first profile whose hours do not sum
    /// to 1 within `tol`.
    void validate(double tol = 1e-9) const;
    std::size_t profiles() const noexcept;

private:
    static std::size_t index(int month, DayType type) noexcept {
        return static_cast<std::size_t>(month - 1) * 3 + static_cast<std::size_t>(type);
    }
    std::array<std::array<double, 24>, 36> factors_{};
    std::array<unsigned, 36> filled_{};  // bit h set once hour h is assigned
};

FactorTable load_factor_table(const std::string& path);
std::string factor_table_csv(const FactorTable& table);

/// Every factor 1/24.
FactorTable flat_factor_table();
/// Synthetic profiles with weekday commuter peaks at 08 and 16-17 and a
/// midday hump on Saturdays, Sundays and holidays; summer months carry a
/// slightly later evening tail.
FactorTable example_factor_table();

enum class SvfVolumeMode {
    aawct_on_weekdays,  // AAWCT for weekdays, AADCT otherwise
    aadct_always,
};

double svf_estimate(double daily_volume, int month, DayType type, int hour, const FactorTable& table);

/// Raw-scale SVF estimate for the hour and station of a sample.
double svf_estimate(const SequenceSample& sample, const FactorTable& table,
                    SvfVolumeMode mode = SvfVolumeMode::aawct_on_weekdays);

struct StationHourEstimate {
    std::string station_id;
    TimePoint hour;
    double estimate = 0.0;
};

/// station_id,hour_utc,estimate
std::string svf_csv(std::span<const StationHourEstimate> rows);

}  // namespace bikeflow
