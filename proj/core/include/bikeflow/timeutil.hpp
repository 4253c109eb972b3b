#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace bikeflow {

using TimePoint = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

/// Parses "YYYY-MM-DDTHH:MM[:SS]" with an optional "Z" or "±HH:MM" suffix
/// (a space may replace the "T"). Offsets are normalized to UTC; no suffix
/// means UTC. Returns false on malformed input.
bool parse_timestamp(std::string_view text, TimePoint& out);

/// Parses "YYYY-MM-DD".
bool parse_date(std::string_view text, Date& out);

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_timestamp(TimePoint t);
/// "YYYY-MM-DD"
std::string format_date(Date d);

Date date_of(TimePoint t);
int hour_of(TimePoint t);
int minute_of(TimePoint t);
/// 0 = Monday ... 6 = Sunday
int day_of_week(Date d);
/// 1..12
int month_of(Date d);
int year_of(Date d);

/// ISO-8601 week number (1..53).
int iso_week(Date d);

}  // namespace bikeflow
