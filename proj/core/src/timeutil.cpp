#include "bikeflow/timeutil.hpp"

#include <cstdio>

#include "bikeflow/csv.hpp"

namespace bikeflow {

using namespace std::chrono;

namespace {

bool digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace

bool parse_date(std::string_view text, Date& out) {
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return false;
    if (!digits(text, 0, 4, y) || !digits(text, 5, 2, m) || !digits(text, 8, 2, d)) return false;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return false;
    out = sys_days{ymd};
    return true;
}

bool parse_timestamp(std::string_view text, TimePoint& out) {
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text.size() < 16) return false;
    Date d;
    if (!parse_date(text.substr(0, 10), d)) return false;
    if (text[10] != 'T' && text[10] != ' ') return false;
    int hh = 0, mm = 0, ss = 0;
    if (!digits(text, 11, 2, hh) || text[13] != ':' || !digits(text, 14, 2, mm)) return false;
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        if (!digits(text, pos + 1, 2, ss)) return false;
        pos += 3;
    }
    if (hh > 23 || mm > 59 || ss > 59) return false;
    seconds offset{0};
    if (pos < text.size()) {
        const char c = text[pos];
        if (c == 'Z' && pos + 1 == text.size()) {
            // UTC
        } else if ((c == '+' || c == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
            int oh = 0, om = 0;
            if (!digits(text, pos + 1, 2, oh) || !digits(text, pos + 4, 2, om)) return false;
            offset = hours{oh} + minutes{om};
            if (c == '-') offset = -offset;
        } else {
            return false;
        }
    }
    out = TimePoint{d} + hours{hh} + minutes{mm} + seconds{ss} - offset;
    return true;
}

std::string format_date(Date d) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_timestamp(TimePoint t) {
    const Date d = floor<days>(t);
    const hh_mm_ss<seconds> tod{t - d};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(d).c_str(),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()));
    return buf;
}

Date date_of(TimePoint t) { return floor<days>(t); }

int hour_of(TimePoint t) {
    return static_cast<int>(duration_cast<hours>(t - date_of(t)).count());
}

int minute_of(TimePoint t) {
    return static_cast<int>(duration_cast<minutes>(t - date_of(t)).count() % 60);
}

int day_of_week(Date d) {
    return static_cast<int>(weekday{d}.iso_encoding()) - 1;
}

int month_of(Date d) { return static_cast<int>(static_cast<unsigned>(year_month_day{d}.month())); }

int year_of(Date d) { return static_cast<int>(year_month_day{d}.year()); }

int iso_week(Date d) {
    // The ISO week belongs to the year of its Thursday.
    const Date thursday = d + days{3 - day_of_week(d)};
    const year y = year_month_day{thursday}.year();
    const Date jan1 = sys_days{y / January / 1};
    return static_cast<int>((thursday - jan1).count() / 7) + 1;
}

}  // namespace bikeflow
