#include "plumeseg/timeutil.hpp"

#include <cstdio>

#include "plumeseg/errors.hpp"

namespace plumeseg {

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return d[m - 1];
}

}  // namespace

std::int64_t days_from_civil(const Date& d) {
    // Howard Hinnant's civil-days algorithm.
    int y = d.year;
    const int m = d.month;
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d.day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

Date civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

Date parse_date(const std::string& s) {
    int y = 0, mo = 0, d = 0;
    char tail = '\0';
    const int got = std::sscanf(s.c_str(), "%d-%d-%d%c", &y, &mo, &d, &tail);
    if (got != 3 || mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo))
        throw FormatError("bad date: " + s);
    return Date{y, mo, d};
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

UtcInstant parse_iso8601(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double sec = 0.0;
    char sep = '\0';
    const int got = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (got < 3 || mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo))
        throw FormatError("bad ISO-8601 instant: " + s);
    if (got >= 4 && sep != 'T' && sep != 't' && sep != ' ')
        throw FormatError("bad ISO-8601 instant: " + s);
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0.0 || sec >= 61.0)
        throw FormatError("bad ISO-8601 instant: " + s);
    // Trailing "Z" or "+00:00" is accepted but not validated as a full offset
    // grammar; inputs are UTC by contract.
    const std::int64_t days = days_from_civil(Date{y, mo, d});
    return days * 86400 + h * 3600 + mi * 60 + static_cast<std::int64_t>(sec);
}

std::string format_iso8601(UtcInstant t) {
    std::int64_t days = t / 86400;
    std::int64_t rem = t % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    const Date d = civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year, d.month, d.day,
                  static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

Date date_of(UtcInstant t) {
    std::int64_t days = t / 86400;
    if (t % 86400 < 0) days -= 1;
    return civil_from_days(days);
}

}  // namespace plumeseg
