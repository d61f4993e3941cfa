#pragma once

#include <cstdint>
#include <string>

namespace plumeseg {

/// Seconds since the Unix epoch, UTC.
using UtcInstant = std::int64_t;

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (fractional seconds and "+00:00" accepted).
UtcInstant parse_iso8601(const std::string& s);

/// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(UtcInstant t);

/// Calendar day, used as a panel time index.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const Date&) const = default;
};

Date parse_date(const std::string& s);  // "YYYY-MM-DD"
std::string format_date(const Date& d);

/// Days since 1970-01-01.
std::int64_t days_from_civil(const Date& d);
Date civil_from_days(std::int64_t z);

/// Calendar day containing a UTC instant.
Date date_of(UtcInstant t);

}  // namespace plumeseg
