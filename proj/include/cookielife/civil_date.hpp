#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace cookielife {

using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

// Strict YYYY-MM-DD. Throws DataError.
Date parse_date(std::string_view text);
// Strict YYYY-MM-DDTHH:MM:SSZ (UTC). Throws DataError.
Timestamp parse_timestamp(std::string_view text);

std::string format_date(Date d);
std::string format_timestamp(Timestamp ts);

inline Date date_of(Timestamp ts) { return std::chrono::floor<std::chrono::days>(ts); }

// Signed number of calendar days from `from` to `to`.
inline int days_between(Date from, Date to) { return static_cast<int>((to - from).count()); }

inline Date add_days(Date d, int n) { return d + std::chrono::days{n}; }

// Inclusive calendar window of observation.
struct Window {
  Date start;
  Date end;

  int length_days() const { return days_between(start, end) + 1; }
  bool contains(Date d) const { return d >= start && d <= end; }
};

}  // namespace cookielife
