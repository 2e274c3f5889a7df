#include "cookielife/civil_date.hpp"

#include <fmt/format.h>

#include "cookielife/error.hpp"

namespace cookielife {

namespace {

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    const char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

Date checked_date(int y, int m, int d, std::string_view text) {
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError(fmt::format("invalid calendar date '{}'", text));
  return Date{ymd};
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !read_digits(text, 0, 4, y) ||
      !read_digits(text, 5, 2, m) || !read_digits(text, 8, 2, d)) {
    throw DataError(fmt::format("expected YYYY-MM-DD, got '{}'", text));
  }
  return checked_date(y, m, d, text);
}

Timestamp parse_timestamp(std::string_view text) {
  int hh = 0, mm = 0, ss = 0;
  if (text.size() != 20 || text[10] != 'T' || text[13] != ':' || text[16] != ':' || text[19] != 'Z' ||
      !read_digits(text, 11, 2, hh) || !read_digits(text, 14, 2, mm) || !read_digits(text, 17, 2, ss) ||
      hh > 23 || mm > 59 || ss > 59) {
    throw DataError(fmt::format("expected YYYY-MM-DDTHH:MM:SSZ, got '{}'", text));
  }
  const Date d = parse_date(text.substr(0, 10));
  return Timestamp{d} + std::chrono::hours{hh} + std::chrono::minutes{mm} + std::chrono::seconds{ss};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

std::string format_timestamp(Timestamp ts) {
  const Date d = date_of(ts);
  const auto secs = (ts - Timestamp{d}).count();
  return fmt::format("{}T{:02d}:{:02d}:{:02d}Z", format_date(d), secs / 3600, (secs / 60) % 60, secs % 60);
}

}  // namespace cookielife
