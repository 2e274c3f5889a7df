#include "cookielife/panel_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "cookielife/error.hpp"

namespace cookielife {

namespace {

template <class T>
T parse_number(std::string_view field, std::string_view what, std::size_t line) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc{} || ptr != end)
    throw DataError(fmt::format("line {}: bad {} '{}'", line, what, field));
  return value;
}

}  // namespace

std::string fixed(double value, int decimals) {
  if (!std::isfinite(value)) return "NA";
  std::string s = fmt::format("{:.{}f}", value, decimals);
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string exact(double value) {
  if (!std::isfinite(value)) return "NA";
  if (value == 0.0) return "0";
  return fmt::format("{}", value);
}

long long round_half_up(double value) { return std::llround(value); }

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(',', pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

void expect_header(std::istream& in, std::string_view expected, std::string_view file) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(fmt::format("{}: missing header row", file));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) throw SchemaError(fmt::format("{}: header must be exactly '{}'", file, expected));
}

void write_panel_csv(std::ostream& out, std::span<const CookieRecord> records) {
  out << kPanelHeader << '\n';
  for (const auto& r : records) {
    for (const auto& d : r.days) {
      out << fmt::format("{},{},{},{},{},{},{},{}\n", r.cookie_id, format_date(d.date), d.day_index, d.impressions,
                         fixed(d.avg_price_cpm, 6), fixed(d.video_share, 6), fixed(d.above_fold_share, 6),
                         fixed(d.retarget_share, 6));
    }
  }
}

void write_cookies_csv(std::ostream& out, std::span<const CookieRecord> records) {
  out << kCookiesHeader << '\n';
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{}\n", r.cookie_id, format_date(r.first_date), format_date(r.last_date),
                       r.user_attrs.country, r.user_attrs.device_type, r.user_attrs.os, r.user_attrs.browser);
  }
}

std::vector<CookieRecord> read_panel(std::istream& panel_csv, std::istream& cookies_csv) {
  expect_header(panel_csv, kPanelHeader, "panel.csv");
  expect_header(cookies_csv, kCookiesHeader, "cookies.csv");

  std::map<CookieId, CookieRecord> byid;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(cookies_csv, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw DataError(fmt::format("cookies.csv line {}: expected 7 fields", line_no));
    CookieRecord r;
    r.cookie_id = parse_number<CookieId>(f[0], "cookie_id", line_no);
    r.user_attrs = UserAttrs{std::string(f[3]), std::string(f[4]), std::string(f[5]), std::string(f[6])};
    if (!byid.emplace(r.cookie_id, std::move(r)).second)
      throw DataError(fmt::format("cookies.csv line {}: duplicate cookie_id", line_no));
  }

  line_no = 1;
  while (std::getline(panel_csv, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError(fmt::format("panel.csv line {}: expected 8 fields", line_no));
    const auto id = parse_number<CookieId>(f[0], "cookie_id", line_no);
    const auto it = byid.find(id);
    if (it == byid.end()) throw DataError(fmt::format("panel.csv line {}: cookie {} not in cookies.csv", line_no, id));
    DailyObservation d;
    d.date = parse_date(f[1]);
    d.day_index = parse_number<int>(f[2], "day_index", line_no);
    d.impressions = parse_number<int>(f[3], "impressions", line_no);
    d.avg_price_cpm = parse_number<double>(f[4], "avg_price_cpm", line_no);
    d.video_share = parse_number<double>(f[5], "video_share", line_no);
    d.above_fold_share = parse_number<double>(f[6], "above_fold_share", line_no);
    d.retarget_share = parse_number<double>(f[7], "retarget_share", line_no);
    if (d.impressions < 1 || d.avg_price_cpm < 0.0)
      throw DataError(fmt::format("panel.csv line {}: invalid day aggregate", line_no));
    it->second.days.push_back(d);
  }

  std::vector<CookieRecord> out;
  out.reserve(byid.size());
  for (auto& [id, r] : byid) {
    std::sort(r.days.begin(), r.days.end(),
              [](const DailyObservation& a, const DailyObservation& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < r.days.size(); ++i)
      if (r.days[i].date == r.days[i - 1].date)
        throw DataError(fmt::format("panel.csv: cookie {} repeats date {}", id, format_date(r.days[i].date)));
    const std::vector<int> stored = [&] {
      std::vector<int> v;
      for (const auto& d : r.days) v.push_back(d.day_index);
      return v;
    }();
    finalize_record(r);
    for (std::size_t i = 0; i < r.days.size(); ++i)
      if (r.days[i].day_index != stored[i])
        throw DataError(fmt::format("panel.csv: cookie {} has inconsistent day_index", id));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cookielife
