#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cookielife/panel.hpp"

namespace cookielife {

inline constexpr std::string_view kPanelHeader =
    "cookie_id,date,day_index,impressions,avg_price_cpm,video_share,above_fold_share,retarget_share";
inline constexpr std::string_view kCookiesHeader = "cookie_id,first_date,last_date,country,device_type,os,browser";

// Fixed-point with `decimals` places; "NA" for non-finite values.
std::string fixed(double value, int decimals);
// Shortest round-trip representation; "NA" for non-finite values.
std::string exact(double value);
// Integer rounding with ties away from zero.
long long round_half_up(double value);

std::vector<std::string_view> split_csv_line(std::string_view line);
// Reads a header line and checks it equals `expected`. Throws SchemaError.
void expect_header(std::istream& in, std::string_view expected, std::string_view file);

void write_panel_csv(std::ostream& out, std::span<const CookieRecord> records);
void write_cookies_csv(std::ostream& out, std::span<const CookieRecord> records);

// Rebuilds records from the two files written above. Throws SchemaError or
// DataError on malformed content.
std::vector<CookieRecord> read_panel(std::istream& panel_csv, std::istream& cookies_csv);

}  // namespace cookielife
