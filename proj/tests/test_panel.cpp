#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "cookielife/error.hpp"
#include "cookielife/panel.hpp"
#include "cookielife/panel_io.hpp"
#include "oracles.hpp"

using namespace cookielife;

namespace {

std::string header() { return std::string(kImpressionHeader) + "\n"; }

ImpressionEvent event(CookieId id, const char* ts, double price) {
  ImpressionEvent e;
  e.cookie_id = id;
  e.timestamp = parse_timestamp(ts);
  e.price_cpm = price;
  return e;
}

std::vector<ImpressionEvent> random_events(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> id(1, 40), day(0, 59), sec(0, 86399), coin(0, 1), fold(0, 2);
  std::uniform_real_distribution<double> price(0.0, 5.0);
  const Timestamp base = parse_timestamp("2015-01-01T00:00:00Z");
  std::vector<ImpressionEvent> out;
  for (std::size_t i = 0; i < n; ++i) {
    ImpressionEvent e;
    e.cookie_id = static_cast<CookieId>(id(rng));
    e.timestamp = base + std::chrono::days{day(rng)} + std::chrono::seconds{sec(rng)};
    e.price_cpm = std::round(price(rng) * 1e6) / 1e6;
    e.media_type = coin(rng) ? MediaType::video : MediaType::display;
    e.fold = static_cast<Fold>(fold(rng));
    e.retargeted = coin(rng);
    out.push_back(e);
  }
  return out;
}

std::vector<CookieId> all_ids(std::span<const ImpressionEvent> events) {
  std::set<CookieId> s;
  for (const auto& e : events) s.insert(e.cookie_id);
  return {s.begin(), s.end()};
}

std::string panel_text(std::span<const CookieRecord> records) {
  std::ostringstream os;
  write_panel_csv(os, records);
  write_cookies_csv(os, records);
  return os.str();
}

}  // namespace

TEST_CASE("impression rows map field by field") {
  std::istringstream in(header() + "42,2015-04-29T10:00:00Z,1.181,display,above,0,DE,desktop,Windows,Firefox\n");
  const auto r = parse_impressions(in);
  REQUIRE(r.events.size() == 1);
  const auto& e = r.events[0];
  CHECK(e.cookie_id == 42);
  CHECK(e.price_cpm == doctest::Approx(1.181));
  CHECK(e.media_type == MediaType::display);
  CHECK(e.fold == Fold::above);
  CHECK_FALSE(e.retargeted);
  CHECK(e.attrs.country == "DE");
  CHECK(e.attrs.browser == "Firefox");
  CHECK(format_timestamp(e.timestamp) == "2015-04-29T10:00:00Z");
}

TEST_CASE("header-only input yields no events") {
  std::istringstream in(header());
  CHECK(parse_impressions(in).events.empty());
}

TEST_CASE("header problems are schema errors") {
  std::istringstream missing("cookie_id,timestamp,price_cpm\n1,2015-01-01T00:00:00Z,1\n");
  CHECK_THROWS_AS(parse_impressions(missing), SchemaError);
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_impressions(empty), SchemaError);
}

TEST_CASE("negative price fixture") {
  std::ifstream strict(COOKIELIFE_FIXTURES "/bad_price.csv");
  REQUIRE(strict);
  try {
    parse_impressions(strict, ParseMode::strict);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  std::ifstream skip(COOKIELIFE_FIXTURES "/bad_price.csv");
  const auto r = parse_impressions(skip, ParseMode::skip);
  CHECK(r.events.size() == 2);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].line == 3);
}

TEST_CASE("malformed fields are rejected") {
  for (const char* row : {"x,2015-01-01T00:00:00Z,1,display,above,0,DE,desktop,Windows,Chrome",
                          "1,2015-13-01T00:00:00Z,1,display,above,0,DE,desktop,Windows,Chrome",
                          "1,2015-01-01T00:00:00Z,abc,display,above,0,DE,desktop,Windows,Chrome",
                          "1,2015-01-01T00:00:00Z,1,banner,above,0,DE,desktop,Windows,Chrome",
                          "1,2015-01-01T00:00:00Z,1,display,above,2,DE,desktop,Windows,Chrome",
                          "1,2015-01-01T00:00:00Z,1,display,above,0,DE,desktop,Windows"}) {
    std::istringstream in(header() + row + "\n");
    CHECK_THROWS_AS(parse_impressions(in), DataError);
  }
}

TEST_CASE("daily aggregation") {
  SUBCASE("three prices on one day") {
    std::vector<ImpressionEvent> ev{event(7, "2015-03-01T01:00:00Z", 1), event(7, "2015-03-01T02:00:00Z", 2),
                                    event(7, "2015-03-01T03:00:00Z", 3)};
    const std::vector<CookieId> ids{7};
    const auto p = build_daily_panel(ev, ids);
    REQUIRE(p.records.size() == 1);
    const auto& d = p.records[0].days.at(0);
    CHECK(d.avg_price_cpm == doctest::Approx(2.0));
    CHECK(d.revenue() == doctest::Approx(0.006));
  }
  SUBCASE("single impression at 1000 CPM") {
    std::vector<ImpressionEvent> ev{event(1, "2015-03-01T12:00:00Z", 1000)};
    const std::vector<CookieId> ids{1};
    const auto r = build_daily_panel(ev, ids).records.at(0);
    CHECK(r.observed_lvc == doctest::Approx(1.0));
    CHECK(r.observed_lifetime_days == 1);
    CHECK(r.activity_share == 1.0);
    const auto s = lifetime_stats(r);
    CHECK(s.impressions_per_day == 1.0);
  }
  SUBCASE("UTC day boundaries and inclusive lifetime") {
    std::vector<ImpressionEvent> ev{event(1, "2015-03-01T23:59:59Z", 1), event(1, "2015-03-02T00:00:00Z", 1),
                                    event(1, "2015-03-05T00:00:00Z", 1)};
    const std::vector<CookieId> ids{1};
    const auto r = build_daily_panel(ev, ids).records.at(0);
    CHECK(r.days.size() == 3);
    CHECK(r.days[1].day_index == 2);
    CHECK(r.days[2].day_index == 5);
    CHECK(r.observed_lifetime_days == 5);
    CHECK(r.active_days == 3);
    CHECK(r.activity_share == doctest::Approx(0.6));
  }
  SUBCASE("ids without impressions are reported") {
    std::vector<ImpressionEvent> ev{event(1, "2015-03-01T12:00:00Z", 1)};
    const std::vector<CookieId> ids{1, 99};
    const auto p = build_daily_panel(ev, ids);
    CHECK(p.records.size() == 1);
    CHECK(p.missing_ids == std::vector<CookieId>{99});
  }
  SUBCASE("attributes come from the earliest event") {
    auto late = event(1, "2015-03-02T12:00:00Z", 1);
    late.attrs.country = "AT";
    auto early = event(1, "2015-03-01T12:00:00Z", 1);
    early.attrs.country = "DE";
    std::vector<ImpressionEvent> ev{late, early};
    const std::vector<CookieId> ids{1};
    CHECK(build_daily_panel(ev, ids).records.at(0).user_attrs.country == "DE");
  }
}

TEST_CASE("lifetime summaries of the illustrative cookies") {
  CookieRecord a;
  a.observed_lifetime_days = 592;
  a.active_days = 400;
  a.total_impressions = 9162;
  a.observed_lvc = 9162 * 1.181 / 1000.0;
  DailyObservation d;
  d.impressions = 9162;
  d.avg_price_cpm = 1.181;
  a.days.push_back(d);
  const auto s = lifetime_stats(a);
  CHECK(s.impressions_per_day == doctest::Approx(15.476).epsilon(1e-4));
  CHECK(s.observed_lvc == doctest::Approx(10.823).epsilon(0.001));

  CookieRecord b;
  b.observed_lifetime_days = 239;
  b.observed_lvc = 2.011;
  CHECK(lifetime_stats(b).value_per_day == doctest::Approx(0.008414).epsilon(1e-3));
}

TEST_CASE("panel invariants on random logs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto events = random_events(seed, 3000);
    const auto ids = all_ids(events);
    const auto p = build_daily_panel(events, ids);

    std::int64_t n = 0;
    for (const auto& r : p.records) {
      n += r.total_impressions;
      double lvc = 0.0;
      for (const auto& d : r.days) lvc += d.revenue();
      CHECK(r.observed_lvc == doctest::Approx(lvc).epsilon(1e-12));
      CHECK(r.active_days <= r.observed_lifetime_days);
      if (r.activity_share == 1.0) CHECK(r.active_days == r.observed_lifetime_days);
      CHECK(r.days.front().day_index == 1);
      CHECK(r.days.back().day_index == r.observed_lifetime_days);
    }
    CHECK(n == static_cast<std::int64_t>(events.size()));

    std::mt19937_64 rng(seed + 100);
    std::shuffle(events.begin(), events.end(), rng);
    CHECK(panel_text(build_daily_panel(events, ids).records) == panel_text(p.records));
  }
}

TEST_CASE("panel files round trip") {
  const auto events = random_events(11, 2000);
  const auto ids = all_ids(events);
  const auto p = build_daily_panel(events, ids);
  std::ostringstream panel, cookies;
  write_panel_csv(panel, p.records);
  write_cookies_csv(cookies, p.records);
  std::istringstream pin(panel.str()), cin(cookies.str());
  const auto back = read_panel(pin, cin);
  CHECK(panel_text(back) == panel_text(p.records));
}

TEST_CASE("cookie sampling") {
  const Date day = parse_date("2015-06-01");
  std::vector<ImpressionEvent> events;
  for (CookieId id = 1; id <= 10000; ++id) {
    ImpressionEvent e;
    e.cookie_id = id;
    e.timestamp = Timestamp{day} + std::chrono::hours{id % 24};
    e.price_cpm = 1.0;
    events.push_back(e);
  }
  events.push_back(event(20000, "2015-06-02T00:00:00Z", 1.0));

  const auto all = sample_cookie_ids(events, day, 1.0, 1);
  CHECK(all.size() == 10000);
  CHECK(std::find(all.begin(), all.end(), 20000) == all.end());

  const auto a = sample_cookie_ids(events, day, 0.01, 5);
  const auto b = sample_cookie_ids(events, day, 0.01, 5);
  const auto c = sample_cookie_ids(events, day, 0.01, 6);
  CHECK(a.size() == 100);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::set<CookieId>(a.begin(), a.end()).size() == a.size());

  CHECK_THROWS_AS(sample_cookie_ids(events, parse_date("2014-01-01"), 0.5, 1), DataError);
  CHECK_THROWS_AS(sample_cookie_ids(events, day, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(sample_cookie_ids(events, day, 1.5, 1), ConfigError);
}

TEST_CASE("calendar arithmetic agrees with a naive day count") {
  for (const char* d : {"1970-01-01", "2000-02-29", "2014-03-03", "2016-07-16", "2100-03-01"}) {
    CHECK(parse_date(d).time_since_epoch().count() == oracle::days_from_text(d));
    CHECK(format_date(parse_date(d)) == d);
  }
  CHECK_THROWS_AS(parse_date("2015-02-29"), DataError);
  CHECK_THROWS_AS(parse_timestamp("2015-02-01 12:00:00"), DataError);
}
