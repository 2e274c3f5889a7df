#include "cookielife/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <random>

#include <fmt/format.h>

#include "cookielife/error.hpp"

namespace cookielife {

namespace {

constexpr double kMicro = 1e6;
constexpr double kMaxPriceCpm = 1e9;

std::vector<std::string_view> split_commas(std::string_view line) {
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

std::string label(std::string_view field) { return field.empty() ? std::string("Unknown") : std::string(field); }

ImpressionEvent parse_row(std::string_view line) {
  const auto f = split_commas(line);
  if (f.size() != 10) throw DataError(fmt::format("expected 10 fields, found {}", f.size()));

  ImpressionEvent e;
  {
    const auto* end = f[0].data() + f[0].size();
    const auto [ptr, ec] = std::from_chars(f[0].data(), end, e.cookie_id);
    if (f[0].empty() || ec != std::errc{} || ptr != end) throw DataError(fmt::format("bad cookie_id '{}'", f[0]));
  }
  e.timestamp = parse_timestamp(f[1]);
  {
    const auto* end = f[2].data() + f[2].size();
    const auto [ptr, ec] = std::from_chars(f[2].data(), end, e.price_cpm);
    if (f[2].empty() || ec != std::errc{} || ptr != end || !std::isfinite(e.price_cpm))
      throw DataError(fmt::format("bad price_cpm '{}'", f[2]));
    if (e.price_cpm < 0.0) throw DataError(fmt::format("negative price_cpm '{}'", f[2]));
    if (e.price_cpm > kMaxPriceCpm) throw DataError(fmt::format("price_cpm out of range '{}'", f[2]));
  }
  if (f[3] == "display") {
    e.media_type = MediaType::display;
  } else if (f[3] == "video") {
    e.media_type = MediaType::video;
  } else {
    throw DataError(fmt::format("bad media_type '{}'", f[3]));
  }
  if (f[4] == "above") {
    e.fold = Fold::above;
  } else if (f[4] == "below") {
    e.fold = Fold::below;
  } else if (f[4] == "unknown") {
    e.fold = Fold::unknown;
  } else {
    throw DataError(fmt::format("bad fold '{}'", f[4]));
  }
  if (f[5] == "1") {
    e.retargeted = true;
  } else if (f[5] != "0") {
    throw DataError(fmt::format("bad retargeted '{}'", f[5]));
  }
  e.attrs = UserAttrs{label(f[6]), label(f[7]), label(f[8]), label(f[9])};
  return e;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void finalize_record(CookieRecord& r) {
  if (r.days.empty()) throw DataError(fmt::format("cookie {} has no active days", r.cookie_id));
  r.first_date = r.days.front().date;
  r.last_date = r.days.back().date;
  r.observed_lifetime_days = days_between(r.first_date, r.last_date) + 1;
  r.active_days = static_cast<int>(r.days.size());
  r.activity_share = static_cast<double>(r.active_days) / r.observed_lifetime_days;
  r.total_impressions = 0;
  r.observed_lvc = 0.0;
  for (auto& d : r.days) {
    d.day_index = days_between(r.first_date, d.date) + 1;
    r.total_impressions += d.impressions;
    r.observed_lvc += d.revenue();
  }
}

std::size_t for_each_impression(std::istream& in, ParseMode mode,
                                const std::function<void(const ImpressionEvent&)>& sink,
                                std::vector<RowError>* errors) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("missing header row");
  strip_cr(line);
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (line != kImpressionHeader) {
    const auto got = split_commas(line);
    const auto want = split_commas(kImpressionHeader);
    for (const auto& col : want) {
      if (std::find(got.begin(), got.end(), col) == got.end())
        throw SchemaError(fmt::format("missing column '{}' in header", col));
    }
    throw SchemaError(fmt::format("header must be exactly '{}'", kImpressionHeader));
  }

  std::size_t line_no = 1;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    try {
      sink(parse_row(line));
      ++count;
    } catch (const DataError& err) {
      if (mode == ParseMode::strict) throw DataError(fmt::format("line {}: {}", line_no, err.what()));
      if (errors) errors->push_back(RowError{line_no, err.what()});
    }
  }
  return count;
}

ParseResult parse_impressions(std::istream& in, ParseMode mode) {
  ParseResult res;
  for_each_impression(
      in, mode, [&](const ImpressionEvent& e) { res.events.push_back(e); }, &res.errors);
  return res;
}

void PanelBuilder::add(const ImpressionEvent& e) {
  const int day = static_cast<int>(date_of(e.timestamp).time_since_epoch().count());
  auto& c = cookies_[e.cookie_id];
  if (c.days.empty() || c.days.back().day != day) c.days.push_back(DayAccum{day});
  auto& d = c.days.back();
  d.impressions += 1;
  d.price_micro += std::llround(e.price_cpm * kMicro);
  d.video += e.media_type == MediaType::video;
  d.above += e.fold == Fold::above;
  d.retarget += e.retargeted;
  if (e.timestamp < c.attrs_time || (e.timestamp == c.attrs_time && e.attrs < c.attrs)) {
    c.attrs_time = e.timestamp;
    c.attrs = e.attrs;
  }
  min_day_ = std::min(min_day_, day);
  max_day_ = std::max(max_day_, day);
  ++events_;
}

std::vector<CookieId> PanelBuilder::active_on(Date date) const {
  const int day = static_cast<int>(date.time_since_epoch().count());
  std::vector<CookieId> out;
  for (const auto& [id, c] : cookies_) {
    if (std::any_of(c.days.begin(), c.days.end(), [day](const DayAccum& d) { return d.day == day; }))
      out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<CookieId> PanelBuilder::ids() const {
  std::vector<CookieId> out;
  out.reserve(cookies_.size());
  for (const auto& kv : cookies_) out.push_back(kv.first);
  std::sort(out.begin(), out.end());
  return out;
}

Window PanelBuilder::observed_span() const {
  if (events_ == 0) throw DataError("no impressions");
  return Window{Date{std::chrono::days{min_day_}}, Date{std::chrono::days{max_day_}}};
}

std::vector<CookieRecord> PanelBuilder::build(std::span<const CookieId> ids, std::vector<CookieId>* missing) const {
  std::vector<CookieId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<CookieRecord> out;
  out.reserve(sorted.size());
  for (const CookieId id : sorted) {
    const auto it = cookies_.find(id);
    if (it == cookies_.end()) {
      if (missing) missing->push_back(id);
      continue;
    }
    auto days = it->second.days;
    std::sort(days.begin(), days.end(), [](const DayAccum& a, const DayAccum& b) { return a.day < b.day; });
    CookieRecord r;
    r.cookie_id = id;
    r.user_attrs = it->second.attrs;
    for (std::size_t i = 0; i < days.size();) {
      DayAccum acc = days[i];
      std::size_t j = i + 1;
      for (; j < days.size() && days[j].day == acc.day; ++j) {
        acc.impressions += days[j].impressions;
        acc.price_micro += days[j].price_micro;
        acc.video += days[j].video;
        acc.above += days[j].above;
        acc.retarget += days[j].retarget;
      }
      i = j;
      DailyObservation obs;
      obs.date = Date{std::chrono::days{acc.day}};
      obs.impressions = static_cast<int>(acc.impressions);
      const double n = static_cast<double>(acc.impressions);
      obs.avg_price_cpm = static_cast<double>(acc.price_micro) / (kMicro * n);
      obs.video_share = static_cast<double>(acc.video) / n;
      obs.above_fold_share = static_cast<double>(acc.above) / n;
      obs.retarget_share = static_cast<double>(acc.retarget) / n;
      r.days.push_back(obs);
    }
    finalize_record(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CookieId> sample_cookie_ids(const PanelBuilder& builder, Date sampling_date, double fraction,
                                        std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("sampling fraction must lie in (0, 1]");
  const auto active = builder.active_on(sampling_date);
  if (active.empty()) throw DataError(fmt::format("no cookies active on {}", format_date(sampling_date)));
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * active.size())));
  std::vector<CookieId> out;
  out.reserve(k);
  std::mt19937_64 rng{seed};
  std::sample(active.begin(), active.end(), std::back_inserter(out), k, rng);
  return out;
}

std::vector<CookieId> sample_cookie_ids(std::span<const ImpressionEvent> events, Date sampling_date, double fraction,
                                        std::uint64_t seed) {
  PanelBuilder b;
  for (const auto& e : events) b.add(e);
  return sample_cookie_ids(b, sampling_date, fraction, seed);
}

PanelBuildResult build_daily_panel(std::span<const ImpressionEvent> events, std::span<const CookieId> ids) {
  std::vector<CookieId> wanted(ids.begin(), ids.end());
  std::sort(wanted.begin(), wanted.end());
  PanelBuilder b;
  for (const auto& e : events)
    if (std::binary_search(wanted.begin(), wanted.end(), e.cookie_id)) b.add(e);
  PanelBuildResult res;
  res.records = b.build(wanted, &res.missing_ids);
  return res;
}

LifetimeSummary lifetime_stats(const CookieRecord& r) {
  LifetimeSummary s;
  s.lifetime_days = r.observed_lifetime_days;
  s.active_days = r.active_days;
  s.activity_share = r.activity_share;
  s.impressions = r.total_impressions;
  s.impressions_per_day = static_cast<double>(r.total_impressions) / r.observed_lifetime_days;
  s.value_per_day = r.observed_lvc / r.observed_lifetime_days;
  s.mean_cpm = r.total_impressions > 0 ? r.observed_lvc * 1000.0 / static_cast<double>(r.total_impressions) : 0.0;
  s.observed_lvc = r.observed_lvc;
  return s;
}

}  // namespace cookielife
