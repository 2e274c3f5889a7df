#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cookielife/civil_date.hpp"

namespace cookielife {

using CookieId = std::uint64_t;

enum class MediaType { display, video };
enum class Fold { above, below, unknown };

struct UserAttrs {
  std::string country = "Unknown";
  std::string device_type = "Unknown";
  std::string os = "Unknown";
  std::string browser = "Unknown";

  auto operator<=>(const UserAttrs&) const = default;
};

struct ImpressionEvent {
  CookieId cookie_id = 0;
  Timestamp timestamp{};
  double price_cpm = 0.0;
  MediaType media_type = MediaType::display;
  Fold fold = Fold::unknown;
  bool retargeted = false;
  UserAttrs attrs;
};

struct DailyObservation {
  Date date{};
  int day_index = 1;  // calendar days since first activity, first day = 1
  int impressions = 0;
  double avg_price_cpm = 0.0;
  double video_share = 0.0;
  double above_fold_share = 0.0;
  double retarget_share = 0.0;

  // Euros earned that day.
  double revenue() const { return impressions * avg_price_cpm / 1000.0; }
};

struct CookieRecord {
  CookieId cookie_id = 0;
  Date first_date{};
  Date last_date{};
  int observed_lifetime_days = 0;  // inclusive: (last - first) + 1
  int active_days = 0;
  double activity_share = 0.0;
  std::vector<DailyObservation> days;
  std::int64_t total_impressions = 0;
  double observed_lvc = 0.0;  // euros
  UserAttrs user_attrs;
};

// Recomputes the derived fields of `r` from r.days, which must be sorted by
// date. first_date is the first row's date.
void finalize_record(CookieRecord& r);

inline constexpr std::string_view kImpressionHeader =
    "cookie_id,timestamp,price_cpm,media_type,fold,retargeted,country,device_type,os,browser";

enum class ParseMode { strict, skip };

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct ParseResult {
  std::vector<ImpressionEvent> events;
  std::vector<RowError> errors;
};

// Streams rows to `sink` in file order. Header mismatch throws SchemaError;
// in strict mode the first bad row throws DataError naming its line, in skip
// mode bad rows are collected into `errors`. Returns the number of events.
std::size_t for_each_impression(std::istream& in, ParseMode mode,
                                const std::function<void(const ImpressionEvent&)>& sink,
                                std::vector<RowError>* errors = nullptr);

ParseResult parse_impressions(std::istream& in, ParseMode mode = ParseMode::strict);

// Incremental per-cookie, per-day aggregation. Prices are accumulated as
// integer micro-CPM so the result does not depend on event order.
class PanelBuilder {
 public:
  void add(const ImpressionEvent& e);

  std::size_t event_count() const { return events_; }
  std::size_t cookie_count() const { return cookies_.size(); }

  // Sorted ids with at least one impression on `date`.
  std::vector<CookieId> active_on(Date date) const;
  // Sorted ids of every cookie seen.
  std::vector<CookieId> ids() const;
  // Earliest and latest event dates. Throws DataError if empty.
  Window observed_span() const;

  // Records for `ids` in ascending id order. Ids without impressions are
  // skipped and appended to `missing` when given.
  std::vector<CookieRecord> build(std::span<const CookieId> ids, std::vector<CookieId>* missing = nullptr) const;

 private:
  struct DayAccum {
    int day = 0;  // days since epoch
    std::int64_t impressions = 0;
    std::int64_t price_micro = 0;
    std::int64_t video = 0;
    std::int64_t above = 0;
    std::int64_t retarget = 0;
  };
  struct CookieAccum {
    std::vector<DayAccum> days;
    Timestamp attrs_time = Timestamp::max();
    UserAttrs attrs;
  };

  std::unordered_map<CookieId, CookieAccum> cookies_;
  std::size_t events_ = 0;
  int min_day_ = INT32_MAX;
  int max_day_ = INT32_MIN;
};

// Uniform sample without replacement of round(fraction * n) ids among the n
// cookies active on `sampling_date`; sorted ascending. Throws DataError when
// nobody is active that day and ConfigError for fraction outside (0, 1].
std::vector<CookieId> sample_cookie_ids(const PanelBuilder& builder, Date sampling_date, double fraction,
                                        std::uint64_t seed);
std::vector<CookieId> sample_cookie_ids(std::span<const ImpressionEvent> events, Date sampling_date, double fraction,
                                        std::uint64_t seed);

struct PanelBuildResult {
  std::vector<CookieRecord> records;
  std::vector<CookieId> missing_ids;  // requested ids without impressions
};

PanelBuildResult build_daily_panel(std::span<const ImpressionEvent> events, std::span<const CookieId> ids);

struct LifetimeSummary {
  int lifetime_days = 0;
  int active_days = 0;
  double activity_share = 0.0;
  std::int64_t impressions = 0;
  double impressions_per_day = 0.0;
  double value_per_day = 0.0;  // euros per observed day
  double mean_cpm = 0.0;       // impression-weighted
  double observed_lvc = 0.0;
};

LifetimeSummary lifetime_stats(const CookieRecord& r);

}  // namespace cookielife
