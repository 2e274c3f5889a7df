#include "cookielife/policysim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cookielife/error.hpp"
#include "cookielife/parallel.hpp"
#include "cookielife/special.hpp"

namespace cookielife {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool priced_by_model(EffectClass c) { return c == EffectClass::positive || c == EffectClass::negative; }

double observed_value(const CookieRecord& r, double divisor) {
  double v = 0.0;
  for (const auto& d : r.days) v += d.impressions * d.avg_price_cpm / divisor;
  return v;
}

}  // namespace

double predicted_price(const ValueModelFit& fit, int day) {
  double v = fit.intercept + fit.slope * day;
  if (!std::isnan(fit.slope2)) v += fit.slope2 * static_cast<double>(day) * day;
  for (std::size_t j = 0; j < fit.beta_cov.size(); ++j)
    if (!std::isnan(fit.beta_cov[j])) v += fit.beta_cov[j] * fit.mean_shares[j];
  if (fit.log_price) v = std::exp(v);
  return std::max(v, 0.0);
}

int restricted_day(int day, int limit_days) {
  if (day < 1 || limit_days < 1) throw DomainError("day and restriction must be at least 1");
  return (day - 1) % limit_days + 1;
}

double value_days(const CookieValueInput& in, int first_day, int last_day, std::optional<int> limit_days,
                  double divisor) {
  if (last_day < first_day) return 0.0;
  const CookieRecord& r = *in.record;
  if (!priced_by_model(in.fit.effect_class)) {
    // Cumulative value grows linearly at the observed mean daily rate.
    const double rate = observed_value(r, divisor) / r.observed_lifetime_days;
    if (first_day == 1 && last_day == r.observed_lifetime_days) return observed_value(r, divisor);
    return rate * (last_day - first_day + 1);
  }
  double sum = 0.0;
  for (int t = first_day; t <= last_day; ++t) sum += predicted_price(in.fit, limit_days ? restricted_day(t, *limit_days) : t);
  return r.activity_share * in.quantity.n_bar * sum / divisor;
}

double value_lifetime(const CookieValueInput& in, std::optional<int> limit_days, double divisor) {
  const int obs = in.record->observed_lifetime_days;
  const int T = std::max(in.uncensored_lifetime, obs);
  if (!priced_by_model(in.fit.effect_class)) {
    return value_days(in, 1, obs, std::nullopt, divisor) + value_days(in, obs + 1, T, std::nullopt, divisor);
  }
  return value_days(in, 1, T, limit_days, divisor);
}

LifetimeValuation valuation_rows(const CookieValueInput& in, double divisor) {
  const CookieRecord& r = *in.record;
  LifetimeValuation v;
  v.cookie_id = r.cookie_id;
  v.observed_lifetime = r.observed_lifetime_days;
  v.uncensored_lifetime = std::max(in.uncensored_lifetime, r.observed_lifetime_days);
  v.observed_lvc = observed_value(r, divisor);
  v.predicted_censored_lvc = value_days(in, 1, v.observed_lifetime, std::nullopt, divisor);
  v.predicted_residual_lvc = value_days(in, v.observed_lifetime + 1, v.uncensored_lifetime, std::nullopt, divisor);
  v.uncensored_lvc = v.predicted_censored_lvc + v.predicted_residual_lvc;
  v.ape = v.observed_lvc > 0.0 ? std::fabs(v.observed_lvc - v.predicted_censored_lvc) / v.observed_lvc : kNaN;
  return v;
}

std::vector<CookiePolicyOutcome> simulate_policy(std::span<const CookieValueInput> inputs, int limit_days,
                                                 double divisor, int threads) {
  if (limit_days < 1) throw ConfigError("restriction must be at least one day");
  std::vector<CookiePolicyOutcome> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    const auto& in = inputs[i];
    auto& o = out[i];
    o.cookie_id = in.record->cookie_id;
    o.effect_class = in.fit.effect_class;
    const int T = std::max(in.uncensored_lifetime, in.record->observed_lifetime_days);
    o.survived = T > limit_days;
    o.unrestricted_value = value_lifetime(in, std::nullopt, divisor);
    o.restricted_value = o.survived && priced_by_model(o.effect_class) ? value_lifetime(in, limit_days, divisor)
                                                                       : o.unrestricted_value;
    o.loss = o.unrestricted_value - o.restricted_value;
  });
  return out;
}

Interval bootstrap_ci(std::size_t size, const std::function<double(std::span<const std::size_t>)>& stat,
                      const BootstrapOptions& opts) {
  if (size == 0) return {0.0, 0.0};
  std::vector<std::size_t> all(size);
  for (std::size_t i = 0; i < size; ++i) all[i] = i;
  if (size < 2 || opts.replicas < 2) {
    const double s = stat(all);
    return {s, s};
  }
  std::vector<double> reps(static_cast<std::size_t>(opts.replicas));
  parallel_for(reps.size(), opts.threads, [&](std::size_t b) {
    auto rng = stream_rng(opts.seed, b);
    std::uniform_int_distribution<std::size_t> pick(0, size - 1);
    std::vector<std::size_t> idx(size);
    for (auto& k : idx) k = pick(rng);
    reps[b] = stat(idx);
  });
  std::erase_if(reps, [](double v) { return !std::isfinite(v); });
  if (reps.empty()) return {kNaN, kNaN};
  std::sort(reps.begin(), reps.end());
  return {sorted_quantile(reps, 0.025), sorted_quantile(reps, 0.975)};
}

MarketImpact extrapolate_market(double pct_loss, double revenue_base, double users) {
  if (!(revenue_base > 0.0) || !(users > 0.0)) throw ConfigError("market revenue and users must be positive");
  MarketImpact m;
  m.revenue_base = revenue_base;
  m.users = users;
  m.affected_revenue = pct_loss * revenue_base;
  m.loss_per_user = m.affected_revenue / users;
  return m;
}

namespace {

GroupSummary summarize(std::span<const CookiePolicyOutcome> outcomes, const std::vector<std::size_t>& members,
                       std::size_t total, BootstrapOptions boot) {
  GroupSummary g;
  g.n = members.size();
  g.share = total ? static_cast<double>(g.n) / static_cast<double>(total) : 0.0;
  if (members.empty()) return g;
  const auto sums = [&](std::span<const std::size_t> idx) {
    double lvc = 0.0, loss = 0.0;
    for (const auto k : idx) {
      lvc += outcomes[members[k]].unrestricted_value;
      loss += outcomes[members[k]].loss;
    }
    return std::pair{lvc, loss};
  };
  std::vector<std::size_t> all(members.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto [lvc, loss] = sums(all);
  const double n = static_cast<double>(g.n);
  g.avg_lvc = lvc / n;
  g.avg_loss = loss / n;
  g.pct_loss = g.avg_lvc != 0.0 ? g.avg_loss / g.avg_lvc : 0.0;
  g.loss_ci = bootstrap_ci(
      members.size(), [&](std::span<const std::size_t> idx) { return sums(idx).second / static_cast<double>(idx.size()); },
      boot);
  boot.seed = mix64(boot.seed);
  g.pct_ci = bootstrap_ci(
      members.size(),
      [&](std::span<const std::size_t> idx) {
        const auto [l, s] = sums(idx);
        return l != 0.0 ? s / l : 0.0;
      },
      boot);
  return g;
}

}  // namespace

PolicyReport aggregate_policy(std::span<const CookiePolicyOutcome> outcomes, int limit_days,
                              const BootstrapOptions& boot, const MarketBase& market) {
  PolicyReport rep;
  rep.limit_days = limit_days;
  rep.n_cookies = outcomes.size();
  std::vector<std::size_t> pos, neg, all;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    all.push_back(i);
    if (!o.survived) continue;
    ++rep.n_survived;
    if (o.effect_class == EffectClass::positive) pos.push_back(i);
    if (o.effect_class == EffectClass::negative) neg.push_back(i);
  }
  const double N = static_cast<double>(rep.n_cookies);
  rep.survived_share = rep.n_cookies ? static_cast<double>(rep.n_survived) / N : 0.0;
  if (rep.n_survived) {
    rep.cond2_given_1 = static_cast<double>(pos.size()) / static_cast<double>(rep.n_survived);
    rep.cond3_given_1 = static_cast<double>(neg.size()) / static_cast<double>(rep.n_survived);
  }
  // Each group and statistic draws from its own family of streams.
  const auto group_boot = [&](std::uint64_t tag) {
    BootstrapOptions b = boot;
    b.seed = mix64(boot.seed ^ mix64(static_cast<std::uint64_t>(limit_days) * 4 + tag));
    return b;
  };
  rep.pos = summarize(outcomes, pos, rep.n_cookies, group_boot(1));
  rep.neg = summarize(outcomes, neg, rep.n_cookies, group_boot(2));
  rep.all = summarize(outcomes, all, rep.n_cookies, group_boot(3));

  rep.market = extrapolate_market(rep.all.pct_loss, market.revenue_eur, market.users);
  rep.market.affected_ci = {rep.all.pct_ci.low * market.revenue_eur, rep.all.pct_ci.high * market.revenue_eur};
  rep.market.per_user_ci = {rep.market.affected_ci.low / market.users, rep.market.affected_ci.high / market.users};
  return rep;
}

}  // namespace cookielife
