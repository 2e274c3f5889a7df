#include "cookielife/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "cookielife/error.hpp"
#include "cookielife/parallel.hpp"

namespace cookielife {

namespace {

constexpr CookieId kFirstId = 100000000;
constexpr std::size_t kBatch = 512;

const AttributeLevel& pick_level(const std::vector<AttributeLevel>& levels, std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto& l : levels) w.push_back(l.weight);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return levels[d(rng)];
}

void check_levels(const std::vector<AttributeLevel>& levels, std::string_view name) {
  if (levels.empty()) throw ConfigError(fmt::format("{}: at least one level required", name));
  double total = 0.0;
  for (const auto& l : levels) {
    if (!(l.weight >= 0.0) || l.label.empty() || l.label.find(',') != std::string::npos)
      throw ConfigError(fmt::format("{}: invalid level '{}'", name, l.label));
    total += l.weight;
  }
  if (!(total > 0.0)) throw ConfigError(fmt::format("{}: weights must not all be zero", name));
}

}  // namespace

void GenConfig::validate() const {
  const auto require = [](bool ok, std::string_view what) {
    if (!ok) throw ConfigError(fmt::format("invalid generator config: {}", what));
  };
  require(n_cookies >= 1, "n_cookies must be at least 1");
  require(window.length_days() >= 1, "window must span at least one day");
  require(lifetime_shape > 0.0 && std::isfinite(lifetime_shape), "lifetime shape must be positive");
  require(std::isfinite(lifetime_scale) && (lifetime_family != Family::weibull || lifetime_scale > 0.0),
          "lifetime scale must be positive");
  require(pre_window_birth_share >= 0.0 && pre_window_birth_share <= 1.0, "pre_window_birth_share in [0,1]");
  require(pre_window_span_days >= 1, "pre_window_span_days must be positive");
  require(activity_alpha > 0.0 && activity_beta > 0.0, "activity Beta parameters must be positive");
  require(impressions_lambda > 0.0, "impressions lambda must be positive");
  require(intercept_sd >= 0.0 && noise_sd >= 0.0, "standard deviations must be non-negative");
  for (double p : {pi_zero, pi_pos, pi_neg}) require(p >= 0.0 && p <= 1.0, "class probabilities in [0,1]");
  require(std::fabs(pi_zero + pi_pos + pi_neg - 1.0) < 1e-9, "class probabilities must sum to 1");
  require(slope_min >= 0.0 && slope_max >= slope_min, "slope magnitudes need 0 <= min <= max");
  for (double p : {video_prob, above_prob, unknown_fold_prob, retarget_prob})
    require(p >= 0.0 && p <= 1.0, "covariate probabilities in [0,1]");
  require(above_prob + unknown_fold_prob <= 1.0, "above_prob + unknown_fold_prob must not exceed 1");
  check_levels(countries, "countries");
  check_levels(devices, "devices");
  check_levels(oses, "oses");
  check_levels(browsers, "browsers");
}

double CookieTruth::expected_activity_share() const {
  if (lifetime <= 1) return 1.0;
  return (2.0 + activity_prob * (lifetime - 2)) / lifetime;
}

double CookieTruth::expected_impressions() const {
  const double m = std::max(impression_rate, 0.1);
  return m / (1.0 - std::exp(-m));
}

int draw_lifetime(const GenConfig& cfg, std::mt19937_64& rng) {
  double t = 0.0;
  switch (cfg.lifetime_family) {
    case Family::weibull: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      t = cfg.lifetime_scale * std::pow(-std::log1p(-u(rng)), 1.0 / cfg.lifetime_shape);
      break;
    }
    case Family::lognormal: {
      std::normal_distribution<double> z(0.0, 1.0);
      t = std::exp(cfg.lifetime_scale + cfg.lifetime_shape * z(rng));
      break;
    }
    case Family::generalized_gamma: {
      const double q = cfg.lifetime_extra;
      double w = 0.0;
      if (std::fabs(q) < 1e-3) {
        std::normal_distribution<double> z(0.0, 1.0);
        w = z(rng);
      } else {
        const double a = 1.0 / (q * q);
        std::gamma_distribution<double> g(a, 1.0);
        w = std::log(g(rng) / a) / q;
      }
      t = std::exp(cfg.lifetime_scale + cfg.lifetime_shape * w);
      break;
    }
  }
  if (!std::isfinite(t) || t > 1e7) t = 1e7;
  return std::max(1, static_cast<int>(std::ceil(t)));
}

GeneratedCookie generate_cookie(const GenConfig& cfg, std::uint64_t seed, std::size_t index) {
  auto rng = stream_rng(seed, index);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  GeneratedCookie out;
  CookieTruth& c = out.truth;
  c.cookie_id = kFirstId + index;

  if (unif(rng) < cfg.pre_window_birth_share) {
    std::uniform_int_distribution<int> back(1, cfg.pre_window_span_days);
    c.birth = add_days(cfg.window.start, -back(rng));
  } else {
    std::uniform_int_distribution<int> offset(0, cfg.window.length_days() - 1);
    c.birth = add_days(cfg.window.start, offset(rng));
  }
  c.lifetime = draw_lifetime(cfg, rng);
  c.death = add_days(c.birth, c.lifetime - 1);

  const double u_class = unif(rng);
  std::uniform_real_distribution<double> magnitude(cfg.slope_min, cfg.slope_max);
  const double mag = magnitude(rng);
  if (u_class < cfg.pi_pos) {
    c.effect_class = EffectClass::positive;
    c.slope = mag;
  } else if (u_class < cfg.pi_pos + cfg.pi_neg) {
    c.effect_class = EffectClass::negative;
    c.slope = -mag;
  } else {
    c.effect_class = EffectClass::zero;
    c.slope = 0.0;
  }

  std::normal_distribution<double> intercept(cfg.intercept_mean, cfg.intercept_sd);
  c.intercept = intercept(rng);
  const auto& country = pick_level(cfg.countries, rng);
  const auto& device = pick_level(cfg.devices, rng);
  const auto& os = pick_level(cfg.oses, rng);
  const auto& browser = pick_level(cfg.browsers, rng);
  c.attrs = UserAttrs{country.label, device.label, os.label, browser.label};
  c.intercept += country.intercept_effect + device.intercept_effect + os.intercept_effect + browser.intercept_effect;

  std::gamma_distribution<double> ga(cfg.activity_alpha, 1.0), gb(cfg.activity_beta, 1.0);
  const double x = ga(rng), y = gb(rng);
  c.activity_prob = x / (x + y);
  c.impression_rate = cfg.impressions_lambda;
  c.impression_trend = cfg.impressions_trend;

  std::bernoulli_distribution active(c.activity_prob);
  std::bernoulli_distribution video(cfg.video_prob), retarget(cfg.retarget_prob);
  std::normal_distribution<double> noise(0.0, cfg.noise_sd > 0.0 ? cfg.noise_sd : 1.0);
  std::uniform_int_distribution<int> second(0, 86399);

  const int first_t = std::max(1, days_between(c.birth, cfg.window.start) + 1);
  const int last_t = std::min(c.lifetime, days_between(c.birth, cfg.window.end) + 1);
  std::vector<ImpressionEvent> day_events;
  for (int t = first_t; t <= last_t; ++t) {
    const bool forced = t == 1 || t == c.lifetime;
    if (!forced && !active(rng)) continue;
    std::poisson_distribution<int> count(std::max(c.impression_rate + c.impression_trend * t, 0.1));
    int k = 0;
    while (k == 0) k = count(rng);

    const Date date = add_days(c.birth, t - 1);
    day_events.clear();
    for (int j = 0; j < k; ++j) {
      ImpressionEvent e;
      e.cookie_id = c.cookie_id;
      e.timestamp = Timestamp{date.time_since_epoch()} + std::chrono::seconds{second(rng)};
      e.media_type = video(rng) ? MediaType::video : MediaType::display;
      const double uf = unif(rng);
      e.fold = uf < cfg.above_prob ? Fold::above : uf < cfg.above_prob + cfg.unknown_fold_prob ? Fold::unknown : Fold::below;
      e.retargeted = retarget(rng);
      double price = c.intercept + c.slope * t;
      if (e.media_type == MediaType::video) price += cfg.video_premium;
      if (e.fold == Fold::above) price += cfg.above_premium;
      if (e.retargeted) price += cfg.retarget_premium;
      if (cfg.noise_sd > 0.0) price += noise(rng);
      e.price_cpm = std::round(std::max(price, 0.0) * 1e6) / 1e6;
      e.attrs = c.attrs;
      day_events.push_back(std::move(e));
    }
    std::stable_sort(day_events.begin(), day_events.end(),
                     [](const ImpressionEvent& a, const ImpressionEvent& b) { return a.timestamp < b.timestamp; });
    for (auto& e : day_events) out.events.push_back(std::move(e));
  }
  c.emitted = !out.events.empty();
  return out;
}

GroundTruth generate(const GenConfig& cfg, std::uint64_t seed, const std::function<void(const GeneratedCookie&)>& sink,
                     int threads) {
  cfg.validate();
  GroundTruth truth;
  truth.seed = seed;
  truth.cookies.reserve(cfg.n_cookies);
  std::vector<GeneratedCookie> batch;
  for (std::size_t start = 0; start < cfg.n_cookies; start += kBatch) {
    const std::size_t n = std::min(kBatch, cfg.n_cookies - start);
    batch.assign(n, {});
    parallel_for(n, threads, [&](std::size_t i) { batch[i] = generate_cookie(cfg, seed, start + i); });
    for (const auto& g : batch) {
      sink(g);
      truth.cookies.push_back(g.truth);
    }
  }
  return truth;
}

void write_impression_row(std::ostream& out, const ImpressionEvent& e) {
  const char* fold = e.fold == Fold::above ? "above" : e.fold == Fold::below ? "below" : "unknown";
  out << fmt::format("{},{},{:.6f},{},{},{},{},{},{},{}\n", e.cookie_id, format_timestamp(e.timestamp), e.price_cpm,
                     e.media_type == MediaType::video ? "video" : "display", fold, e.retargeted ? 1 : 0,
                     e.attrs.country, e.attrs.device_type, e.attrs.os, e.attrs.browser);
}

GroundTruth generate_csv(const GenConfig& cfg, std::uint64_t seed, std::ostream& impressions, int threads) {
  impressions << kImpressionHeader << '\n';
  return generate(
      cfg, seed,
      [&](const GeneratedCookie& g) {
        for (const auto& e : g.events) write_impression_row(impressions, e);
      },
      threads);
}

long long rebirth_day_deficit(long long T, long long L) {
  if (T <= L) return 0;
  const long long q = T / L, r = T % L;
  return T * (T + 1) / 2 - q * L * (L + 1) / 2 - r * (r + 1) / 2;
}

double analytic_expected_loss(const CookieTruth& truth, int limit_days, double divisor) {
  if (truth.effect_class == EffectClass::zero || truth.lifetime <= limit_days) return 0.0;
  return truth.slope * truth.expected_impressions() / divisor * truth.expected_activity_share() *
         static_cast<double>(rebirth_day_deficit(truth.lifetime, limit_days));
}

}  // namespace cookielife
