#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cookielife/error.hpp"
#include "cookielife/ols.hpp"
#include "cookielife/valuemodel.hpp"
#include "oracles.hpp"

using namespace cookielife;

namespace {

struct DaySpec {
  int day = 1;
  int impressions = 1;
  double price = 0.0;
  double video = 0.0;
  double above = 0.0;
  double retarget = 0.0;
};

CookieRecord make_record(CookieId id, const std::vector<DaySpec>& days, const char* birth = "2015-02-01") {
  CookieRecord r;
  r.cookie_id = id;
  const Date b = parse_date(birth);
  for (const auto& d : days) {
    DailyObservation o;
    o.date = add_days(b, d.day - 1);
    o.impressions = d.impressions;
    o.avg_price_cpm = d.price;
    o.video_share = d.video;
    o.above_fold_share = d.above;
    o.retarget_share = d.retarget;
    r.days.push_back(o);
  }
  finalize_record(r);
  return r;
}

CookieRecord cookie_a() {
  std::vector<DaySpec> days;
  for (int t = 1; t <= 22; ++t) days.push_back({t, 1, 0.08 + 0.01 * t});
  return make_record(1, days);
}

ValueModelFit fit_of(double slope, double p) {
  ValueModelFit f;
  f.slope = slope;
  f.slope_p = p;
  f.n_obs = 50;
  f.effect_class = EffectClass::zero;
  return f;
}

std::vector<DaySpec> random_days(std::mt19937_64& rng, int n, double a, double b, double noise, bool covariates) {
  std::normal_distribution<double> eps(0.0, noise);
  std::uniform_real_distribution<double> share(0.0, 1.0);
  std::poisson_distribution<int> imps(3);
  std::vector<DaySpec> days;
  int day = 0;
  for (int i = 0; i < n; ++i) {
    day += 1 + static_cast<int>(share(rng) * 3);
    DaySpec d{day, 1 + imps(rng), 0.0};
    if (covariates) {
      d.video = share(rng) < 0.3 ? share(rng) : 0.0;
      d.above = share(rng);
      d.retarget = share(rng) < 0.5 ? share(rng) : 0.0;
    }
    d.price = a + b * day + 1.0 * d.video + 0.2 * d.above + 0.3 * d.retarget + eps(rng);
    days.push_back(d);
  }
  return days;
}

}  // namespace

TEST_CASE("cookie A recovers its price line exactly") {
  const auto fit = fit_value_model(cookie_a(), ModelSpec::from_id(1));
  CHECK(std::abs(fit.intercept - 0.08) < 1e-12);
  CHECK(std::abs(fit.slope - 0.01) < 1e-12);
  CHECK(fit.effect_class == EffectClass::positive);
  CHECK(fit.n_obs == 22);

  const auto with_covariates = fit_value_model(cookie_a(), ModelSpec::from_id(2));
  CHECK(std::abs(with_covariates.slope - 0.01) < 1e-12);
  CHECK(with_covariates.dropped.size() == 3);
}

TEST_CASE("constant prices have no time effect") {
  std::vector<DaySpec> days;
  for (int t = 1; t <= 10; ++t) days.push_back({t, 1, 0.19});
  for (int model : {1, 2, 3, 4, 5}) {
    const auto fit = fit_value_model(make_record(2, days), ModelSpec::from_id(model));
    CHECK(fit.slope == 0.0);
    CHECK(fit.effect_class == EffectClass::zero);
  }
}

TEST_CASE("coefficients agree with the explicit normal equations") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size(8, 40);
  std::uniform_real_distribution<double> a(0.1, 2.0), b(-0.02, 0.02);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const bool covariates = rep % 2 == 1;
    const auto days = random_days(rng, size(rng), a(rng), b(rng), 0.2, covariates);
    const auto rec = make_record(static_cast<CookieId>(rep), days);
    const auto fit = fit_value_model(rec, ModelSpec::from_id(covariates ? 2 : 1));
    REQUIRE(fit.estimable());
    std::vector<std::vector<double>> rows;
    std::vector<double> y;
    for (const auto& o : rec.days) {
      std::vector<double> row{1.0, static_cast<double>(o.day_index)};
      if (covariates) row.insert(row.end(), {o.video_share, o.above_fold_share, o.retarget_share});
      rows.push_back(row);
      y.push_back(o.avg_price_cpm);
    }
    const auto beta = oracle::normal_equations(rows, y);
    worst = std::max({worst, std::abs(beta[0] - fit.intercept), std::abs(beta[1] - fit.slope)});
    if (covariates)
      for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(beta[2 + j] - fit.beta_cov[j]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("least squares identities") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd X(60, 3);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i + 1;
    X(i, 2) = z(rng);
    y(i) = 0.5 + 0.01 * (i + 1) + 0.3 * X(i, 2) + 0.2 * z(rng);
  }
  const auto r = ols(X, y);
  CHECK(std::abs(r.residuals.sum()) < 1e-10);
  CHECK((X.transpose() * r.residuals).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(r.rank == 3);
  CHECK(r.df == 57);
  CHECK(r.r2 == doctest::Approx(1.0 - r.rss / r.tss));

  const auto scaled = ols(X, 7.0 * y);
  for (int j = 0; j < 3; ++j) {
    CHECK(scaled.beta[j] == doctest::Approx(7.0 * r.beta[j]));
    CHECK(scaled.p_value[j] == doctest::Approx(r.p_value[j]).epsilon(1e-9));
  }

  Eigen::MatrixXd dup(60, 4);
  dup << X, X.col(2) * 2.0;
  const auto dropped = ols(dup, y);
  CHECK_FALSE(dropped.kept[3]);
  CHECK(std::isnan(dropped.beta[3]));
  CHECK(dropped.beta[2] == doctest::Approx(r.beta[2]));

  CHECK(t_test_p(0.0, 10) == doctest::Approx(1.0));
  CHECK(t_test_p(2.228138852, 10) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("effect classes") {
  CHECK(classify_effect(fit_of(0.001, 0.0005)) == EffectClass::positive);
  CHECK(classify_effect(fit_of(-0.001, 0.0005)) == EffectClass::negative);
  CHECK(classify_effect(fit_of(-0.001, 0.20)) == EffectClass::zero);
  CHECK(classify_effect(fit_of(0.001, 0.01)) == EffectClass::positive);
  CHECK(classify_effect(fit_of(0.001, 0.03), 0.05) == EffectClass::positive);
  CHECK(is_significant_zero(fit_of(0.001, 0.5)));
  auto few = fit_of(0.001, 0.5);
  few.n_obs = 9;
  CHECK_FALSE(is_significant_zero(few));
  for (auto c : {EffectClass::positive, EffectClass::negative, EffectClass::zero, EffectClass::not_estimable})
    CHECK(parse_class_code(class_code(c)) == c);
}

TEST_CASE("estimability needs k + 2 observations") {
  std::vector<DaySpec> days;
  for (int t = 1; t <= 3; ++t) days.push_back({t, 1, 0.1 * t});
  CHECK(fit_value_model(make_record(1, days), ModelSpec::from_id(1)).effect_class == EffectClass::positive);
  days.pop_back();
  const auto two = fit_value_model(make_record(1, days), ModelSpec::from_id(1));
  CHECK(two.effect_class == EffectClass::not_estimable);
  CHECK(std::isnan(two.slope));
  std::vector<DaySpec> five;
  for (int t = 1; t <= 5; ++t) five.push_back({t, 1, 0.1 * t, 0.1 * t, 0.5, 0.0});
  CHECK(fit_value_model(make_record(1, five), ModelSpec::from_id(2)).effect_class == EffectClass::not_estimable);
  CHECK_THROWS_AS(ModelSpec::from_id(6), ConfigError);
}

TEST_CASE("log models drop zero prices") {
  std::vector<DaySpec> days;
  for (int t = 1; t <= 12; ++t) days.push_back({t, 1, t % 4 == 0 ? 0.0 : std::exp(0.1 + 0.02 * t)});
  const auto fit = fit_value_model(make_record(1, days), ModelSpec::from_id(3));
  CHECK(fit.zero_prices_dropped == 3);
  CHECK(fit.n_obs == 9);
  CHECK(fit.slope == doctest::Approx(0.02));
  CHECK(fit.log_price);
}

TEST_CASE("false positive rate under a flat price") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> eps(0.0, 0.3);
  int rejections = 0;
  const int reps = 10000;
  std::vector<DaySpec> days(100);
  for (int rep = 0; rep < reps; ++rep) {
    for (int t = 1; t <= 100; ++t) days[t - 1] = {t, 1, 1.0 + eps(rng)};
    const auto fit = fit_value_model(make_record(1, days), ModelSpec::from_id(1));
    rejections += fit.effect_class != EffectClass::zero;
  }
  // 99% binomial band around 1% of 10,000.
  CHECK(rejections >= 75);
  CHECK(rejections <= 125);
}

TEST_CASE("winsorization") {
  SUBCASE("equal parameters are unchanged") {
    std::vector<ValueModelFit> fits(20, fit_of(0.002, 0.001));
    for (auto& f : fits) f.intercept = 0.5;
    winsorize_fits(fits);
    for (const auto& f : fits) {
      CHECK(f.intercept == 0.5);
      CHECK(f.slope == 0.002);
    }
  }
  SUBCASE("an outlier is clamped to the empirical quantile") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<ValueModelFit> fits(1000, fit_of(0.0, 0.5));
    for (auto& f : fits) {
      f.intercept = 1.0 + 0.1 * z(rng);
      f.slope = 0.001 * z(rng);
    }
    fits[17].slope = 50.0;
    fits[18].effect_class = EffectClass::not_estimable;
    fits[18].slope = 1e9;
    std::vector<double> slopes, intercepts;
    for (const auto& f : fits)
      if (f.estimable()) {
        slopes.push_back(f.slope);
        intercepts.push_back(f.intercept);
      }
    std::sort(slopes.begin(), slopes.end());
    std::sort(intercepts.begin(), intercepts.end());
    const double hi = oracle::quantile7(slopes, 0.99);
    const double lo = oracle::quantile7(slopes, 0.01);
    winsorize_fits(fits, 0.99);
    CHECK(fits[17].slope == doctest::Approx(hi).epsilon(1e-14));
    CHECK(fits[18].slope == 1e9);
    for (const auto& f : fits) {
      if (!f.estimable()) continue;
      CHECK(f.slope <= hi);
      CHECK(f.slope >= lo);
      CHECK(f.intercept <= oracle::quantile7(intercepts, 0.99));
      CHECK(f.effect_class == EffectClass::zero);
    }
  }
  SUBCASE("q = 1 leaves every fit alone") {
    std::vector<ValueModelFit> fits{fit_of(10.0, 0.0), fit_of(0.0, 0.5), fit_of(-10.0, 0.0)};
    winsorize_fits(fits, 1.0);
    CHECK(fits[0].slope == 10.0);
    CHECK(fits[2].slope == -10.0);
  }
  std::vector<ValueModelFit> none;
  CHECK_THROWS_AS(winsorize_fits(none, 0.4), ConfigError);
  CHECK_THROWS_AS(winsorize_fits(none, 1.01), ConfigError);
}

TEST_CASE("quantity model") {
  std::vector<DaySpec> days;
  for (int t = 1; t <= 15; ++t)
    if (t != 7) days.push_back({t, t, 0.1});
  const auto q = fit_quantity_model(make_record(1, days));
  CHECK(q.n_bar == doctest::Approx(113.0 / 14.0).epsilon(1e-12));
  CHECK(q.n_bar == doctest::Approx(8.07).epsilon(0.0007));
  CHECK(q.slope == doctest::Approx(1.0));

  std::vector<DaySpec> constant;
  for (int t = 1; t <= 9; t += 2) constant.push_back({t, 4, 0.1});
  CHECK(fit_quantity_model(make_record(1, constant)).n_bar == doctest::Approx(4.0));

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto rec = make_record(1, random_days(rng, 5 + rep, 1.0, 0.0, 0.1, false));
    double mean = 0.0;
    for (const auto& o : rec.days) mean += o.impressions;
    mean /= static_cast<double>(rec.days.size());
    CHECK(fit_quantity_model(rec).n_bar == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("prediction quality") {
  std::vector<DaySpec> days;
  for (int t = 1; t <= 10; ++t) days.push_back({t, 2, 0.5 + 0.03 * t});
  const auto q = prediction_quality(make_record(1, days), ModelSpec::from_id(1));
  REQUIRE(q);
  CHECK(q->n_train == 8);
  CHECK(q->n_test == 2);
  CHECK(q->mae == doctest::Approx(0.0));
  CHECK(q->r2 == doctest::Approx(1.0));
  CHECK(q->mape == doctest::Approx(0.0));
  days.pop_back();
  CHECK_FALSE(prediction_quality(make_record(1, days), ModelSpec::from_id(1)));
}

TEST_CASE("covariates improve prediction when prices depend on them") {
  std::mt19937_64 rng(77);
  std::vector<double> mae1, mae2;
  for (CookieId id = 1; id <= 300; ++id) {
    const auto rec = make_record(id, random_days(rng, 60, 0.8, 0.001, 0.05, true));
    mae1.push_back(prediction_quality(rec, ModelSpec::from_id(1))->mae);
    mae2.push_back(prediction_quality(rec, ModelSpec::from_id(2))->mae);
  }
  const auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  CHECK(median(mae2) < median(mae1));
}

TEST_CASE("descriptive regressions on user attributes") {
  SUBCASE("unknown attributes leave the intercept only") {
    std::vector<ValueModelFit> fits;
    std::map<CookieId, UserAttrs> attrs;
    for (CookieId id = 1; id <= 30; ++id) {
      auto f = fit_of(0.001 * static_cast<double>(id % 3), 0.5);
      f.cookie_id = id;
      f.intercept = 0.1 * static_cast<double>(id);
      fits.push_back(f);
      attrs[id] = UserAttrs{};
    }
    const auto d = describe_parameters(fits, attrs);
    REQUIRE(d[0].rows.size() == 1);
    CHECK(d[0].rows[0].term == "(Intercept)");
    CHECK(d[0].rows[0].estimate == doctest::Approx(1.55));
    CHECK(d[1].dependent == "slope_x1000");
  }
  SUBCASE("balanced two-level attribute gives the mean difference") {
    std::vector<ValueModelFit> fits;
    std::map<CookieId, UserAttrs> attrs;
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z(0.0, 0.1);
    double sum_de = 0.0, sum_unknown = 0.0;
    for (CookieId id = 1; id <= 200; ++id) {
      auto f = fit_of(0.001, 0.5);
      f.cookie_id = id;
      const bool de = id % 2 == 0;
      f.intercept = (de ? 1.2 : 1.0) + z(rng);
      (de ? sum_de : sum_unknown) += f.intercept;
      fits.push_back(f);
      UserAttrs a;
      if (de) a.country = "DE";
      attrs[id] = a;
    }
    const auto d = describe_parameters(fits, attrs);
    REQUIRE(d[0].rows.size() == 2);
    CHECK(d[0].rows[1].term == "country=DE");
    CHECK(d[0].rows[1].estimate == doctest::Approx(sum_de / 100.0 - sum_unknown / 100.0).epsilon(1e-10));
  }
  SUBCASE("planted device effect") {
    std::vector<ValueModelFit> fits;
    std::map<CookieId, UserAttrs> attrs;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z(0.0, 0.2);
    for (CookieId id = 1; id <= 600; ++id) {
      UserAttrs a;
      a.device_type = id % 3 == 0 ? "desktop" : id % 3 == 1 ? "mobile" : "Unknown";
      a.country = id % 5 < 2 ? "DE" : "Unknown";
      auto f = fit_of(0.001, 0.5);
      f.cookie_id = id;
      f.intercept = 0.8 + (a.device_type == "desktop" ? 0.1 : a.device_type == "mobile" ? -0.1 : 0.0) + z(rng);
      fits.push_back(f);
      attrs[id] = a;
    }
    const auto d = describe_parameters(fits, attrs);
    double desktop = 0.0, mobile = 0.0;
    for (const auto& row : d[0].rows) {
      if (row.term == "device_type=desktop") desktop = row.estimate;
      if (row.term == "device_type=mobile") mobile = row.estimate;
    }
    CHECK(desktop > 0.0);
    CHECK(mobile < 0.0);
  }
}
