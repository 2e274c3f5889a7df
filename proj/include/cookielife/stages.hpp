#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cookielife/config.hpp"
#include "cookielife/panel.hpp"
#include "cookielife/policysim.hpp"
#include "cookielife/survival.hpp"
#include "cookielife/synthgen.hpp"
#include "cookielife/valuemodel.hpp"

namespace cookielife {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// In-memory pipeline steps

struct PanelStageResult {
  std::vector<CookieRecord> records;
  Window window;
  std::size_t n_events = 0;
  std::size_t n_events_outside_window = 0;
  std::size_t n_cookies_in_log = 0;
  std::vector<CookieId> missing_ids;
  std::vector<RowError> row_errors;
};

// Samples and aggregates an already filled builder. The window is the
// configured one or else the span of the log.
PanelStageResult build_panel(const PanelBuilder& builder, const RunConfig& cfg);
PanelStageResult build_panel(std::istream& impressions, const RunConfig& cfg);

struct SurvivalStageResult {
  Window window;
  int threshold_days = 7;
  std::vector<CensoringStatus> statuses;  // aligned with the records
  std::size_t n_eligible = 0;
  std::vector<SurvivalFit> fits;
  std::vector<std::pair<Family, std::string>> failures;
  SurvivalFit selected;
  std::map<CookieId, int> uncensored;
};

// Classifies censoring, fits all three families on the eligible lifetimes,
// keeps the AIC-best fit and uncensors every cookie with it.
SurvivalStageResult run_survival(const std::vector<CookieRecord>& records, const Window& window, const RunConfig& cfg);

struct RegressionStageResult {
  std::vector<ValueModelFit> fits;  // raw, aligned with the records
  std::vector<QuantityFit> quantities;
};

RegressionStageResult run_regressions(const std::vector<CookieRecord>& records, const RunConfig& cfg);

struct SimulationStageResult {
  std::vector<ValueModelFit> winsorized;
  std::vector<LifetimeValuation> valuations;
  std::vector<PolicyReport> reports;  // one per restriction
};

// Winsorizes the fits and simulates every configured restriction.
SimulationStageResult run_simulation(const std::vector<CookieRecord>& records, const std::vector<ValueModelFit>& fits,
                                     const std::vector<QuantityFit>& quantities,
                                     const std::map<CookieId, int>& uncensored, const RunConfig& cfg);

// Newborn cohort holdout. Throws DataError when the cohort is empty.
ValidationReport run_validation(const std::vector<CookieRecord>& records, const Window& window, const RunConfig& cfg);

// ---------------------------------------------------------------------------
// File stages. Each reads the previous stage's files from `in` and writes
// its own under `out`; write failures raise DataError.

void stage_gen(const GenConfig& gen, std::uint64_t seed, int threads, const fs::path& out);
void stage_panel(const RunConfig& cfg, const fs::path& impressions, const fs::path& out);
void stage_survival(const RunConfig& cfg, const fs::path& in, const fs::path& out);
void stage_regress(const RunConfig& cfg, const fs::path& in, const fs::path& out);
void stage_simulate(const RunConfig& cfg, const fs::path& in, const fs::path& out);
// Returns false when `allow_empty` and the cohort is empty (a skipped marker
// is written instead).
bool stage_validate(const RunConfig& cfg, const fs::path& in, const fs::path& out, bool allow_empty = false);
void stage_report(const RunConfig& cfg, const fs::path& in, const fs::path& out);
void stage_all(const RunConfig& cfg, const fs::path& impressions, const fs::path& out);

// Serializers shared by the stages and tests.
Json survival_json(const SurvivalStageResult& s, std::size_t n_cookies);
Json policy_json(const std::vector<PolicyReport>& reports);
void write_fits_csv(std::ostream& out, const std::vector<ValueModelFit>& fits);
std::vector<ValueModelFit> read_fits_csv(std::istream& in);
void write_policy_csv(std::ostream& out, const std::vector<PolicyReport>& reports);

inline constexpr std::string_view kFitsHeader =
    "cookie_id,model,n_obs,intercept,slope,slope_se,slope_p,beta_video,beta_fold,beta_retarget,r2,aic,bic,class";

}  // namespace cookielife
