// Rolling one-step-ahead out-of-sample evaluation. Time indices are 1-based:
// an origin o trains on observations 1..o and forecasts observation o+1, so a
// valid plan satisfies t0 < first_origin <= last_origin < t_len.
//
// Each training window is standardized on its own statistics (zero-variance
// series keep scale 1), the fit runs on that scale, and the target is scaled
// the same way, so no statistic ever sees data past the origin. Refits
// warm-start from the previous origin's factors, which is deterministic for
// a fixed plan and config. A diverged fit skips the origins it would have
// served until the next scheduled refit succeeds.
#pragma once

#include "tuckervar/estimator.hpp"
#include "tuckervar/process.hpp"
#include "tuckervar/tensor.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace tuckervar {

struct RollingPlan {
  int first_origin = 0;
  int last_origin = 0;
  int refit_every = 1;  // 0 = fit once at first_origin and reuse
};

struct ForecastMetrics {
  double msfe = 0.0;  // mean over origins of the squared error norm
  double mafe = 0.0;  // mean over origins of the absolute error sum
  std::vector<Eigen::VectorXd> per_origin_errors;
  std::vector<int> origins;          // origins evaluated, ascending
  std::vector<int> skipped_origins;  // origins lost to diverged fits
};

// yhat_t = sum_{j=1}^{t0} A_j y_{t-j} with A = reconstruct(f); history must
// cover observations t-t0 .. t-1 and t itself need not exist yet.
Eigen::VectorXd one_step_forecast(const TuckerFactors& f,
                                  const PanelData& history, int t, int t0);

// Fits per the plan's refit schedule and forecasts each origin's next
// observation. Errors are on the standardized scale unless raw_scale, which
// re-expresses them in original units via the training window's scales.
// With refit_every = 0 origins evaluate in parallel; otherwise sequentially.
ForecastMetrics rolling_evaluate(const PanelData& data, const RollingPlan& plan,
                                 const FitConfig& cfg, bool raw_scale = false,
                                 int threads = 1);

std::string metrics_json(const ForecastMetrics& m);

// Header plus one row: origins,skipped,msfe,mafe.
void write_csv(const ForecastMetrics& m, std::ostream& out);
void write_csv(const ForecastMetrics& m, const std::string& path);

}  // namespace tuckervar
