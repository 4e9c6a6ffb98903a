#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "tuckervar/forecast.hpp"
#include "tuckervar/rng.hpp"
#include "tuckervar/simulation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

using namespace tuckervar;

namespace {

PanelData panel_from(const Eigen::MatrixXd& values) {
  PanelData p;
  p.n = static_cast<int>(values.rows());
  p.t_len = static_cast<int>(values.cols());
  p.values = values;
  p.means = Eigen::VectorXd::Zero(p.n);
  p.scales = Eigen::VectorXd::Ones(p.n);
  return p;
}

FitConfig small_cfg(int t0) {
  FitConfig cfg;
  cfg.t0 = t0;
  cfg.r1 = cfg.r2 = 2;
  cfg.s = 3;
  cfg.step = 0.1;
  cfg.max_iter = 50;
  cfg.tol = 1e-4;
  return cfg;
}

}  // namespace

TEST_CASE("one-step forecast: zero tensor and exact VAR(1) data") {
  Rng rng(7);
  PanelData history = panel_from(rng.normal_matrix(3, 12));

  TuckerFactors zero;
  zero.u1 = Eigen::MatrixXd::Zero(3, 1);
  zero.u2 = Eigen::MatrixXd::Zero(3, 1);
  zero.core = Tensor3(1, 1, 2);
  CHECK(one_step_forecast(zero, history, 5, 2).norm() == 0.0);

  Eigen::MatrixXd a1 = 0.5 * haar_orthogonal(3, 9);
  Eigen::MatrixXd values(3, 15);
  values.col(0) = rng.normal_vector(3);
  for (int t = 1; t < 15; ++t) values.col(t) = a1 * values.col(t - 1);
  PanelData var1 = panel_from(values);

  TuckerFactors f;
  f.u1 = Eigen::MatrixXd::Identity(3, 3);
  f.u2 = Eigen::MatrixXd::Identity(3, 3);
  f.core = Tensor3(3, 3, 2);
  f.core.slice(0) = a1;
  Eigen::VectorXd yhat = one_step_forecast(f, var1, 10, 2);
  CHECK((yhat - values.col(9)).norm() < 1e-12);
}

TEST_CASE("one-step forecast equals the per-lag factor loop") {
  Rng rng(11);
  PanelData history = panel_from(rng.normal_matrix(4, 8));
  TuckerFactors f;
  f.u1 = rng.normal_matrix(4, 2);
  f.u2 = rng.normal_matrix(4, 3);
  f.core = Tensor3(2, 3, 3);
  for (int k = 0; k < 3; ++k) f.core.slice(k) = rng.normal_matrix(2, 3);

  Eigen::VectorXd loop = Eigen::VectorXd::Zero(4);
  for (int j = 1; j <= 3; ++j)
    loop += f.u1 * Eigen::MatrixXd(f.core.slice(j - 1)) * f.u2.transpose() *
            history.values.col(6 - j - 1);
  CHECK((one_step_forecast(f, history, 6, 3) - loop).norm() < 1e-12);
}

TEST_CASE("one-step forecast validates its inputs") {
  Rng rng(13);
  PanelData history = panel_from(rng.normal_matrix(3, 6));
  TuckerFactors f;
  f.u1 = rng.normal_matrix(3, 1);
  f.u2 = rng.normal_matrix(3, 1);
  f.core = Tensor3(1, 1, 2);

  CHECK_THROWS_AS(one_step_forecast(f, history, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(one_step_forecast(f, history, 9, 2), std::invalid_argument);
  CHECK_THROWS_AS(one_step_forecast(f, history, 5, 3), std::invalid_argument);
  TuckerFactors wide = f;
  wide.u1 = rng.normal_matrix(4, 1);
  CHECK_THROWS_AS(one_step_forecast(wide, history, 5, 2), std::invalid_argument);
}

TEST_CASE("constant rows get unit scale instead of a zero division") {
  Rng rng(23);
  Eigen::MatrixXd values(2, 40);
  values.row(0) = rng.normal_matrix(1, 40);
  values.row(1).setConstant(5.0);
  RollingPlan plan{20, 39, 0};
  FitConfig cfg = small_cfg(2);
  cfg.r1 = cfg.r2 = 1;
  cfg.s = 1;
  ForecastMetrics m = rolling_evaluate(panel_from(values), plan, cfg);
  CHECK(m.per_origin_errors.size() == 20);
  CHECK(m.skipped_origins.empty());
  CHECK(std::isfinite(m.msfe));
  ForecastMetrics raw = rolling_evaluate(panel_from(values), plan, cfg, true);
  CHECK(std::isfinite(raw.msfe));
}

TEST_CASE("white-noise panel: msfe near the irreducible error") {
  Rng rng(17);
  PanelData noise = panel_from(2.0 * rng.normal_matrix(3, 320));
  RollingPlan plan{200, 319, 0};
  FitConfig cfg = small_cfg(2);
  cfg.r1 = cfg.r2 = 1;
  cfg.s = 1;

  ForecastMetrics std_scale = rolling_evaluate(noise, plan, cfg);
  CHECK(std_scale.per_origin_errors.size() == 120);
  CHECK(std::abs(std_scale.msfe - 3.0) < 0.45);  // N * unit variance, 15%

  ForecastMetrics raw = rolling_evaluate(noise, plan, cfg, true);
  CHECK(std::abs(raw.msfe - 12.0) < 1.8);  // N * population variance, 15%

  // Metrics are exactly reproducible from the per-origin errors.
  double msfe = 0.0, mafe = 0.0;
  for (const Eigen::VectorXd& e : std_scale.per_origin_errors) {
    msfe += e.squaredNorm();
    mafe += e.lpNorm<1>();
  }
  msfe /= static_cast<double>(std_scale.per_origin_errors.size());
  mafe /= static_cast<double>(std_scale.per_origin_errors.size());
  CHECK(std_scale.msfe == msfe);
  CHECK(std_scale.mafe == mafe);
}

TEST_CASE("no look-ahead: future perturbations never reach a forecast") {
  GlpModel model = make_dgp({DgpKind::seasonal_var_411, 4, 2, 29});
  PanelData data = panel_from(simulate(model, 60, 200, 31).values);
  RollingPlan plan{30, 58, 1};
  FitConfig cfg = small_cfg(5);

  ForecastMetrics base = rolling_evaluate(data, plan, cfg);
  REQUIRE(base.per_origin_errors.size() == 29);

  PanelData tail = data;
  tail.values(2, 59) += 5.0;  // past every origin and target
  ForecastMetrics same = rolling_evaluate(tail, plan, cfg);
  for (std::size_t i = 0; i < base.per_origin_errors.size(); ++i)
    CHECK((base.per_origin_errors[i] - same.per_origin_errors[i]).norm() == 0.0);

  PanelData mid = data;
  mid.values(1, 40) += 5.0;  // 1-based time 41: origins 30..39 precede it
  ForecastMetrics split = rolling_evaluate(mid, plan, cfg);
  for (int i = 0; i <= 9; ++i)
    CHECK((base.per_origin_errors[i] - split.per_origin_errors[i]).norm() ==
          0.0);
  CHECK((base.per_origin_errors[10] - split.per_origin_errors[10]).norm() >
        0.0);
}

TEST_CASE("refit schedules and thread invariance") {
  GlpModel model = make_dgp({DgpKind::varma_411, 3, 2, 41});
  PanelData data = panel_from(simulate(model, 80, 200, 43).values);
  RollingPlan once{40, 79, 0};
  FitConfig cfg = small_cfg(4);

  ForecastMetrics serial = rolling_evaluate(data, once, cfg, false, 1);
  ForecastMetrics parallel = rolling_evaluate(data, once, cfg, false, 3);
  REQUIRE(serial.per_origin_errors.size() == parallel.per_origin_errors.size());
  for (std::size_t i = 0; i < serial.per_origin_errors.size(); ++i)
    CHECK((serial.per_origin_errors[i] - parallel.per_origin_errors[i])
              .norm() == 0.0);

  RollingPlan every2{40, 79, 2};
  ForecastMetrics refit2 = rolling_evaluate(data, every2, cfg);
  CHECK(refit2.origins == serial.origins);
  CHECK(std::isfinite(refit2.msfe));
}

TEST_CASE("diverged fits are reported as skipped origins") {
  Rng rng(47);
  PanelData data = panel_from(rng.normal_matrix(3, 40));
  RollingPlan plan{20, 30, 0};
  FitConfig cfg = small_cfg(3);
  cfg.step = 1e9;
  cfg.backtrack = false;
  ForecastMetrics m = rolling_evaluate(data, plan, cfg);
  CHECK(m.per_origin_errors.empty());
  CHECK(m.origins.empty());
  CHECK(m.skipped_origins.size() == 11);
  CHECK(m.skipped_origins.front() == 20);
  CHECK(m.skipped_origins.back() == 30);
  CHECK(std::isnan(m.msfe));
  CHECK(std::isnan(m.mafe));
}

TEST_CASE("rolling evaluation validates its plan") {
  Rng rng(53);
  PanelData data = panel_from(rng.normal_matrix(2, 30));
  FitConfig cfg = small_cfg(4);
  cfg.r1 = cfg.r2 = 1;
  cfg.s = 1;

  CHECK_THROWS_AS(rolling_evaluate(data, {4, 20, 1}, cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(rolling_evaluate(data, {21, 20, 1}, cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(rolling_evaluate(data, {20, 30, 1}, cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(rolling_evaluate(data, {20, 25, -1}, cfg),
                  std::invalid_argument);
  CHECK_NOTHROW(rolling_evaluate(data, {20, 25, 1}, cfg));
}

TEST_CASE("metrics serialize to json and one-row csv") {
  Rng rng(59);
  PanelData data = panel_from(rng.normal_matrix(2, 40));
  RollingPlan plan{25, 35, 0};
  FitConfig cfg = small_cfg(3);
  cfg.r1 = cfg.r2 = 1;
  cfg.s = 1;
  ForecastMetrics m = rolling_evaluate(data, plan, cfg);

  std::string json = metrics_json(m);
  CHECK(json.find("\"msfe\"") != std::string::npos);
  CHECK(json.find("\"skipped_origins\": []") != std::string::npos);
  CHECK(json.find("\"per_origin_squared\"") != std::string::npos);

  std::ostringstream csv;
  write_csv(m, csv);
  CHECK(csv.str().rfind("origins,skipped,msfe,mafe\n", 0) == 0);
  CHECK(csv.str().find("\n11,0,") != std::string::npos);
}
