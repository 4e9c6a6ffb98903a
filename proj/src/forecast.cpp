#include "tuckervar/forecast.hpp"

#include "tuckervar/parallel.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>

namespace tuckervar {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct WindowStats {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;  // sample std dev, or 1 for constant series
};

WindowStats window_stats(const Eigen::MatrixXd& values, int cols) {
  WindowStats w;
  auto block = values.leftCols(cols);
  w.means = block.rowwise().mean();
  w.scales = ((block.colwise() - w.means).rowwise().squaredNorm() /
              (cols - 1)).cwiseSqrt();
  for (int i = 0; i < w.scales.size(); ++i)
    if (w.scales(i) <= 0.0) w.scales(i) = 1.0;
  return w;
}

// Standardized observations at 1-based times first..last as a panel.
PanelData standardized_window(const PanelData& data, const WindowStats& w,
                              int first, int last) {
  PanelData out;
  out.n = data.n;
  out.t_len = last - first + 1;
  out.values = w.scales.cwiseInverse().asDiagonal() *
               (data.values.middleCols(first - 1, out.t_len).colwise() -
                w.means);
  out.means = w.means;
  out.scales = w.scales;
  out.standardized = true;
  return out;
}

}  // namespace

Eigen::VectorXd one_step_forecast(const TuckerFactors& f,
                                  const PanelData& history, int t, int t0) {
  require(t0 >= 1, "one_step_forecast: t0 must be positive");
  require(t > t0, "one_step_forecast: need t > t0");
  require(history.t_len >= t - 1,
          "one_step_forecast: history does not reach t - 1");
  require(f.u1.rows() == history.n && f.u2.rows() == history.n,
          "one_step_forecast: factor rows do not match the panel");
  require(f.core.d3() == t0, "one_step_forecast: core depth differs from t0");

  Tensor3 a = reconstruct(f);
  Eigen::VectorXd yhat = Eigen::VectorXd::Zero(history.n);
  for (int j = 1; j <= t0; ++j)
    yhat.noalias() += a.slice(j - 1) * history.values.col(t - j - 1);
  return yhat;
}

ForecastMetrics rolling_evaluate(const PanelData& data, const RollingPlan& plan,
                                 const FitConfig& cfg, bool raw_scale,
                                 int threads) {
  require(data.n >= 1 && data.t_len >= 2, "rolling_evaluate: empty panel");
  require(cfg.t0 >= 1, "rolling_evaluate: cfg.t0 must be positive");
  require(plan.first_origin > cfg.t0,
          "rolling_evaluate: first_origin must exceed t0");
  require(plan.first_origin <= plan.last_origin,
          "rolling_evaluate: origins out of order");
  require(plan.last_origin < data.t_len,
          "rolling_evaluate: last_origin leaves no observation to forecast");
  require(plan.refit_every >= 0, "rolling_evaluate: refit_every negative");

  const int count = plan.last_origin - plan.first_origin + 1;
  std::vector<std::optional<Eigen::VectorXd>> errors(count);

  struct Model {
    TuckerFactors factors;
    WindowStats stats;
  };

  auto fit_at = [&](int origin, const std::optional<TuckerFactors>& warm)
      -> std::optional<Model> {
    WindowStats stats = window_stats(data.values, origin);
    PanelData train = standardized_window(data, stats, 1, origin);
    DesignMatrices d = build_design(train, cfg.t0);
    try {
      FitResult r = fit_agd(d, cfg, warm, nullptr);
      return Model{r.factors, std::move(stats)};
    } catch (const DivergenceError&) {
      return std::nullopt;
    }
  };

  auto forecast_error = [&](const Model& m, int origin) {
    PanelData window =
        standardized_window(data, m.stats, origin - cfg.t0 + 1, origin);
    Eigen::VectorXd yhat =
        one_step_forecast(m.factors, window, cfg.t0 + 1, cfg.t0);
    Eigen::VectorXd target =
        (data.values.col(origin) - m.stats.means).cwiseQuotient(m.stats.scales);
    Eigen::VectorXd err = target - yhat;
    if (raw_scale) err = err.cwiseProduct(m.stats.scales);
    return err;
  };

  if (plan.refit_every == 0) {
    std::optional<Model> model = fit_at(plan.first_origin, std::nullopt);
    if (model) {
      parallel_for(count, threads, [&](int i) {
        errors[i] = forecast_error(*model, plan.first_origin + i);
      });
    }
  } else {
    std::optional<Model> current;
    std::optional<TuckerFactors> warm;
    for (int i = 0; i < count; ++i) {
      if (i % plan.refit_every == 0) {
        current = fit_at(plan.first_origin + i, warm);
        if (current) warm = current->factors;
      }
      if (current) errors[i] = forecast_error(*current, plan.first_origin + i);
    }
  }

  ForecastMetrics m;
  for (int i = 0; i < count; ++i) {
    int origin = plan.first_origin + i;
    if (errors[i]) {
      m.per_origin_errors.push_back(std::move(*errors[i]));
      m.origins.push_back(origin);
    } else {
      m.skipped_origins.push_back(origin);
    }
  }
  if (!m.per_origin_errors.empty()) {
    for (const Eigen::VectorXd& e : m.per_origin_errors) {
      m.msfe += e.squaredNorm();
      m.mafe += e.lpNorm<1>();
    }
    m.msfe /= static_cast<double>(m.per_origin_errors.size());
    m.mafe /= static_cast<double>(m.per_origin_errors.size());
  } else {
    m.msfe = m.mafe = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

std::string metrics_json(const ForecastMetrics& m) {
  nlohmann::ordered_json squared = nlohmann::ordered_json::array();
  nlohmann::ordered_json abs = nlohmann::ordered_json::array();
  for (const Eigen::VectorXd& e : m.per_origin_errors) {
    squared.push_back(e.squaredNorm());
    abs.push_back(e.lpNorm<1>());
  }
  nlohmann::ordered_json doc{
      {"msfe", m.msfe},
      {"mafe", m.mafe},
      {"origins", m.origins},
      {"skipped_origins", m.skipped_origins},
      {"per_origin_squared", squared},
      {"per_origin_abs", abs}};
  return doc.dump(2);
}

void write_csv(const ForecastMetrics& m, std::ostream& out) {
  out << "origins,skipped,msfe,mafe\n"
      << m.per_origin_errors.size() << ',' << m.skipped_origins.size() << ','
      << format_double(m.msfe) << ',' << format_double(m.mafe) << '\n';
}

void write_csv(const ForecastMetrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_csv(m, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace tuckervar
