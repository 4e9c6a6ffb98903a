#include "tuckervar/estimator.hpp"

#include "tuckervar/parallel.hpp"
#include "tuckervar/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace tuckervar {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_design(const DesignMatrices& d, const char* op) {
  std::string who(op);
  require(d.y.rows() > 0 && d.y.cols() > 0, who + ": empty response matrix");
  require(d.t0 > 0, who + ": t0 must be positive");
  require(d.t1 == d.y.cols() && d.t1 == d.x.cols(),
          who + ": t1 must match the column counts of y and x");
  require(d.x.rows() == d.y.rows() * d.t0, who + ": x must have N*t0 rows");
}

void check_tensor(const Tensor3& a, const DesignMatrices& d, const char* op) {
  require(a.d1() == d.y.rows() && a.d2() == d.y.rows() && a.d3() == d.t0,
          std::string(op) + ": tensor must be N x N x t0 for this design");
}

double penalty(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2,
               double reg_a, double reg_b) {
  if (reg_a == 0.0) return 0.0;
  const double b2 = reg_b * reg_b;
  Eigen::MatrixXd m1 = u1.transpose() * u1;
  m1.diagonal().array() -= b2;
  Eigen::MatrixXd m2 = u2.transpose() * u2;
  m2.diagonal().array() -= b2;
  return 0.25 * reg_a * (m1.squaredNorm() + m2.squaredNorm());
}

// Contractions of the full-tensor gradient down to the factor blocks, plus
// the scale penalty terms.
FactorGradients chain_gradients(const Tensor3& dfull, const TuckerFactors& f,
                                double reg_a, double reg_b) {
  const int t0 = dfull.d3();
  const int r1 = static_cast<int>(f.u1.cols());
  const int r2 = static_cast<int>(f.u2.cols());
  FactorGradients g;
  g.u1 = Eigen::MatrixXd::Zero(f.u1.rows(), r1);
  g.u2 = Eigen::MatrixXd::Zero(f.u2.rows(), r2);
  g.core = Tensor3(r1, r2, t0);
  for (int j = 0; j < t0; ++j) {
    auto dj = dfull.slice(j);
    g.u1.noalias() += dj * f.u2 * f.core.slice(j).transpose();
    g.u2.noalias() += dj.transpose() * f.u1 * f.core.slice(j);
    g.core.slice(j).noalias() = f.u1.transpose() * dj * f.u2;
  }
  if (reg_a > 0.0) {
    const double b2 = reg_b * reg_b;
    Eigen::MatrixXd m1 = f.u1.transpose() * f.u1;
    m1.diagonal().array() -= b2;
    Eigen::MatrixXd m2 = f.u2.transpose() * f.u2;
    m2.diagonal().array() -= b2;
    g.u1.noalias() += reg_a * f.u1 * m1;
    g.u2.noalias() += reg_a * f.u2 * m2;
  }
  return g;
}

GroupSupport nonzero_support(const Tensor3& a) {
  GroupSupport s;
  s.t0 = a.d3();
  for (int j = 0; j < a.d3(); ++j)
    if (a.slice(j).norm() > 0.0) s.lags.push_back(j + 1);
  return s;
}

}  // namespace

DesignMatrices build_design(const PanelData& panel, int t0) {
  require(panel.n > 0 && panel.t_len > 0 &&
              panel.values.rows() == panel.n &&
              panel.values.cols() == panel.t_len,
          "build_design: malformed panel");
  require(t0 >= 1, "build_design: t0 must be positive");
  require(panel.t_len > t0,
          "build_design: need more than t0 = " + std::to_string(t0) +
              " observations, got " + std::to_string(panel.t_len));

  const int n = panel.n;
  DesignMatrices d;
  d.t0 = t0;
  d.t1 = panel.t_len - t0;
  d.y.resize(n, d.t1);
  d.x.resize(static_cast<Eigen::Index>(n) * t0, d.t1);
  for (int c = 0; c < d.t1; ++c) {
    const int t = panel.t_len - 1 - c;  // columns run time-descending from y_T
    d.y.col(c) = panel.values.col(t);
    for (int j = 1; j <= t0; ++j)
      d.x.block(static_cast<Eigen::Index>(j - 1) * n, c, n, 1) =
          panel.values.col(t - j);
  }
  return d;
}

double loss(const Tensor3& coeffs, const DesignMatrices& d) {
  check_design(d, "loss");
  check_tensor(coeffs, d, "loss");
  return (d.y - coeffs.mode1() * d.x).squaredNorm() / (2.0 * d.t1);
}

Tensor3 grad_full(const Tensor3& coeffs, const DesignMatrices& d) {
  check_design(d, "grad_full");
  check_tensor(coeffs, d, "grad_full");
  const int n = static_cast<int>(d.y.rows());
  Tensor3 g(n, n, d.t0);
  g.mode1().noalias() =
      (d.y - coeffs.mode1() * d.x) * d.x.transpose() * (-1.0 / d.t1);
  return g;
}

FactorGradients grad_factors(const TuckerFactors& f, const DesignMatrices& d,
                             double reg_a, double reg_b) {
  require(f.u1.cols() == f.core.d1() && f.u2.cols() == f.core.d2(),
          "grad_factors: factor columns must match core extents");
  require(f.u1.rows() == d.y.rows() && f.u2.rows() == d.y.rows() &&
              f.core.d3() == d.t0,
          "grad_factors: factor shapes do not match the design");
  require(reg_a >= 0.0 && reg_b > 0.0,
          "grad_factors: need reg_a >= 0 and reg_b > 0");
  return chain_gradients(grad_full(reconstruct(f), d), f, reg_a, reg_b);
}

TuckerFactors init_factors(int n, int r1, int r2, int t0, double reg_b,
                           std::uint64_t seed) {
  require(n >= 1 && t0 >= 1, "init_factors: invalid dimensions");
  require(r1 >= 1 && r1 <= n && r2 >= 1 && r2 <= n,
          "init_factors: ranks must lie in [1, N]");
  require(reg_b > 0.0, "init_factors: reg_b must be positive");
  TuckerFactors f;
  f.u1 = reg_b * haar_orthogonal(n, derive_seed(seed, 1)).leftCols(r1);
  f.u2 = reg_b * haar_orthogonal(n, derive_seed(seed, 2)).leftCols(r2);
  f.core = Tensor3(r1, r2, t0);
  return f;
}

double default_step(const DesignMatrices& d) {
  check_design(d, "default_step");
  const double frob = d.x.squaredNorm() / d.t1;
  require(frob > 0.0, "default_step: predictor matrix is identically zero");
  // Power iteration for lambda_max(X X' / T1); the Frobenius bound caps it.
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d.x.rows());
  v /= v.norm();
  double lam = 0.0;
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd w = d.x * (d.x.transpose() * v) / d.t1;
    double nl = w.norm();
    if (nl <= 0.0) break;
    v = w / nl;
    bool settled = it >= 8 && std::abs(nl - lam) <= 1e-6 * nl;
    lam = nl;
    if (settled) break;
  }
  if (lam <= 0.0) lam = frob;
  return 1e-2 / lam;
}

FitResult fit_agd(const DesignMatrices& d, const FitConfig& cfg) {
  return fit_agd(d, cfg, std::nullopt, nullptr);
}

FitResult fit_agd(const DesignMatrices& d, const FitConfig& cfg,
                  const std::optional<TuckerFactors>& init,
                  const FitObserver& observer) {
  check_design(d, "fit_agd");
  const int n = static_cast<int>(d.y.rows());
  require(cfg.t0 == d.t0, "fit_agd: cfg.t0 must match the design");
  require(cfg.r1 >= 1 && cfg.r1 <= n && cfg.r2 >= 1 && cfg.r2 <= n,
          "fit_agd: ranks must lie in [1, N]");
  if (cfg.threshold == ThresholdMode::hard)
    require(cfg.s >= 1 && cfg.s <= cfg.t0, "fit_agd: s must lie in [1, t0]");
  if (cfg.threshold == ThresholdMode::soft)
    require(cfg.lambda > 0.0, "fit_agd: soft thresholding needs lambda > 0");
  require(cfg.max_iter >= 1, "fit_agd: max_iter must be positive");
  require(cfg.tol > 0.0, "fit_agd: tol must be positive");
  require(cfg.warm_start_iters >= 0,
          "fit_agd: warm_start_iters must be nonnegative");
  require(cfg.reg_a >= 0.0 && cfg.reg_b > 0.0,
          "fit_agd: need reg_a >= 0 and reg_b > 0");
  require(d.x.squaredNorm() > 0.0,
          "fit_agd: predictor matrix is identically zero");

  double eta = cfg.step > 0.0 ? cfg.step : default_step(d);

  TuckerFactors f;
  if (init) {
    f = *init;
    require(f.u1.rows() == n && f.u2.rows() == n && f.u1.cols() == cfg.r1 &&
                f.u2.cols() == cfg.r2 && f.core.d1() == cfg.r1 &&
                f.core.d2() == cfg.r2 && f.core.d3() == cfg.t0,
            "fit_agd: initial factors do not match the configuration");
  } else {
    f = init_factors(n, cfg.r1, cfg.r2, cfg.t0, cfg.reg_b, cfg.seed);
  }

  Tensor3 a = reconstruct(f);
  Eigen::MatrixXd resid = d.y - a.mode1() * d.x;
  double cur_loss = resid.squaredNorm() / (2.0 * d.t1);
  double cur_obj = cur_loss + penalty(f.u1, f.u2, cfg.reg_a, cfg.reg_b);
  const double guard = cur_obj > 0.0 ? 1e6 * cur_obj : 1.0;

  FitResult out;
  out.objective_trace.reserve(cfg.max_iter);
  out.grad_norm_trace.reserve(cfg.max_iter);
  GroupSupport ht_support;
  bool ht_applied = false;

  Tensor3 dfull(n, n, cfg.t0);
  for (int k = 0; k < cfg.max_iter; ++k) {
    dfull.mode1().noalias() = resid * d.x.transpose() * (-1.0 / d.t1);
    FactorGradients g = chain_gradients(dfull, f, cfg.reg_a, cfg.reg_b);
    double gnorm = std::sqrt(g.u1.squaredNorm() + g.u2.squaredNorm() +
                             g.core.squared_norm());

    // Gradient step for all three blocks from the same iterate. The halving
    // loop guards the smooth step only; thresholding moves are exempt.
    TuckerFactors next;
    Tensor3 atil;
    for (int halvings = 0;; ++halvings) {
      next.u1 = f.u1 - eta * g.u1;
      next.u2 = f.u2 - eta * g.u2;
      next.core = f.core;
      next.core.mode1() -= eta * g.core.mode1();
      atil = reconstruct(next);
      if (!cfg.backtrack || halvings >= 30) break;
      double trial =
          (d.y - atil.mode1() * d.x).squaredNorm() / (2.0 * d.t1) +
          penalty(next.u1, next.u2, cfg.reg_a, cfg.reg_b);
      if (trial <= cur_obj * (1.0 + 1e-12)) break;
      eta *= 0.5;
    }

    Tensor3 a_next;
    const bool thresholding = k >= cfg.warm_start_iters;
    if (thresholding && cfg.threshold == ThresholdMode::hard) {
      auto ht = hard_threshold(atil, cfg.s);
      a_next = std::move(ht.first);
      ht_support = std::move(ht.second);
      ht_applied = true;
      std::vector<char> keep(cfg.t0, 0);
      for (int lag : ht_support.lags) keep[lag - 1] = 1;
      for (int j = 0; j < cfg.t0; ++j)
        if (!keep[j]) next.core.slice(j).setZero();
    } else if (thresholding && cfg.threshold == ThresholdMode::soft) {
      a_next = atil;
      for (int j = 0; j < cfg.t0; ++j) {
        double nrm = atil.slice(j).norm();
        if (nrm <= cfg.lambda) {
          a_next.slice(j).setZero();
          next.core.slice(j).setZero();
        } else {
          double scale = 1.0 - cfg.lambda / nrm;
          a_next.slice(j) *= scale;
          next.core.slice(j) *= scale;
        }
      }
    } else {
      a_next = std::move(atil);
    }

    double rel = (a_next - a).norm() / std::max(a.norm(), 1e-12);
    a = std::move(a_next);
    f = std::move(next);

    resid = d.y - a.mode1() * d.x;
    cur_loss = resid.squaredNorm() / (2.0 * d.t1);
    cur_obj = cur_loss + penalty(f.u1, f.u2, cfg.reg_a, cfg.reg_b);
    out.objective_trace.push_back(cur_obj);
    out.grad_norm_trace.push_back(gnorm);
    out.iterations_used = k + 1;
    if (observer) observer(k, a);

    if (!std::isfinite(cur_obj) || cur_obj > guard)
      throw DivergenceError(
          k, "fit_agd: objective diverged at iteration " + std::to_string(k));
    if (thresholding && rel < cfg.tol) {
      out.converged = true;
      break;
    }
  }

  out.step_used = eta;
  out.loss_value = cur_loss;
  out.support = ht_applied ? std::move(ht_support) : nonzero_support(a);
  out.factors = std::move(f);
  out.coeffs = std::move(a);
  return out;
}

Tensor3 fit_group_lasso_reference(const DesignMatrices& d, double lambda,
                                  int r1, int r2, FitConfig base) {
  require(lambda > 0.0, "fit_group_lasso_reference: lambda must be positive");
  base.t0 = d.t0;
  base.r1 = r1;
  base.r2 = r2;
  base.threshold = ThresholdMode::soft;
  base.lambda = lambda;
  base.s = d.t0;
  return fit_agd(d, base).coeffs;
}

AicSelection select_aic(const DesignMatrices& d,
                        const std::vector<std::array<int, 3>>& grid, double c,
                        const FitConfig& base_cfg, int threads) {
  check_design(d, "select_aic");
  require(!grid.empty(), "select_aic: empty grid");
  require(c > 0.0, "select_aic: c must be positive");
  const int n = static_cast<int>(d.y.rows());
  for (const auto& g : grid) {
    require(g[0] >= 1 && g[0] <= n && g[1] >= 1 && g[1] <= n,
            "select_aic: grid ranks must lie in [1, N]");
    require(g[2] >= 1 && g[2] <= d.t0,
            "select_aic: grid sparsity must lie in [1, t0]");
  }

  AicSelection sel;
  sel.table.resize(grid.size());
  parallel_for(static_cast<int>(grid.size()), threads, [&](int i) {
    AicEntry e;
    e.r1 = grid[i][0];
    e.r2 = grid[i][1];
    e.s = grid[i][2];
    FitConfig cfg = base_cfg;
    cfg.t0 = d.t0;
    cfg.r1 = e.r1;
    cfg.r2 = e.r2;
    cfg.s = e.s;
    try {
      FitResult r = fit_agd(d, cfg);
      e.loss_value = r.loss_value;
      e.aic = std::log(r.loss_value) +
              c * ((e.r1 + e.r2) * n + std::log(static_cast<double>(d.t0))) *
                  e.s / d.t1;
    } catch (const DivergenceError&) {
      e.diverged = true;
      e.aic = std::numeric_limits<double>::infinity();
    }
    sel.table[i] = std::move(e);
  });

  int best = -1;
  for (int i = 0; i < static_cast<int>(sel.table.size()); ++i) {
    const AicEntry& e = sel.table[i];
    if (e.diverged) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const AicEntry& b = sel.table[best];
    bool better = e.aic < b.aic ||
                  (e.aic == b.aic &&
                   (e.s < b.s || (e.s == b.s && e.r1 + e.r2 < b.r1 + b.r2)));
    if (better) best = i;
  }
  if (best < 0) throw std::runtime_error("select_aic: every fit diverged");
  sel.best = {sel.table[best].r1, sel.table[best].r2, sel.table[best].s};
  return sel;
}

namespace {

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::runtime_error(std::string("fit_result_from_json: ") + what +
                             " must be a nested array");
  Eigen::MatrixXd m(j.size(), j[0].size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (j[i].size() != static_cast<std::size_t>(m.cols()))
      throw std::runtime_error(std::string("fit_result_from_json: ragged ") +
                               what);
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

}  // namespace

std::string to_json(const FitResult& result) {
  const TuckerFactors& f = result.factors;
  nlohmann::ordered_json j;
  j["schema"] = "tuckervar-fit-v1";
  j["n"] = f.u1.rows();
  j["t0"] = f.core.d3();
  j["r1"] = f.core.d1();
  j["r2"] = f.core.d2();
  j["u1"] = matrix_to_json(f.u1);
  j["u2"] = matrix_to_json(f.u2);
  nlohmann::ordered_json core = nlohmann::ordered_json::array();
  for (int i = 0; i < f.core.d1(); ++i) {
    nlohmann::ordered_json plane = nlohmann::ordered_json::array();
    for (int c = 0; c < f.core.d2(); ++c) {
      nlohmann::ordered_json fib = nlohmann::ordered_json::array();
      for (int k = 0; k < f.core.d3(); ++k) fib.push_back(f.core(i, c, k));
      plane.push_back(std::move(fib));
    }
    core.push_back(std::move(plane));
  }
  j["core"] = std::move(core);
  j["support"] = {{"t0", result.support.t0}, {"lags", result.support.lags}};
  j["objective_trace"] = result.objective_trace;
  j["grad_norm_trace"] = result.grad_norm_trace;
  j["converged"] = result.converged;
  j["iterations_used"] = result.iterations_used;
  j["step_used"] = result.step_used;
  j["loss"] = result.loss_value;
  return j.dump(2);
}

FitResult fit_result_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("fit_result_from_json: ") + e.what());
  }
  if (!j.contains("schema") || j["schema"] != "tuckervar-fit-v1")
    throw std::runtime_error(
        "fit_result_from_json: missing or unsupported schema (expected "
        "tuckervar-fit-v1)");

  FitResult out;
  out.factors.u1 = matrix_from_json(j.at("u1"), "u1");
  out.factors.u2 = matrix_from_json(j.at("u2"), "u2");
  const int r1 = j.at("r1").get<int>();
  const int r2 = j.at("r2").get<int>();
  const int t0 = j.at("t0").get<int>();
  out.factors.core = Tensor3(r1, r2, t0);
  const auto& core = j.at("core");
  if (static_cast<int>(core.size()) != r1)
    throw std::runtime_error("fit_result_from_json: core extent mismatch");
  for (int i = 0; i < r1; ++i)
    for (int c = 0; c < r2; ++c)
      for (int k = 0; k < t0; ++k)
        out.factors.core(i, c, k) = core.at(i).at(c).at(k).get<double>();
  out.support.t0 = j.at("support").at("t0").get<int>();
  out.support.lags = j.at("support").at("lags").get<std::vector<int>>();
  out.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  out.grad_norm_trace = j.at("grad_norm_trace").get<std::vector<double>>();
  out.converged = j.at("converged").get<bool>();
  out.iterations_used = j.at("iterations_used").get<int>();
  if (j.contains("step_used")) out.step_used = j["step_used"].get<double>();
  if (j.contains("loss")) out.loss_value = j["loss"].get<double>();
  out.coeffs = reconstruct(out.factors);
  return out;
}

}  // namespace tuckervar
