#include "tuckervar/simulation.hpp"

#include "tuckervar/parallel.hpp"
#include "tuckervar/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <utility>

namespace tuckervar {

namespace {

constexpr int kBurnIn = 300;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Shortest representation that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct FitOutcome {
  bool diverged = false;
  ErrorDecomposition err;
  int sparsity = 0;
};

FitOutcome one_fit(const DesignMatrices& d, const GlpModel& truth,
                   const FitConfig& cfg) {
  FitOutcome out;
  try {
    FitResult r = fit_agd(d, cfg);
    out.err = decompose_error(r.coeffs, r.support, truth);
    out.sparsity = static_cast<int>(r.support.lags.size());
  } catch (const DivergenceError&) {
    out.diverged = true;
  }
  return out;
}

// Interquartile range with interpolated quartiles; fewer than two points
// have no spread.
double iqr(std::vector<double> v) {
  if (v.size() < 2) return 0.0;
  std::sort(v.begin(), v.end());
  auto quantile = [&](double p) {
    double h = p * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 == v.size()) return v[lo];
    return v[lo] + (h - static_cast<double>(lo)) * (v[lo + 1] - v[lo]);
  };
  return quantile(0.75) - quantile(0.25);
}

void open_or_throw(std::ofstream& out, const std::string& path) {
  out.open(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
}

}  // namespace

GlpModel make_dgp(const DgpSpec& spec) {
  require(spec.n >= 1, "make_dgp: n must be positive");
  require(spec.r >= 1 && spec.r <= spec.n, "make_dgp: need 1 <= r <= n");
  Eigen::MatrixXd b = haar_orthogonal(spec.n, spec.seed);
  Eigen::MatrixXd p = b.leftCols(spec.r) * b.leftCols(spec.r).transpose();

  GlpModel m;
  m.n = spec.n;
  m.noise_cov = Eigen::MatrixXd::Identity(spec.n, spec.n);
  if (spec.kind == DgpKind::varma_411) {
    // y_t = Phi y_{t-1} + eps_t - Theta eps_{t-1}
    m.ar = {-0.5 * p};
    m.ma = {-0.7 * p};
  } else {
    m.ar.assign(9, Eigen::MatrixXd::Zero(spec.n, spec.n));
    const std::pair<int, double> seasonal[] = {
        {1, 1.0}, {4, 2.0}, {5, -2.0}, {8, -1.0}, {9, 1.0}};
    for (const auto& [lag, c] : seasonal)
      m.ar[lag - 1] = c * std::pow(0.7, lag) * p;
  }
  return m;
}

ErrorDecomposition decompose_error(const Tensor3& fitted,
                                   const GroupSupport& support,
                                   const GlpModel& truth) {
  const int t0 = fitted.d3();
  require(fitted.d1() == truth.n && fitted.d2() == truth.n,
          "decompose_error: tensor does not match the model dimension");
  require(support.t0 == t0, "decompose_error: support cutoff mismatch");

  std::vector<Eigen::MatrixXd> star = implied_var_coefficients(truth, t0);
  std::vector<char> active(t0 + 1, 0);
  for (int lag : support.lags) active[lag] = 1;

  ErrorDecomposition d;
  for (int j = 1; j <= t0; ++j) {
    if (active[j]) {
      d.estimation += (fitted.slice(j - 1) - star[j - 1]).squaredNorm();
    } else {
      d.estimation += fitted.slice(j - 1).squaredNorm();
      d.approximation += star[j - 1].squaredNorm();
    }
  }
  d.truncation = truncation_error(truth, t0);
  d.parameter = d.estimation + d.approximation;
  return d;
}

SparsityStudy run_error_vs_sparsity(const DgpSpec& spec, int t_len, int t0,
                                    const std::vector<int>& s_grid, int reps,
                                    const FitConfig& base_cfg, int threads) {
  require(reps >= 1, "run_error_vs_sparsity: reps must be positive");
  require(t0 >= 1 && t_len > t0, "run_error_vs_sparsity: need t_len > t0 >= 1");
  require(!s_grid.empty(), "run_error_vs_sparsity: empty sparsity grid");
  for (int s : s_grid)
    require(s >= 1 && s <= t0, "run_error_vs_sparsity: s outside [1, t0]");

  const int ns = static_cast<int>(s_grid.size());
  SparsityStudy study;
  study.cells.resize(static_cast<std::size_t>(ns) * reps);

  parallel_for(reps, threads, [&](int rep) {
    std::uint64_t u = 3 * static_cast<std::uint64_t>(rep);
    DgpSpec rspec = spec;
    rspec.seed = derive_seed(spec.seed, u);
    GlpModel model = make_dgp(rspec);
    PanelData panel =
        simulate(model, t_len, kBurnIn, derive_seed(spec.seed, u + 1));
    DesignMatrices d = build_design(panel, t0);

    FitConfig cfg = base_cfg;
    cfg.t0 = t0;
    cfg.r1 = cfg.r2 = spec.r;
    cfg.threshold = ThresholdMode::hard;
    cfg.lambda = 0.0;
    cfg.seed = derive_seed(spec.seed, u + 2);
    for (int si = 0; si < ns; ++si) {
      cfg.s = s_grid[si];
      FitOutcome out = one_fit(d, model, cfg);
      study.cells[static_cast<std::size_t>(si) * reps + rep] = {
          s_grid[si], rep, out.diverged, out.err};
    }
  });

  study.rows.resize(ns);
  for (int si = 0; si < ns; ++si) {
    SparsityRow& row = study.rows[si];
    row.s = s_grid[si];
    double est = 0.0, approx = 0.0, trunc = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const SparsityCell& c =
          study.cells[static_cast<std::size_t>(si) * reps + rep];
      if (c.diverged) {
        ++row.reps_diverged;
        continue;
      }
      est += c.err.estimation;
      approx += c.err.approximation;
      trunc += c.err.truncation;
      ++row.reps_done;
    }
    if (row.reps_done > 0) {
      row.mean.estimation = est / row.reps_done;
      row.mean.approximation = approx / row.reps_done;
      row.mean.truncation = trunc / row.reps_done;
      row.mean.parameter = row.mean.estimation + row.mean.approximation;
    } else {
      row.mean = {kNan, kNan, kNan, kNan};
    }
  }
  return study;
}

int resolve_t0(const T0Rule& rule, int t_len) {
  require(t_len >= 2, "resolve_t0: t_len too small");
  if (rule.kind == T0Rule::Kind::fixed) {
    require(rule.fixed >= 1, "resolve_t0: fixed cutoff must be positive");
    return rule.fixed;
  }
  double alpha = 0.0, c = 0.0;
  switch (rule.alpha) {
    case T0Rule::Alpha::quarter: alpha = 0.25; c = 3.0; break;
    case T0Rule::Alpha::third:   alpha = 1.0 / 3.0; c = 3.0; break;
    case T0Rule::Alpha::half:    alpha = 0.5; c = 1.5; break;
  }
  // The nudge keeps exact-integer powers (e.g. 729^(1/3)) on the right side.
  return static_cast<int>(std::floor(c * std::pow(t_len, alpha) + 1e-9));
}

RateStudy run_rate_scaling(DgpKind kind, std::uint64_t seed,
                           const std::vector<RateSetting>& settings,
                           const T0Rule& rule, int reps,
                           const FitConfig& base_cfg, int threads) {
  require(!settings.empty(), "run_rate_scaling: empty settings grid");
  require(reps >= 1, "run_rate_scaling: reps must be positive");

  const int nset = static_cast<int>(settings.size());
  std::vector<int> t0s(nset);
  for (int si = 0; si < nset; ++si) {
    const RateSetting& st = settings[si];
    require(st.r >= 1 && st.r <= st.n, "run_rate_scaling: need 1 <= r <= n");
    t0s[si] = resolve_t0(rule, st.t_len);
    require(t0s[si] >= 1 && t0s[si] < st.t_len,
            "run_rate_scaling: cutoff rule leaves no regression sample");
    require(base_cfg.s >= 1 && base_cfg.s <= t0s[si],
            "run_rate_scaling: base_cfg.s outside [1, t0]");
  }

  RateStudy study;
  study.cells.resize(static_cast<std::size_t>(nset) * reps);

  parallel_for(nset * reps, threads, [&](int flat) {
    const int si = flat / reps;
    const int rep = flat % reps;
    const RateSetting& st = settings[si];
    std::uint64_t u = 3 * static_cast<std::uint64_t>(flat);

    DgpSpec rspec;
    rspec.kind = kind;
    rspec.n = st.n;
    rspec.r = st.r;
    rspec.seed = derive_seed(seed, u);
    GlpModel model = make_dgp(rspec);
    PanelData panel =
        simulate(model, st.t_len, kBurnIn, derive_seed(seed, u + 1));
    DesignMatrices d = build_design(panel, t0s[si]);

    FitConfig cfg = base_cfg;
    cfg.t0 = t0s[si];
    cfg.r1 = cfg.r2 = st.r;
    cfg.threshold = ThresholdMode::hard;
    cfg.lambda = 0.0;
    cfg.seed = derive_seed(seed, u + 2);
    FitOutcome out = one_fit(d, model, cfg);
    study.cells[flat] = {si, rep, out.diverged, out.err.parameter};
  });

  study.rows.resize(nset);
  for (int si = 0; si < nset; ++si) {
    RateRow& row = study.rows[si];
    row.setting = settings[si];
    row.t0 = t0s[si];
    row.beta = base_cfg.s *
               (static_cast<double>(settings[si].r) * settings[si].n +
                std::log(static_cast<double>(t0s[si]))) /
               (settings[si].t_len - t0s[si]);
    double sum = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      const RateCell& c = study.cells[static_cast<std::size_t>(si) * reps + rep];
      if (c.diverged) {
        ++row.reps_diverged;
        continue;
      }
      sum += c.error;
      ++row.reps_done;
    }
    row.mean_error = row.reps_done > 0 ? sum / row.reps_done : kNan;
  }
  return study;
}

StabilityStudy run_ht_vs_st(const DgpSpec& spec, const std::vector<int>& t_grid,
                            const std::vector<int>& t0_grid,
                            const std::vector<int>& s_grid,
                            const std::vector<double>& lambda_grid, int reps,
                            const FitConfig& base_cfg, int threads) {
  require(!t_grid.empty() && !t0_grid.empty(),
          "run_ht_vs_st: t_grid and t0_grid must be nonempty");
  require(t_grid.size() == 1 || t0_grid.size() == 1,
          "run_ht_vs_st: only one of t_grid/t0_grid may vary");
  require(!s_grid.empty() && !lambda_grid.empty(),
          "run_ht_vs_st: empty method grid");
  require(reps >= 1, "run_ht_vs_st: reps must be positive");
  for (double l : lambda_grid)
    require(l > 0.0, "run_ht_vs_st: lambda must be positive");

  struct Setting { int t_len; int t0; };
  std::vector<Setting> settings;
  for (int tl : t_grid)
    for (int t0 : t0_grid) {
      require(t0 >= 1 && tl > t0, "run_ht_vs_st: need t_len > t0 >= 1");
      for (int s : s_grid)
        require(s >= 1 && s <= t0, "run_ht_vs_st: s outside [1, t0]");
      settings.push_back({tl, t0});
    }

  const int nset = static_cast<int>(settings.size());
  const int ns = static_cast<int>(s_grid.size());
  const int nl = static_cast<int>(lambda_grid.size());
  const int block = ns + nl;

  StabilityStudy study;
  study.cells.resize(static_cast<std::size_t>(nset) * reps * block);

  parallel_for(nset * reps, threads, [&](int flat) {
    const int si = flat / reps;
    const int rep = flat % reps;
    const Setting& st = settings[si];
    std::uint64_t u = 3 * static_cast<std::uint64_t>(flat);

    DgpSpec rspec = spec;
    rspec.seed = derive_seed(spec.seed, u);
    GlpModel model = make_dgp(rspec);
    PanelData panel =
        simulate(model, st.t_len, kBurnIn, derive_seed(spec.seed, u + 1));
    DesignMatrices d = build_design(panel, st.t0);

    FitConfig cfg = base_cfg;
    cfg.t0 = st.t0;
    cfg.r1 = cfg.r2 = spec.r;
    cfg.seed = derive_seed(spec.seed, u + 2);

    std::size_t off = static_cast<std::size_t>(flat) * block;
    for (int k = 0; k < ns; ++k) {
      cfg.threshold = ThresholdMode::hard;
      cfg.s = s_grid[k];
      cfg.lambda = 0.0;
      FitOutcome out = one_fit(d, model, cfg);
      study.cells[off + k] = {si,          rep,
                              "ht",        static_cast<double>(s_grid[k]),
                              out.diverged, out.err.parameter,
                              out.sparsity};
    }
    for (int k = 0; k < nl; ++k) {
      cfg.threshold = ThresholdMode::soft;
      cfg.s = st.t0;
      cfg.lambda = lambda_grid[k];
      FitOutcome out = one_fit(d, model, cfg);
      study.cells[off + ns + k] = {si,          rep,           "st",
                                   lambda_grid[k], out.diverged,
                                   out.err.parameter, out.sparsity};
    }
  });

  study.rows.resize(nset);
  for (int si = 0; si < nset; ++si) {
    StabilityRow& row = study.rows[si];
    row.t_len = settings[si].t_len;
    row.t0 = settings[si].t0;
    row.reps_done = reps;

    auto cell = [&](int rep, int k) -> const StabilityCell& {
      return study.cells[(static_cast<std::size_t>(si) * reps + rep) * block + k];
    };
    auto mean_error = [&](int k) {
      double sum = 0.0;
      int done = 0;
      for (int rep = 0; rep < reps; ++rep)
        if (!cell(rep, k).diverged) {
          sum += cell(rep, k).error;
          ++done;
        }
      return done > 0 ? sum / done : kNan;
    };
    for (int rep = 0; rep < reps; ++rep)
      for (int k = 0; k < block; ++k)
        if (cell(rep, k).diverged) ++row.reps_diverged;

    int best_k = 0;
    double best = kNan;
    for (int k = 0; k < ns; ++k) {
      double m = mean_error(k);
      if (!std::isnan(m) && (std::isnan(best) || m < best)) {
        best = m;
        best_k = k;
      }
    }
    row.best_s = s_grid[best_k];
    row.best_s_error = best;

    int best_l = 0;
    best = kNan;
    for (int k = 0; k < nl; ++k) {
      double m = mean_error(ns + k);
      if (!std::isnan(m) && (std::isnan(best) || m < best)) {
        best = m;
        best_l = k;
      }
    }
    row.best_lambda = lambda_grid[best_l];
    row.best_lambda_error = best;

    std::vector<double> ht_sizes, st_sizes;
    for (int rep = 0; rep < reps; ++rep) {
      if (!cell(rep, best_k).diverged)
        ht_sizes.push_back(cell(rep, best_k).sparsity);
      if (!cell(rep, ns + best_l).diverged)
        st_sizes.push_back(cell(rep, ns + best_l).sparsity);
    }
    row.ht_size_iqr = iqr(std::move(ht_sizes));
    row.st_size_iqr = iqr(std::move(st_sizes));
  }
  return study;
}

void write_csv(const SparsityStudy& study, std::ostream& tidy,
               std::ostream& aggregate) {
  tidy << "s,rep,diverged,estimation,approximation,truncation,parameter\n";
  for (const SparsityCell& c : study.cells)
    tidy << c.s << ',' << c.rep << ',' << (c.diverged ? 1 : 0) << ','
         << format_double(c.err.estimation) << ','
         << format_double(c.err.approximation) << ','
         << format_double(c.err.truncation) << ','
         << format_double(c.err.parameter) << '\n';

  aggregate << "s,reps_done,reps_diverged,estimation,approximation,truncation,"
               "parameter\n";
  for (const SparsityRow& r : study.rows)
    aggregate << r.s << ',' << r.reps_done << ',' << r.reps_diverged << ','
              << format_double(r.mean.estimation) << ','
              << format_double(r.mean.approximation) << ','
              << format_double(r.mean.truncation) << ','
              << format_double(r.mean.parameter) << '\n';
}

void write_csv(const RateStudy& study, std::ostream& tidy,
               std::ostream& aggregate) {
  tidy << "n,r,t_len,t0,beta,rep,diverged,parameter\n";
  for (const RateCell& c : study.cells) {
    const RateRow& r = study.rows[c.setting];
    tidy << r.setting.n << ',' << r.setting.r << ',' << r.setting.t_len << ','
         << r.t0 << ',' << format_double(r.beta) << ',' << c.rep << ','
         << (c.diverged ? 1 : 0) << ',' << format_double(c.error) << '\n';
  }

  aggregate << "n,r,t_len,t0,beta,reps_done,reps_diverged,mean_error\n";
  for (const RateRow& r : study.rows)
    aggregate << r.setting.n << ',' << r.setting.r << ',' << r.setting.t_len
              << ',' << r.t0 << ',' << format_double(r.beta) << ','
              << r.reps_done << ',' << r.reps_diverged << ','
              << format_double(r.mean_error) << '\n';
}

void write_csv(const StabilityStudy& study, std::ostream& tidy,
               std::ostream& aggregate) {
  tidy << "t_len,t0,rep,method,param,diverged,error,sparsity\n";
  for (const StabilityCell& c : study.cells) {
    const StabilityRow& r = study.rows[c.setting];
    tidy << r.t_len << ',' << r.t0 << ',' << c.rep << ',' << c.method << ','
         << format_double(c.param) << ',' << (c.diverged ? 1 : 0) << ','
         << format_double(c.error) << ',' << c.sparsity << '\n';
  }

  aggregate << "t_len,t0,best_s,best_s_error,best_lambda,best_lambda_error,"
               "ht_size_iqr,st_size_iqr,reps_done,reps_diverged\n";
  for (const StabilityRow& r : study.rows)
    aggregate << r.t_len << ',' << r.t0 << ',' << r.best_s << ','
              << format_double(r.best_s_error) << ','
              << format_double(r.best_lambda) << ','
              << format_double(r.best_lambda_error) << ','
              << format_double(r.ht_size_iqr) << ','
              << format_double(r.st_size_iqr) << ',' << r.reps_done << ','
              << r.reps_diverged << '\n';
}

namespace {

template <typename Study>
void write_csv_files(const Study& study, const std::string& tidy_path,
                     const std::string& aggregate_path) {
  std::ofstream tidy, aggregate;
  open_or_throw(tidy, tidy_path);
  open_or_throw(aggregate, aggregate_path);
  write_csv(study, tidy, aggregate);
  if (!tidy || !aggregate)
    throw std::runtime_error("write failed: " + tidy_path + ", " +
                             aggregate_path);
}

}  // namespace

void write_csv(const SparsityStudy& study, const std::string& tidy_path,
               const std::string& aggregate_path) {
  write_csv_files(study, tidy_path, aggregate_path);
}

void write_csv(const RateStudy& study, const std::string& tidy_path,
               const std::string& aggregate_path) {
  write_csv_files(study, tidy_path, aggregate_path);
}

void write_csv(const StabilityStudy& study, const std::string& tidy_path,
               const std::string& aggregate_path) {
  write_csv_files(study, tidy_path, aggregate_path);
}

std::string summary_json(const SparsityStudy& study) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SparsityRow& r : study.rows)
    rows.push_back({{"s", r.s},
                    {"estimation", r.mean.estimation},
                    {"approximation", r.mean.approximation},
                    {"truncation", r.mean.truncation},
                    {"parameter", r.mean.parameter},
                    {"reps_done", r.reps_done},
                    {"reps_diverged", r.reps_diverged}});
  nlohmann::ordered_json doc{{"experiment", "error_vs_sparsity"},
                             {"rows", rows}};
  return doc.dump(2);
}

std::string summary_json(const RateStudy& study) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const RateRow& r : study.rows)
    rows.push_back({{"n", r.setting.n},
                    {"r", r.setting.r},
                    {"t_len", r.setting.t_len},
                    {"t0", r.t0},
                    {"beta", r.beta},
                    {"mean_error", r.mean_error},
                    {"reps_done", r.reps_done},
                    {"reps_diverged", r.reps_diverged}});
  nlohmann::ordered_json doc{{"experiment", "rate_scaling"}, {"rows", rows}};
  return doc.dump(2);
}

std::string summary_json(const StabilityStudy& study) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const StabilityRow& r : study.rows)
    rows.push_back({{"t_len", r.t_len},
                    {"t0", r.t0},
                    {"best_s", r.best_s},
                    {"best_s_error", r.best_s_error},
                    {"best_lambda", r.best_lambda},
                    {"best_lambda_error", r.best_lambda_error},
                    {"ht_size_iqr", r.ht_size_iqr},
                    {"st_size_iqr", r.st_size_iqr},
                    {"reps_done", r.reps_done},
                    {"reps_diverged", r.reps_diverged}});
  nlohmann::ordered_json doc{{"experiment", "ht_vs_st"}, {"rows", rows}};
  return doc.dump(2);
}

}  // namespace tuckervar
