// Command-line front end for the tuckervar library.
//
// Subcommands:
//   fit       estimate a low-rank, group-sparse VAR from a CSV panel,
//             optionally selecting (r1, r2, s) by AIC over a grid file first
//   select    run the AIC grid search alone and write the table
//   simulate  run a Monte-Carlo study and write tidy/aggregate CSV plus a
//             JSON summary: error_vs_sparsity, rate_scaling, or ht_vs_st
//   forecast  rolling one-step-ahead evaluation of a CSV panel
//   convert   MA<->AR coefficient files (schema tuckervar-coeffs-v1)
//
// Exit codes: 0 success, 2 usage or IO error, 3 numerical failure.
// A --config file holds key=value lines whose keys are the long flag names
// with '-' replaced by '_'; explicit flags win over file entries.

#include "CLI11.hpp"
#include "json.hpp"
#include "tuckervar/estimator.hpp"
#include "tuckervar/forecast.hpp"
#include "tuckervar/parallel.hpp"
#include "tuckervar/process.hpp"
#include "tuckervar/simulation.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace tuckervar;
using nlohmann::json;

constexpr int kUsage = 2;
constexpr int kNumerical = 3;

struct ExitError : std::runtime_error {
  int code;
  ExitError(int code, const std::string& msg)
      : std::runtime_error(msg), code(code) {}
};

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ExitError(kUsage, what + ": cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ExitError(kUsage, what + ": expected true/false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::vector<int> parse_int_list(const std::string& text,
                                const std::string& what) {
  std::vector<int> out;
  for (const std::string& p : split_list(text))
    out.push_back(parse_number<int>(p, what));
  if (out.empty()) throw ExitError(kUsage, what + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> out;
  for (const std::string& p : split_list(text))
    out.push_back(parse_number<double>(p, what));
  if (out.empty()) throw ExitError(kUsage, what + ": empty list");
  return out;
}

// Options addressable both as flags and as config-file keys. Entries from the
// file apply only when the matching flag was not passed, so flags win.
class OptionRegistry {
 public:
  template <typename T>
  void bind(CLI::App* cmd, const std::string& flag, T& ref,
            const std::string& help) {
    CLI::Option* opt = cmd->add_option(flag, ref, help);
    std::string key = key_for(flag);
    bindings_.push_back(
        {key, opt, [&ref, key](const std::string& text) {
           if constexpr (std::is_same_v<T, bool>)
             ref = parse_bool(text, "config key '" + key + "'");
           else if constexpr (std::is_same_v<T, std::string>)
             ref = text;
           else
             ref = parse_number<T>(text, "config key '" + key + "'");
         }});
  }

  void apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ExitError(kUsage, "cannot open config file " + path);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      line = trim(line);
      if (line.empty() || line[0] == '#') continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ExitError(kUsage, path + ":" + std::to_string(number) +
                                    ": expected key=value, got '" + line + "'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      Binding* binding = nullptr;
      for (Binding& b : bindings_)
        if (b.key == key) binding = &b;
      if (!binding)
        throw ExitError(kUsage, path + ": unknown config key: " + key);
      if (binding->option->count() == 0) {
        binding->set(value);
        binding->from_file = true;
      }
    }
  }

  // True when the key arrived through a flag or a config-file entry.
  bool was_set(const std::string& key) const {
    for (const Binding& b : bindings_)
      if (b.key == key) return b.option->count() > 0 || b.from_file;
    return false;
  }

 private:
  struct Binding {
    std::string key;
    CLI::Option* option;
    std::function<void(const std::string&)> set;
    bool from_file = false;
  };

  static std::string key_for(const std::string& flag) {
    std::string key = flag.substr(flag.find_first_not_of('-'));
    for (char& c : key)
      if (c == '-') c = '_';
    return key;
  }

  std::vector<Binding> bindings_;
};

// Shared fit parameters with their config-file keys.
struct FitOptions {
  FitConfig cfg;
  std::string threshold = "hard";
  std::string config_path;
  int threads = 0;  // 0 resolves to TUCKERVAR_THREADS or the hardware count

  void bind(CLI::App* cmd, OptionRegistry& reg) {
    cmd->add_option("--config", config_path,
                    "key=value file; explicit flags win");
    reg.bind(cmd, "--t0", cfg.t0, "running order (number of lags fitted)");
    reg.bind(cmd, "--r1", cfg.r1, "response factor rank");
    reg.bind(cmd, "--r2", cfg.r2, "predictor factor rank");
    reg.bind(cmd, "--s", cfg.s, "lag slices kept by hard thresholding");
    reg.bind(cmd, "--lambda", cfg.lambda, "soft-threshold level");
    reg.bind(cmd, "--threshold", threshold, "hard|soft|none");
    reg.bind(cmd, "--step", cfg.step, "gradient step; <= 0 picks one from the design");
    reg.bind(cmd, "--max-iter", cfg.max_iter, "iteration cap");
    reg.bind(cmd, "--tol", cfg.tol, "relative-change stopping tolerance");
    reg.bind(cmd, "--warm-start-iters", cfg.warm_start_iters,
             "iterations before thresholding activates");
    reg.bind(cmd, "--reg-a", cfg.reg_a, "factor scale penalty weight");
    reg.bind(cmd, "--reg-b", cfg.reg_b, "factor scale penalty target");
    reg.bind(cmd, "--seed", cfg.seed, "random seed");
    reg.bind(cmd, "--backtrack", cfg.backtrack,
             "halve the step while it increases the objective (true/false)");
    reg.bind(cmd, "--threads", threads,
             "worker cap; 0 = TUCKERVAR_THREADS or hardware count");
  }

  FitConfig resolved() const {
    FitConfig out = cfg;
    if (threshold == "hard")
      out.threshold = ThresholdMode::hard;
    else if (threshold == "soft")
      out.threshold = ThresholdMode::soft;
    else if (threshold == "none")
      out.threshold = ThresholdMode::none;
    else
      throw ExitError(kUsage, "unknown threshold mode '" + threshold +
                                  "': expected hard, soft, or none");
    return out;
  }

  int resolved_threads() const {
    return threads > 0 ? threads : default_threads();
  }
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ExitError(kUsage, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw ExitError(kUsage, "failed while writing " + path);
}

// Grid files hold one r1 r2 s triple per line; '#' starts a comment and
// commas count as spaces.
std::vector<std::array<int, 3>> read_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExitError(kUsage, "cannot open grid file " + path);
  std::vector<std::array<int, 3>> grid;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream fields(line);
    std::array<int, 3> triple{};
    if (!(fields >> triple[0])) continue;  // blank or comment-only line
    int extra = 0;
    if (!(fields >> triple[1] >> triple[2]) || (fields >> extra))
      throw ExitError(kUsage, path + ":" + std::to_string(number) +
                                  ": expected 'r1 r2 s'");
    grid.push_back(triple);
  }
  if (grid.empty()) throw ExitError(kUsage, path + ": no grid entries");
  return grid;
}

void write_aic_csv(const AicSelection& sel, const std::string& path) {
  std::ostringstream out;
  out << "r1,r2,s,aic,loss,diverged\n";
  for (const AicEntry& e : sel.table)
    out << e.r1 << ',' << e.r2 << ',' << e.s << ','
        << format_double(e.aic) << ',' << format_double(e.loss_value) << ','
        << (e.diverged ? 1 : 0) << '\n';
  write_text_file(path, out.str());
}

void print_matrix(const std::string& label, const Eigen::MatrixXd& m) {
  std::cout << label << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::cout << " ";
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      std::cout << " " << format_double(m(i, j));
    std::cout << "\n";
  }
}

void print_fit_summary(const FitResult& result) {
  std::cout << "selected lags:";
  for (int lag : result.support.lags) std::cout << " " << lag;
  std::cout << "\nranks: r1=" << result.factors.u1.cols()
            << " r2=" << result.factors.u2.cols()
            << "\nconverged: " << (result.converged ? "yes" : "no")
            << " after " << result.iterations_used
            << " iterations, loss " << format_double(result.loss_value)
            << "\n";
  print_matrix("response factor loadings (u1):", result.factors.u1);
  print_matrix("predictor factor loadings (u2):", result.factors.u2);
}

// ---------------------------------------------------------------- fit/select

struct FitArgs {
  FitOptions opt;
  OptionRegistry reg;
  std::string csv_path;
  std::string out_path = "fit.json";
  std::string grid_path;
  std::string table_path;
  double aic_c = 1.0;
  bool standardize_panel = false;
};

int run_fit(FitArgs& args) {
  if (!args.opt.config_path.empty()) args.reg.apply_file(args.opt.config_path);
  FitConfig cfg = args.opt.resolved();
  PanelData panel = read_csv(args.csv_path);
  if (args.standardize_panel) standardize(panel);
  DesignMatrices d = build_design(panel, cfg.t0);

  if (!args.grid_path.empty()) {
    std::vector<std::array<int, 3>> grid = read_grid(args.grid_path);
    AicSelection sel =
        select_aic(d, grid, args.aic_c, cfg, args.opt.resolved_threads());
    std::string table =
        args.table_path.empty() ? args.out_path + ".aic.csv" : args.table_path;
    write_aic_csv(sel, table);
    cfg.r1 = sel.best[0];
    cfg.r2 = sel.best[1];
    cfg.s = sel.best[2];
    std::cout << "aic selected r1=" << cfg.r1 << " r2=" << cfg.r2
              << " s=" << cfg.s << "; table written to " << table << "\n";
  }

  FitResult result = fit_agd(d, cfg);
  write_text_file(args.out_path, to_json(result));
  print_fit_summary(result);
  std::cout << "fit written to " << args.out_path << "\n";
  return 0;
}

struct SelectArgs {
  FitOptions opt;
  OptionRegistry reg;
  std::string csv_path;
  std::string grid_path;
  std::string out_path = "aic.csv";
  double aic_c = 1.0;
  bool standardize_panel = false;
};

int run_select(SelectArgs& args) {
  if (!args.opt.config_path.empty()) args.reg.apply_file(args.opt.config_path);
  FitConfig cfg = args.opt.resolved();
  PanelData panel = read_csv(args.csv_path);
  if (args.standardize_panel) standardize(panel);
  DesignMatrices d = build_design(panel, cfg.t0);
  AicSelection sel = select_aic(d, read_grid(args.grid_path), args.aic_c, cfg,
                                args.opt.resolved_threads());
  write_aic_csv(sel, args.out_path);
  std::cout << "best r1=" << sel.best[0] << " r2=" << sel.best[1]
            << " s=" << sel.best[2] << "\ntable written to " << args.out_path
            << "\n";
  return 0;
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  FitOptions opt;
  OptionRegistry reg;
  std::string experiment;
  std::string out_dir = ".";
  std::string dgp;  // empty picks the experiment's usual process
  int n = 10;
  int r = 2;
  int t_len = 0;  // 0 resolves to the experiment default
  std::string t0_rule = "half";
  std::string t_grid;
  std::string t0_grid;
  std::string s_grid;
  std::string lambda_grid;
  int reps = 0;  // 0 resolves to the experiment default
};

DgpKind resolve_dgp(const std::string& name, DgpKind fallback) {
  if (name.empty()) return fallback;
  if (name == "varma") return DgpKind::varma_411;
  if (name == "seasonal") return DgpKind::seasonal_var_411;
  throw ExitError(kUsage,
                  "unknown dgp '" + name + "': expected varma or seasonal");
}

int run_simulate(SimulateArgs& args) {
  if (!args.opt.config_path.empty()) args.reg.apply_file(args.opt.config_path);
  FitConfig cfg = args.opt.resolved();
  int threads = args.opt.resolved_threads();
  std::string base = args.out_dir + "/" + args.experiment;
  std::string tidy_path = base + ".csv";
  std::string agg_path = base + "_agg.csv";
  std::string json_path = base + ".json";

  bool t0_given = args.reg.was_set("t0");

  if (args.experiment == "error_vs_sparsity") {
    DgpSpec spec{resolve_dgp(args.dgp, DgpKind::seasonal_var_411), args.n,
                 args.r, cfg.seed};
    int t_len = args.t_len > 0 ? args.t_len : 800;
    int t0 = t0_given ? cfg.t0 : 30;
    std::vector<int> s_grid =
        args.s_grid.empty() ? std::vector<int>{3, 4, 5, 6, 7, 8, 9, 10, 11, 12}
                            : parse_int_list(args.s_grid, "--s-grid");
    int reps = args.reps > 0 ? args.reps : 50;
    SparsityStudy study =
        run_error_vs_sparsity(spec, t_len, t0, s_grid, reps, cfg, threads);
    write_csv(study, tidy_path, agg_path);
    write_text_file(json_path, summary_json(study));
  } else if (args.experiment == "rate_scaling") {
    DgpKind kind = resolve_dgp(args.dgp, DgpKind::varma_411);
    std::vector<int> t_grid =
        args.t_grid.empty() ? std::vector<int>{130, 180, 280, 420}
                            : parse_int_list(args.t_grid, "--t-grid");
    std::vector<RateSetting> settings;
    for (int t : t_grid) settings.push_back({args.n, args.r, t});
    T0Rule rule;
    if (t0_given) {
      rule.kind = T0Rule::Kind::fixed;
      rule.fixed = cfg.t0;
    } else if (args.t0_rule == "quarter") {
      rule.alpha = T0Rule::Alpha::quarter;
    } else if (args.t0_rule == "third") {
      rule.alpha = T0Rule::Alpha::third;
    } else if (args.t0_rule == "half") {
      rule.alpha = T0Rule::Alpha::half;
    } else {
      throw ExitError(kUsage, "unknown t0 rule '" + args.t0_rule +
                                  "': expected quarter, third, or half");
    }
    int reps = args.reps > 0 ? args.reps : 30;
    RateStudy study =
        run_rate_scaling(kind, cfg.seed, settings, rule, reps, cfg, threads);
    write_csv(study, tidy_path, agg_path);
    write_text_file(json_path, summary_json(study));
  } else if (args.experiment == "ht_vs_st") {
    DgpSpec spec{resolve_dgp(args.dgp, DgpKind::seasonal_var_411), args.n,
                 args.r, cfg.seed};
    std::vector<int> t_grid = args.t_grid.empty()
                                  ? std::vector<int>{400, 800}
                                  : parse_int_list(args.t_grid, "--t-grid");
    std::vector<int> t0_grid = args.t0_grid.empty()
                                   ? std::vector<int>{12}
                                   : parse_int_list(args.t0_grid, "--t0-grid");
    std::vector<int> s_grid = args.s_grid.empty()
                                  ? std::vector<int>{3, 4, 5, 6, 7, 8}
                                  : parse_int_list(args.s_grid, "--s-grid");
    std::vector<double> lambda_grid =
        args.lambda_grid.empty()
            ? std::vector<double>{0.02, 0.04, 0.08, 0.16, 0.32}
            : parse_double_list(args.lambda_grid, "--lambda-grid");
    int reps = args.reps > 0 ? args.reps : 30;
    StabilityStudy study = run_ht_vs_st(spec, t_grid, t0_grid, s_grid,
                                        lambda_grid, reps, cfg, threads);
    write_csv(study, tidy_path, agg_path);
    write_text_file(json_path, summary_json(study));
  } else {
    throw ExitError(kUsage, "unknown experiment '" + args.experiment +
                                "': valid names are error_vs_sparsity, "
                                "rate_scaling, ht_vs_st");
  }

  std::cout << "wrote " << tidy_path << "\nwrote " << agg_path << "\nwrote "
            << json_path << "\n";
  return 0;
}

// ------------------------------------------------------------------ forecast

struct ForecastArgs {
  FitOptions opt;
  OptionRegistry reg;
  std::string csv_path;
  RollingPlan plan{0, 0, 1};
  bool raw_scale = false;
  std::string out_path = "metrics.json";
  std::string csv_out;
};

int run_forecast(ForecastArgs& args) {
  if (!args.opt.config_path.empty()) args.reg.apply_file(args.opt.config_path);
  FitConfig cfg = args.opt.resolved();
  PanelData panel = read_csv(args.csv_path);
  ForecastMetrics metrics = rolling_evaluate(panel, args.plan, cfg,
                                             args.raw_scale,
                                             args.opt.resolved_threads());
  write_text_file(args.out_path, metrics_json(metrics));
  if (!args.csv_out.empty()) write_csv(metrics, args.csv_out);
  std::cout << "origins evaluated: " << metrics.origins.size()
            << " skipped: " << metrics.skipped_origins.size()
            << "\nmsfe: " << format_double(metrics.msfe)
            << "\nmafe: " << format_double(metrics.mafe)
            << "\nmetrics written to " << args.out_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- convert

struct ConvertArgs {
  std::string in_path;
  std::string to;
  std::string out_path = "converted.json";
  int horizon = 20;
};

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows, int n,
                                 const std::string& what) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != n)
    throw ExitError(kUsage, what + ": expected " + std::to_string(n) +
                                " rows");
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) {
    const json& row = rows[i];
    if (!row.is_array() || static_cast<int>(row.size()) != n)
      throw ExitError(kUsage, what + ": expected " + std::to_string(n) +
                                  " entries per row");
    for (int j = 0; j < n; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

int run_convert(ConvertArgs& args) {
  if (args.to != "ar" && args.to != "ma")
    throw ExitError(kUsage, "--to expects ar or ma, got '" + args.to + "'");
  if (args.horizon < 1) throw ExitError(kUsage, "--horizon must be >= 1");
  std::ifstream in(args.in_path);
  if (!in) throw ExitError(kUsage, "cannot open " + args.in_path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ExitError(kUsage, args.in_path + ": " + e.what());
  }
  if (doc.value("schema", "") != "tuckervar-coeffs-v1")
    throw ExitError(kUsage,
                    args.in_path + ": expected schema tuckervar-coeffs-v1");
  std::string kind = doc.value("kind", "");
  if (kind != "ar" && kind != "ma")
    throw ExitError(kUsage, args.in_path + ": kind must be ar or ma");
  if (kind == args.to)
    throw ExitError(kUsage, args.in_path + " already holds " + kind +
                                " coefficients");
  int n = doc.value("n", 0);
  if (n < 1) throw ExitError(kUsage, args.in_path + ": n must be >= 1");
  if (!doc.contains("matrices") || !doc["matrices"].is_array())
    throw ExitError(kUsage, args.in_path + ": missing matrices array");
  std::vector<Eigen::MatrixXd> coeffs;
  for (std::size_t i = 0; i < doc["matrices"].size(); ++i)
    coeffs.push_back(matrix_from_json(doc["matrices"][i], n,
                                      "matrix " + std::to_string(i + 1)));

  std::vector<Eigen::MatrixXd> converted = args.to == "ar"
                                               ? ma_to_ar(coeffs, args.horizon)
                                               : ar_to_ma(coeffs, args.horizon);
  json out;
  out["schema"] = "tuckervar-coeffs-v1";
  out["kind"] = args.to;
  out["n"] = n;
  out["matrices"] = json::array();
  for (const Eigen::MatrixXd& m : converted)
    out["matrices"].push_back(matrix_to_json(m));
  write_text_file(args.out_path, out.dump(2) + "\n");
  std::cout << "wrote " << converted.size() << " " << args.to
            << " coefficient matrices to " << args.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Supervised factor models for high-dimensional time series:\n"
      "rank-constrained, group-sparse VAR estimation, Monte-Carlo studies,\n"
      "and rolling forecast evaluation."};
  app.footer(
      "Exit codes: 0 success, 2 usage or IO error, 3 numerical failure.\n"
      "Config files hold key=value lines; keys are the long flag names with\n"
      "'-' written as '_' (e.g. max_iter=400). Explicit flags win.");
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "Estimate a low-rank, group-sparse VAR from a CSV panel");
  fit_cmd->add_option("csv", fit_args.csv_path, "panel CSV: header row, one row per time step")
      ->required();
  fit_args.opt.bind(fit_cmd, fit_args.reg);
  fit_cmd->add_option("--out", fit_args.out_path, "fit JSON path");
  fit_cmd->add_option("--select", fit_args.grid_path,
                      "grid file of 'r1 r2 s' rows: pick (r1,r2,s) by AIC "
                      "before fitting");
  fit_cmd->add_option("--aic-table", fit_args.table_path,
                      "AIC table CSV path (default: <out>.aic.csv)");
  fit_args.reg.bind(fit_cmd, "--aic-c", fit_args.aic_c,
                    "AIC penalty constant");
  fit_args.reg.bind(fit_cmd, "--standardize", fit_args.standardize_panel,
                    "standardize each series before fitting (true/false)");

  SelectArgs select_args;
  CLI::App* select_cmd = app.add_subcommand(
      "select", "Run the AIC grid search and write the table");
  select_cmd->add_option("csv", select_args.csv_path, "panel CSV")->required();
  select_args.opt.bind(select_cmd, select_args.reg);
  select_cmd->add_option("--grid", select_args.grid_path,
                         "grid file of 'r1 r2 s' rows")
      ->required();
  select_cmd->add_option("--out", select_args.out_path, "AIC table CSV path");
  select_args.reg.bind(select_cmd, "--aic-c", select_args.aic_c,
                       "AIC penalty constant");
  select_args.reg.bind(select_cmd, "--standardize",
                       select_args.standardize_panel,
                       "standardize each series before fitting (true/false)");

  SimulateArgs sim_args;
  sim_args.opt.cfg.s = 5;
  sim_args.opt.cfg.step = 0.1;
  sim_args.opt.cfg.max_iter = 300;
  sim_args.opt.cfg.tol = 1e-4;
  sim_args.opt.cfg.warm_start_iters = 0;
  CLI::App* sim_cmd = app.add_subcommand(
      "simulate",
      "Run a Monte-Carlo study: error_vs_sparsity, rate_scaling, or ht_vs_st");
  sim_cmd->add_option("--experiment", sim_args.experiment,
                      "error_vs_sparsity | rate_scaling | ht_vs_st")
      ->required();
  sim_args.opt.bind(sim_cmd, sim_args.reg);
  sim_cmd->add_option("--out", sim_args.out_dir,
                      "output directory for CSV/JSON files");
  sim_args.reg.bind(sim_cmd, "--dgp", sim_args.dgp,
                    "varma | seasonal (default depends on the experiment)");
  sim_args.reg.bind(sim_cmd, "--n", sim_args.n, "series dimension");
  sim_args.reg.bind(sim_cmd, "--r", sim_args.r, "factor rank of the process");
  sim_args.reg.bind(sim_cmd, "--t", sim_args.t_len, "sample length");
  sim_args.reg.bind(sim_cmd, "--t0-rule", sim_args.t0_rule,
                    "rate-study lag cutoff rule: quarter | third | half");
  sim_args.reg.bind(sim_cmd, "--t-grid", sim_args.t_grid,
                    "comma list of sample lengths");
  sim_args.reg.bind(sim_cmd, "--t0-grid", sim_args.t0_grid,
                    "comma list of running orders (ht_vs_st)");
  sim_args.reg.bind(sim_cmd, "--s-grid", sim_args.s_grid,
                    "comma list of sparsity levels");
  sim_args.reg.bind(sim_cmd, "--lambda-grid", sim_args.lambda_grid,
                    "comma list of soft-threshold levels");
  sim_args.reg.bind(sim_cmd, "--reps", sim_args.reps, "replications");

  ForecastArgs fc_args;
  CLI::App* fc_cmd = app.add_subcommand(
      "forecast", "Rolling one-step-ahead evaluation of a CSV panel");
  fc_cmd->add_option("csv", fc_args.csv_path, "panel CSV")->required();
  fc_args.opt.bind(fc_cmd, fc_args.reg);
  fc_args.reg.bind(fc_cmd, "--first", fc_args.plan.first_origin,
                   "first forecast origin (1-based observation index)");
  fc_args.reg.bind(fc_cmd, "--last", fc_args.plan.last_origin,
                   "last forecast origin");
  fc_args.reg.bind(fc_cmd, "--refit-every", fc_args.plan.refit_every,
                   "refit cadence in origins; 0 fits once at the first origin");
  fc_cmd->add_flag("--raw-scale", fc_args.raw_scale,
                   "report errors on the original data scale");
  fc_cmd->add_option("--out", fc_args.out_path, "metrics JSON path");
  fc_cmd->add_option("--csv-out", fc_args.csv_out,
                     "optional one-row metrics CSV path");

  ConvertArgs cv_args;
  CLI::App* cv_cmd = app.add_subcommand(
      "convert", "Convert MA<->AR coefficient files (tuckervar-coeffs-v1)");
  cv_cmd->add_option("input", cv_args.in_path, "coefficient JSON path")
      ->required();
  cv_cmd->add_option("--to", cv_args.to, "target representation: ar | ma")
      ->required();
  cv_cmd->add_option("--out", cv_args.out_path, "output JSON path");
  cv_cmd->add_option("--horizon", cv_args.horizon,
                     "number of output coefficient matrices");

  // The simulate --t0 flag doubles as the fixed rate-study cutoff, so it maps
  // onto the shared fit option that the registry already bound.
  sim_cmd->get_option("--t0")->description(
      "running order; for rate_scaling a positive value fixes the cutoff");

  try {
    app.parse(argc, argv);
    if (*fit_cmd) return run_fit(fit_args);
    if (*select_cmd) return run_select(select_args);
    if (*sim_cmd) return run_simulate(sim_args);
    if (*fc_cmd) return run_forecast(fc_args);
    if (*cv_cmd) return run_convert(cv_args);
    return kUsage;
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const ExitError& e) {
    std::cerr << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
}
