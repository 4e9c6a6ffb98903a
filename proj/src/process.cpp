#include "tuckervar/process.hpp"

#include "tuckervar/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace tuckervar {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_square(const std::vector<Eigen::MatrixXd>& coeffs, int n,
                  const char* what) {
  for (std::size_t j = 0; j < coeffs.size(); ++j)
    require(coeffs[j].rows() == n && coeffs[j].cols() == n,
            std::string(what) + " coefficient " + std::to_string(j + 1) +
                " is not " + std::to_string(n) + "x" + std::to_string(n));
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

void validate(const GlpModel& model) {
  require(model.n > 0, "GlpModel: n must be positive");
  check_square(model.ar, model.n, "GlpModel: AR");
  check_square(model.ma, model.n, "GlpModel: MA");
  require(model.noise_cov.rows() == model.n &&
              model.noise_cov.cols() == model.n,
          "GlpModel: noise_cov must be n x n");
  require((model.noise_cov - model.noise_cov.transpose()).norm() <
              1e-10 * (1.0 + model.noise_cov.norm()),
          "GlpModel: noise_cov must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(model.noise_cov);
  require(llt.info() == Eigen::Success,
          "GlpModel: noise_cov must be positive definite");
}

std::vector<Eigen::MatrixXd> ma_to_ar(const std::vector<Eigen::MatrixXd>& psi,
                                      int horizon) {
  require(horizon >= 0, "ma_to_ar: horizon must be nonnegative");
  require(!psi.empty(), "ma_to_ar: empty coefficient list");
  const int n = static_cast<int>(psi[0].rows());
  check_square(psi, n, "ma_to_ar:");

  std::vector<Eigen::MatrixXd> a;
  a.reserve(horizon);
  for (int j = 1; j <= horizon; ++j) {
    Eigen::MatrixXd aj = j <= static_cast<int>(psi.size())
                             ? psi[j - 1]
                             : Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < j; ++k)
      if (j - k <= static_cast<int>(psi.size())) aj -= psi[j - k - 1] * a[k - 1];
    a.push_back(std::move(aj));
  }
  return a;
}

std::vector<Eigen::MatrixXd> ar_to_ma(const std::vector<Eigen::MatrixXd>& ar,
                                      int horizon) {
  require(horizon >= 0, "ar_to_ma: horizon must be nonnegative");
  require(!ar.empty(), "ar_to_ma: empty coefficient list");
  const int n = static_cast<int>(ar[0].rows());
  check_square(ar, n, "ar_to_ma:");

  std::vector<Eigen::MatrixXd> psi;
  psi.reserve(horizon);
  for (int j = 1; j <= horizon; ++j) {
    Eigen::MatrixXd pj = j <= static_cast<int>(ar.size())
                             ? ar[j - 1]
                             : Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < j; ++k)
      if (k <= static_cast<int>(ar.size())) pj += ar[k - 1] * psi[j - k - 1];
    psi.push_back(std::move(pj));
  }
  return psi;
}

std::vector<Eigen::MatrixXd> implied_var_coefficients(const GlpModel& model,
                                                      int horizon) {
  validate(model);
  require(horizon >= 0, "implied_var_coefficients: horizon must be nonnegative");
  const int n = model.n;

  std::vector<Eigen::MatrixXd> a;
  a.reserve(horizon);
  for (int j = 1; j <= horizon; ++j) {
    Eigen::MatrixXd aj = Eigen::MatrixXd::Zero(n, n);
    if (j <= static_cast<int>(model.ar.size())) aj += model.ar[j - 1];
    if (j <= static_cast<int>(model.ma.size())) aj += model.ma[j - 1];
    for (int k = 1; k < j; ++k)
      if (j - k <= static_cast<int>(model.ma.size()))
        aj -= model.ma[j - k - 1] * a[k - 1];
    a.push_back(std::move(aj));
  }
  return a;
}

StationarityReport check_stationarity(const GlpModel& model) {
  validate(model);
  if (model.ar.empty()) return {true, 0.0};

  const int n = model.n;
  const int p = static_cast<int>(model.ar.size());
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n * p, n * p);
  for (int j = 0; j < p; ++j)
    companion.block(0, j * n, n, n) = model.ar[j];
  if (p > 1)
    companion.block(n, 0, n * (p - 1), n * (p - 1))
        .setIdentity();

  Eigen::EigenSolver<Eigen::MatrixXd> eig(companion, false);
  double radius = eig.eigenvalues().array().abs().maxCoeff();
  return {radius < 1.0 - 1e-8, radius};
}

PanelData simulate(const GlpModel& model, int t_len, int burn_in,
                   std::uint64_t seed) {
  validate(model);
  require(t_len > 0, "simulate: t_len must be positive");
  require(burn_in >= 0, "simulate: burn_in must be nonnegative");
  StationarityReport rep = check_stationarity(model);
  require(rep.stationary, "simulate: model is not stationary (spectral radius " +
                              format_double(rep.spectral_radius) + ")");

  const int n = model.n;
  const int p = static_cast<int>(model.ar.size());
  const int q = static_cast<int>(model.ma.size());
  Eigen::LLT<Eigen::MatrixXd> llt(model.noise_cov);
  Eigen::MatrixXd chol = llt.matrixL();

  Rng rng(seed);
  const int lead = std::max(p, q);
  const int total = lead + burn_in + t_len;
  Eigen::MatrixXd ys = Eigen::MatrixXd::Zero(n, total);
  Eigen::MatrixXd eps = Eigen::MatrixXd::Zero(n, total);

  for (int t = lead; t < total; ++t) {
    eps.col(t) = chol * rng.normal_vector(n);
    Eigen::VectorXd y = eps.col(t);
    for (int j = 1; j <= p; ++j) y += model.ar[j - 1] * ys.col(t - j);
    for (int j = 1; j <= q; ++j) y += model.ma[j - 1] * eps.col(t - j);
    ys.col(t) = y;
  }

  PanelData panel;
  panel.n = n;
  panel.t_len = t_len;
  panel.values = ys.rightCols(t_len);
  panel.names.reserve(n);
  for (int i = 0; i < n; ++i) panel.names.push_back("y" + std::to_string(i + 1));
  panel.means = Eigen::VectorXd::Zero(n);
  panel.scales = Eigen::VectorXd::Ones(n);
  return panel;
}

double truncation_error(const GlpModel& model, int t0, int horizon) {
  validate(model);
  require(t0 >= 0, "truncation_error: t0 must be nonnegative");

  // A pure VAR has exactly zero coefficients beyond its order.
  if (model.ma.empty()) {
    double total = 0.0;
    for (int j = t0 + 1; j <= static_cast<int>(model.ar.size()); ++j)
      total += model.ar[j - 1].squaredNorm();
    return total;
  }

  // First pass to estimate the per-lag decay, then extend far enough that the
  // remainder past the horizon is negligible relative to the leading term.
  int working = std::max(horizon, t0 + 240);
  std::vector<Eigen::MatrixXd> coeffs = implied_var_coefficients(model, working);

  auto decay_ratio = [&](int upto) {
    const int window = 20;
    int hi = upto - 1, lo = std::max(0, hi - window);
    double nhi = coeffs[hi].norm(), nlo = coeffs[lo].norm();
    if (hi <= lo || nhi <= 0.0 || nlo <= 0.0) return 0.0;
    return std::exp((std::log(nhi) - std::log(nlo)) / (hi - lo));
  };

  if (horizon <= 0) {
    double rho = decay_ratio(working);
    if (rho > 0.0 && rho < 1.0) {
      horizon = t0 + static_cast<int>(std::ceil(60.0 / -std::log(rho)));
      horizon = std::min(horizon, t0 + 4000);
    } else {
      horizon = working;
    }
    if (horizon > working) {
      working = horizon;
      coeffs = implied_var_coefficients(model, working);
    }
  }

  double total = 0.0;
  for (int j = t0 + 1; j <= horizon; ++j) total += coeffs[j - 1].squaredNorm();

  // Geometric tail bound past the horizon.
  double rho = decay_ratio(horizon);
  double last = coeffs[horizon - 1].squaredNorm();
  if (rho > 0.0 && rho < 0.9995 && last > 0.0) {
    double q = rho * rho;
    total += last * q / (1.0 - q);
  }
  return total;
}

void standardize(PanelData& panel) {
  if (panel.standardized) return;
  require(panel.t_len >= 2, "standardize: need at least two observations");
  panel.means = panel.values.rowwise().mean();
  Eigen::MatrixXd centered = panel.values.colwise() - panel.means;
  panel.scales =
      (centered.rowwise().squaredNorm() / (panel.t_len - 1)).cwiseSqrt();
  for (int i = 0; i < panel.n; ++i) {
    std::string label = i < static_cast<int>(panel.names.size())
                            ? panel.names[i]
                            : std::to_string(i + 1);
    require(panel.scales(i) > 0.0,
            "standardize: series " + label + " has zero sample variance");
  }
  panel.values = panel.scales.cwiseInverse().asDiagonal() * centered;
  panel.standardized = true;
}

void destandardize(PanelData& panel) {
  if (!panel.standardized) return;
  panel.values = (panel.scales.asDiagonal() * panel.values).colwise() +
                 panel.means;
  panel.means.setZero();
  panel.scales.setOnes();
  panel.standardized = false;
}

namespace {

// One RFC 4180 record; handles quoted fields with embedded commas, quotes,
// and newlines. Returns false on end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false, any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      break;
    } else {
      field.push_back(static_cast<char>(c));
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

double parse_double(const std::string& s, int row, int col) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v))
    throw std::runtime_error("read_csv: row " + std::to_string(row) +
                             ", column " + std::to_string(col) +
                             ": cannot parse value '" + s + "'");
  return v;
}

}  // namespace

PanelData read_csv(std::istream& in) {
  std::vector<std::string> fields;
  if (!read_record(in, fields) || fields.empty())
    throw std::runtime_error("read_csv: missing header row");

  PanelData panel;
  panel.names = fields;
  panel.n = static_cast<int>(fields.size());

  std::vector<std::vector<double>> rows;
  int row_number = 1;
  while (read_record(in, fields)) {
    ++row_number;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (static_cast<int>(fields.size()) != panel.n)
      throw std::runtime_error(
          "read_csv: row " + std::to_string(row_number) + " has " +
          std::to_string(fields.size()) + " fields, expected " +
          std::to_string(panel.n));
    std::vector<double> row(panel.n);
    for (int i = 0; i < panel.n; ++i)
      row[i] = parse_double(fields[i], row_number, i + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_csv: no data rows");

  panel.t_len = static_cast<int>(rows.size());
  panel.values.resize(panel.n, panel.t_len);
  for (int t = 0; t < panel.t_len; ++t)
    for (int i = 0; i < panel.n; ++i) panel.values(i, t) = rows[t][i];
  panel.means = Eigen::VectorXd::Zero(panel.n);
  panel.scales = Eigen::VectorXd::Ones(panel.n);
  return panel;
}

PanelData read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  return read_csv(in);
}

void write_csv(const PanelData& panel, std::ostream& out) {
  for (int i = 0; i < panel.n; ++i) {
    if (i) out << ',';
    out << quote_csv(i < static_cast<int>(panel.names.size())
                         ? panel.names[i]
                         : "y" + std::to_string(i + 1));
  }
  out << '\n';
  for (int t = 0; t < panel.t_len; ++t) {
    for (int i = 0; i < panel.n; ++i) {
      if (i) out << ',';
      out << format_double(panel.values(i, t));
    }
    out << '\n';
  }
}

void write_csv(const PanelData& panel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(panel, out);
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

}  // namespace tuckervar
