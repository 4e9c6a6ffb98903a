#pragma once

// General linear process models
//   y_t = sum_{j=1}^{P} Phi_j y_{t-j} + eps_t + sum_{j=1}^{Q} Psi_j eps_{t-j}
// with Gaussian noise, plus the panel container used for observed series.
//
// The AR(inf) and MA(inf) representations convert through the triangular
// recursions
//   A_j   = Psi_j - sum_{k=1}^{j-1} Psi_{j-k} A_k      (MA -> AR)
//   Psi_j = A_j   + sum_{k=1}^{j-1} A_k Psi_{j-k}      (AR -> MA)
// and a full ARMA model has implied VAR(inf) coefficients
//   A_j = Phi_j + Psi_j - sum_{k=1}^{j-1} Psi_{j-k} A_k.
// Coefficients beyond the supplied lists are taken as zero.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tuckervar {

struct GlpModel {
  int n = 0;
  std::vector<Eigen::MatrixXd> ar;  // Phi_1 .. Phi_P
  std::vector<Eigen::MatrixXd> ma;  // Psi_1 .. Psi_Q, entering with + sign
  Eigen::MatrixXd noise_cov;        // N x N, SPD
};

struct PanelData {
  int n = 0;
  int t_len = 0;
  Eigen::MatrixXd values;            // N x T, column t is y_t
  std::vector<std::string> names;    // series names, y1..yN by default
  Eigen::VectorXd means;             // standardization offsets (0 until standardized)
  Eigen::VectorXd scales;            // standardization scales (1 until standardized)
  bool standardized = false;
};

struct StationarityReport {
  bool stationary = false;
  double spectral_radius = 0.0;
};

void validate(const GlpModel& model);

// MA(inf) coefficients -> implied AR(inf) coefficients A_1..A_horizon.
std::vector<Eigen::MatrixXd> ma_to_ar(const std::vector<Eigen::MatrixXd>& psi,
                                      int horizon);

// AR coefficients -> implied MA(inf) coefficients Psi_1..Psi_horizon.
std::vector<Eigen::MatrixXd> ar_to_ma(const std::vector<Eigen::MatrixXd>& ar,
                                      int horizon);

// VAR(inf) coefficients implied by a full ARMA model.
std::vector<Eigen::MatrixXd> implied_var_coefficients(const GlpModel& model,
                                                      int horizon);

// Spectral radius of the AR companion matrix; an empty AR part is stationary.
StationarityReport check_stationarity(const GlpModel& model);

// Simulates t_len observations after discarding burn_in, starting from zeros.
// A fixed seed gives a byte-identical panel on every call.
PanelData simulate(const GlpModel& model, int t_len, int burn_in,
                   std::uint64_t seed);

// Sum of squared Frobenius norms of the implied VAR coefficients beyond lag
// t0, plus a geometric tail bound past the horizon when a decay rate is
// detectable. horizon <= 0 selects one from the fitted per-lag decay.
double truncation_error(const GlpModel& model, int t0, int horizon = 0);

// Per-series location/scale normalization (sample std, denominator T-1).
// Idempotent; destandardize restores the original values.
void standardize(PanelData& panel);
void destandardize(PanelData& panel);

// CSV layout: header row of series names, then one row per time step
// (RFC 4180 quoting). Numbers use shortest round-trip formatting.
PanelData read_csv(std::istream& in);
PanelData read_csv(const std::string& path);
void write_csv(const PanelData& panel, std::ostream& out);
void write_csv(const PanelData& panel, const std::string& path);

}  // namespace tuckervar
