// Monte-Carlo studies for the estimator on two synthetic processes:
//   varma_411:        Phi = -0.5 B J B', Theta = 0.7 B J B', so the implied
//                     VAR(inf) slices are A_j = -1.2 * 0.7^{j-1} B J B'
//   seasonal_var_411: VAR(9) with Phi_j = c_j 0.7^j B J B' at lags
//                     {1, 4, 5, 8, 9}, (c_1,c_4,c_5,c_8,c_9) = (1,2,-2,-1,1)
// where B is Haar-orthogonal and J = diag(ones(r), zeros(n-r)), so every
// coefficient matrix shares the rank-r column and row space spanned by the
// first r columns of B. Each replication draws a fresh B.
//
// Replications run in parallel over derived, independent RNG streams; cell
// slots and fixed-order reductions make every result thread-count invariant.
// Diverged fits are excluded from averages and reported in the counts.
#pragma once

#include "tuckervar/estimator.hpp"
#include "tuckervar/process.hpp"
#include "tuckervar/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tuckervar {

enum class DgpKind { varma_411, seasonal_var_411 };

struct DgpSpec {
  DgpKind kind = DgpKind::varma_411;
  int n = 10;             // series dimension
  int r = 2;              // rank of J, r <= n
  std::uint64_t seed = 0;
};

GlpModel make_dgp(const DgpSpec& spec);

// Split of the squared error of a fitted tensor against the generating
// process, with S the fitted support:
//   estimation    = |fitted - truth restricted to S|_F^2
//   approximation = |truth off S, up to lag t0|_F^2
//   truncation    = sum_{j > t0} |A_j*|_F^2
//   parameter     = estimation + approximation (exact identity)
struct ErrorDecomposition {
  double estimation = 0.0;
  double approximation = 0.0;
  double truncation = 0.0;
  double parameter = 0.0;
};

ErrorDecomposition decompose_error(const Tensor3& fitted,
                                   const GroupSupport& support,
                                   const GlpModel& truth);

// Experiment configs override base_cfg's t0, r1, r2, s, lambda, threshold
// mode, and seed; step, iteration, tolerance, and regularization knobs are
// honored. Simulated panels use a 300-step burn-in.

struct SparsityCell {
  int s = 0;
  int rep = 0;
  bool diverged = false;
  ErrorDecomposition err;
};

struct SparsityRow {
  int s = 0;
  ErrorDecomposition mean;  // over completed replications
  int reps_done = 0;
  int reps_diverged = 0;
};

struct SparsityStudy {
  std::vector<SparsityCell> cells;  // s-major, then replication
  std::vector<SparsityRow> rows;
};

// One panel per replication; every s in s_grid is fitted on that panel with
// hard thresholding and ranks pinned to spec.r.
SparsityStudy run_error_vs_sparsity(const DgpSpec& spec, int t_len, int t0,
                                    const std::vector<int>& s_grid, int reps,
                                    const FitConfig& base_cfg, int threads = 1);

// Lag cutoff rule: floor(c * T^alpha) with c = 1.5 for alpha = 1/2 and c = 3
// for alpha in {1/4, 1/3}, or a fixed cutoff.
struct T0Rule {
  enum class Kind { power, fixed };
  enum class Alpha { quarter, third, half };
  Kind kind = Kind::power;
  Alpha alpha = Alpha::half;
  int fixed = 0;
};

int resolve_t0(const T0Rule& rule, int t_len);

struct RateSetting {
  int n = 0;
  int r = 0;
  int t_len = 0;
};

struct RateCell {
  int setting = 0;  // index into the settings grid
  int rep = 0;
  bool diverged = false;
  double error = 0.0;  // parameter error of the replication
};

struct RateRow {
  RateSetting setting;
  int t0 = 0;
  double beta = 0.0;  // s (r n + log t0) / (t_len - t0)
  double mean_error = 0.0;
  int reps_done = 0;
  int reps_diverged = 0;
};

struct RateStudy {
  std::vector<RateCell> cells;  // setting-major, then replication
  std::vector<RateRow> rows;
};

// Mean parameter error per (n, r, t_len) setting against the predicted rate
// beta, with s taken from base_cfg and ranks pinned to each setting's r.
RateStudy run_rate_scaling(DgpKind kind, std::uint64_t seed,
                           const std::vector<RateSetting>& settings,
                           const T0Rule& rule, int reps,
                           const FitConfig& base_cfg, int threads = 1);

struct StabilityCell {
  int setting = 0;
  int rep = 0;
  std::string method;  // "ht" or "st"
  double param = 0.0;  // s for ht, lambda for st
  bool diverged = false;
  double error = 0.0;
  int sparsity = 0;  // slices kept by the fit
};

struct StabilityRow {
  int t_len = 0;
  int t0 = 0;
  int best_s = 0;  // error-minimizing over the grid means
  double best_s_error = 0.0;
  double best_lambda = 0.0;
  double best_lambda_error = 0.0;
  double ht_size_iqr = 0.0;  // support-size spread at best_s
  double st_size_iqr = 0.0;  // fitted-sparsity spread at best_lambda
  int reps_done = 0;
  int reps_diverged = 0;  // diverged fits across the setting's cells
};

struct StabilityStudy {
  std::vector<StabilityCell> cells;  // setting-major, rep, then s grid + lambda grid
  std::vector<StabilityRow> rows;
};

// Hard thresholding over s_grid versus soft thresholding over lambda_grid on
// common panels. Exactly one of t_grid/t0_grid may hold more than one value;
// the other supplies the fixed dimension. Grid ties break toward the earliest
// entry; spreads are interquartile ranges with interpolated quartiles.
StabilityStudy run_ht_vs_st(const DgpSpec& spec, const std::vector<int>& t_grid,
                            const std::vector<int>& t0_grid,
                            const std::vector<int>& s_grid,
                            const std::vector<double>& lambda_grid, int reps,
                            const FitConfig& base_cfg, int threads = 1);

// Tidy CSV has one row per cell; the aggregate CSV has one row per study row.
void write_csv(const SparsityStudy& study, std::ostream& tidy,
               std::ostream& aggregate);
void write_csv(const SparsityStudy& study, const std::string& tidy_path,
               const std::string& aggregate_path);
void write_csv(const RateStudy& study, std::ostream& tidy,
               std::ostream& aggregate);
void write_csv(const RateStudy& study, const std::string& tidy_path,
               const std::string& aggregate_path);
void write_csv(const StabilityStudy& study, std::ostream& tidy,
               std::ostream& aggregate);
void write_csv(const StabilityStudy& study, const std::string& tidy_path,
               const std::string& aggregate_path);

// Compact JSON of the aggregate rows, tagged with the experiment name.
std::string summary_json(const SparsityStudy& study);
std::string summary_json(const RateStudy& study);
std::string summary_json(const StabilityStudy& study);

}  // namespace tuckervar
