#pragma once

// Rank-constrained, group-sparse estimation of VAR coefficient tensors.
//
// For a panel y_1..y_T and running order T0 the design is
//   Y = (y_T, ..., y_{T0+1})                         N x T1,  T1 = T - T0
//   X = (x_T, ..., x_{T0+1}),  x_t = (y_{t-1}', ..., y_{t-T0}')'
// and the loss is L(A) = (2 T1)^-1 ||Y - A_(1) X||_F^2 over N x N x T0
// coefficient tensors factored as A = core x1 u1 x2 u2.
//
// fit_agd iterates joint gradient descent on (u1, u2, core), every block
// stepping from the same current iterate, then groupwise-thresholds the
// reconstructed tensor across lag slices (zero slices of the reconstruction
// correspond to zero core slices, so thresholding refolds exactly). Factor
// scale is pinned by the penalty
//   (a/4) (||u1'u1 - b^2 I||_F^2 + ||u2'u2 - b^2 I||_F^2),
// whose minimizers satisfy u_i'u_i = b^2 I.

#include "tuckervar/process.hpp"
#include "tuckervar/tensor.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tuckervar {

enum class ThresholdMode { hard, soft, none };

struct FitConfig {
  int t0 = 1;
  int r1 = 1;
  int r2 = 1;
  int s = 1;                  // frontal-slice budget for hard thresholding
  double lambda = 0.0;        // groupwise soft-threshold level
  ThresholdMode threshold = ThresholdMode::hard;
  double step = 0.0;          // <= 0 resolves to 1e-2 / lambda_max(X X' / T1)
  int max_iter = 500;
  double tol = 1e-6;          // relative Frobenius change of the iterate
  int warm_start_iters = 10;  // iterations before thresholding activates
  double reg_a = 1.0;
  double reg_b = 1.0;
  std::uint64_t seed = 0;     // factor initialization seed
  bool backtrack = true;      // halve the step while a gradient step increases
                              // the penalized objective (thresholding moves
                              // never trigger halving)
};

struct DesignMatrices {
  Eigen::MatrixXd y;  // N x T1
  Eigen::MatrixXd x;  // (N*T0) x T1, column ordering matches y
  int t0 = 0;
  int t1 = 0;
};

struct FitResult {
  TuckerFactors factors;  // post-threshold factors
  Tensor3 coeffs;         // reconstructed, thresholded coefficient tensor
  GroupSupport support;
  std::vector<double> objective_trace;  // penalized objective per iteration
  std::vector<double> grad_norm_trace;
  bool converged = false;
  int iterations_used = 0;
  double step_used = 0.0;
  double loss_value = 0.0;  // unpenalized loss at coeffs
};

struct FactorGradients {
  Eigen::MatrixXd u1;
  Eigen::MatrixXd u2;
  Tensor3 core;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int iteration, const std::string& msg)
      : std::runtime_error(msg), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

DesignMatrices build_design(const PanelData& panel, int t0);

double loss(const Tensor3& coeffs, const DesignMatrices& d);

// Gradient of the loss with respect to the full tensor, as a tensor.
Tensor3 grad_full(const Tensor3& coeffs, const DesignMatrices& d);

// Chain-rule gradients of the penalized objective for the three blocks:
//   gU1 = [grad]_(1) (I ⊗ u2) core_(1)' + a u1 (u1'u1 - b^2 I)
//   gU2 = [grad]_(2) (I ⊗ u1) core_(2)' + a u2 (u2'u2 - b^2 I)
//   gG  = grad x1 u1' x2 u2'
FactorGradients grad_factors(const TuckerFactors& f, const DesignMatrices& d,
                             double reg_a, double reg_b);

// core = 0; u_i = b * (first r_i columns of a Haar-orthogonal matrix drawn
// from a stream derived from seed), so u_i'u_i = b^2 I exactly.
TuckerFactors init_factors(int n, int r1, int r2, int t0, double reg_b,
                           std::uint64_t seed);

// Step size used when FitConfig::step <= 0: 1e-2 / lambda_max(x x' / t1),
// with the top eigenvalue estimated by power iteration.
double default_step(const DesignMatrices& d);

// Called after each completed iteration with the current iterate.
using FitObserver = std::function<void(int iteration, const Tensor3& coeffs)>;

FitResult fit_agd(const DesignMatrices& d, const FitConfig& cfg);
FitResult fit_agd(const DesignMatrices& d, const FitConfig& cfg,
                  const std::optional<TuckerFactors>& init,
                  const FitObserver& observer);

// Rank-constrained group Lasso reference: fit_agd with the soft-threshold
// step. The result is an approximate stationary point of the groupwise
// penalized problem, not a certified global optimum.
Tensor3 fit_group_lasso_reference(const DesignMatrices& d, double lambda,
                                  int r1, int r2, FitConfig base = {});

struct AicEntry {
  int r1 = 0, r2 = 0, s = 0;
  double aic = 0.0;
  double loss_value = 0.0;
  bool diverged = false;
};

struct AicSelection {
  std::array<int, 3> best{};    // (r1, r2, s)
  std::vector<AicEntry> table;  // grid order
};

// AIC(r1,r2,s) = log{(2 T1)^-1 ||Y - A_(1)X||_F^2} + c [(r1+r2) N + log T0] s / T1
// over fitted tensors; ties break toward smaller s, then smaller r1+r2.
// Fits may fan out over threads; the reduction is by grid order.
AicSelection select_aic(const DesignMatrices& d,
                        const std::vector<std::array<int, 3>>& grid, double c,
                        const FitConfig& base_cfg, int threads = 1);

// JSON document with schema field "tuckervar-fit-v1"; factor matrices and
// core serialize as nested row-major arrays.
std::string to_json(const FitResult& result);
FitResult fit_result_from_json(const std::string& text);

}  // namespace tuckervar
