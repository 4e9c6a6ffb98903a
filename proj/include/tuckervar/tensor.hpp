#pragma once

// Order-3 tensors and the Tucker machinery used by the estimator.
//
// Storage is slice-major: entry (i, j, k) lives at data[k*d1*d2 + j*d1 + i],
// so frontal slice k is a column-major d1 x d2 matrix and the mode-1
// unfolding (B_1, ..., B_{d3}), block-concatenated along columns, is a
// zero-copy view of the whole buffer as a d1 x (d2*d3) column-major matrix.
//
// Unfolding conventions (all indices 0-based internally):
//   mode 1: d1 x (d2*d3), entry (i, k*d2 + j) = t(i,j,k)
//   mode 2: d2 x (d1*d3), entry (j, k*d1 + i) = t(i,j,k)   (slices transposed)
//   mode 3: d3 x (d1*d2), entry (k, j*d1 + i) = t(i,j,k)   (row k = vec of slice k)
//
// Lag indices reported in GroupSupport are 1-based: lag j refers to slice j-1.

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace tuckervar {

class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int d1, int d2, int d3);

  int d1() const { return d1_; }
  int d2() const { return d2_; }
  int d3() const { return d3_; }
  int size() const { return static_cast<int>(data_.size()); }

  double operator()(int i, int j, int k) const {
    return data_[static_cast<std::ptrdiff_t>(k) * d1_ * d2_ + j * d1_ + i];
  }
  double& operator()(int i, int j, int k) {
    return data_[static_cast<std::ptrdiff_t>(k) * d1_ * d2_ + j * d1_ + i];
  }

  Eigen::Map<const Eigen::MatrixXd> slice(int k) const;
  Eigen::Map<Eigen::MatrixXd> slice(int k);

  // The whole buffer viewed as the mode-1 unfolding.
  Eigen::Map<const Eigen::MatrixXd> mode1() const;
  Eigen::Map<Eigen::MatrixXd> mode1();

  double norm() const { return data_.norm(); }
  double squared_norm() const { return data_.squaredNorm(); }
  bool all_finite() const { return data_.allFinite(); }
  void set_zero() { data_.setZero(); }

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }

  bool same_dims(const Tensor3& o) const {
    return d1_ == o.d1_ && d2_ == o.d2_ && d3_ == o.d3_;
  }

  Tensor3& operator+=(const Tensor3& o);
  Tensor3& operator-=(const Tensor3& o);
  Tensor3& operator*=(double c) {
    data_ *= c;
    return *this;
  }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }

 private:
  int d1_ = 0, d2_ = 0, d3_ = 0;
  Eigen::VectorXd data_;
};

struct TuckerFactors {
  Eigen::MatrixXd u1;  // N x r1
  Eigen::MatrixXd u2;  // N x r2
  Tensor3 core;        // r1 x r2 x T0
};

struct GroupSupport {
  int t0 = 0;              // total number of lag slices
  std::vector<int> lags;   // sorted active lags, 1-based
};

Eigen::MatrixXd matricize(const Tensor3& t, int mode);

// Inverse of matricize: folds an unfolding back into a (d1, d2, d3) tensor.
Tensor3 fold(const Eigen::MatrixXd& m, int d1, int d2, int d3, int mode);

// Mode product along mode 1 or 2: matricize(result, mode) = m * matricize(t, mode).
Tensor3 mode_product(const Tensor3& t, const Eigen::MatrixXd& m, int mode);

// core x1 u1 x2 u2; slice j of the result is u1 * core_j * u2'.
Tensor3 reconstruct(const TuckerFactors& f);

// Frobenius norm of each frontal slice.
Eigen::VectorXd group_norms(const Tensor3& t);

// Keeps the s frontal slices with the largest Frobenius norm (ties keep the
// smaller lag), zeroes the rest. Kept slices are bit-identical to the input.
std::pair<Tensor3, GroupSupport> hard_threshold(const Tensor3& t, int s);

// Scales each slice by (1 - lambda/norm)+, the groupwise shrinkage operator.
Tensor3 soft_threshold(const Tensor3& t, double lambda);

}  // namespace tuckervar
