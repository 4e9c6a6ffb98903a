#include "tuckervar/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tuckervar {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tensor3::Tensor3(int d1, int d2, int d3) : d1_(d1), d2_(d2), d3_(d3) {
  require(d1 > 0 && d2 > 0 && d3 > 0, "Tensor3: extents must be positive");
  data_ = Eigen::VectorXd::Zero(static_cast<std::ptrdiff_t>(d1) * d2 * d3);
}

Eigen::Map<const Eigen::MatrixXd> Tensor3::slice(int k) const {
  require(k >= 0 && k < d3_, "Tensor3::slice: index out of range");
  return {data_.data() + static_cast<std::ptrdiff_t>(k) * d1_ * d2_, d1_, d2_};
}

Eigen::Map<Eigen::MatrixXd> Tensor3::slice(int k) {
  require(k >= 0 && k < d3_, "Tensor3::slice: index out of range");
  return {data_.data() + static_cast<std::ptrdiff_t>(k) * d1_ * d2_, d1_, d2_};
}

Eigen::Map<const Eigen::MatrixXd> Tensor3::mode1() const {
  return {data_.data(), d1_, static_cast<Eigen::Index>(d2_) * d3_};
}

Eigen::Map<Eigen::MatrixXd> Tensor3::mode1() {
  return {data_.data(), d1_, static_cast<Eigen::Index>(d2_) * d3_};
}

Tensor3& Tensor3::operator+=(const Tensor3& o) {
  require(same_dims(o), "Tensor3: dimension mismatch in +=");
  data_ += o.data_;
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& o) {
  require(same_dims(o), "Tensor3: dimension mismatch in -=");
  data_ -= o.data_;
  return *this;
}

Eigen::MatrixXd matricize(const Tensor3& t, int mode) {
  switch (mode) {
    case 1:
      return t.mode1();
    case 2: {
      Eigen::MatrixXd m(t.d2(), static_cast<Eigen::Index>(t.d1()) * t.d3());
      for (int k = 0; k < t.d3(); ++k)
        m.middleCols(static_cast<Eigen::Index>(k) * t.d1(), t.d1()) =
            t.slice(k).transpose();
      return m;
    }
    case 3: {
      Eigen::MatrixXd m(t.d3(), static_cast<Eigen::Index>(t.d1()) * t.d2());
      for (int k = 0; k < t.d3(); ++k)
        m.row(k) = Eigen::Map<const Eigen::VectorXd>(
            t.data() + static_cast<std::ptrdiff_t>(k) * t.d1() * t.d2(),
            static_cast<Eigen::Index>(t.d1()) * t.d2());
      return m;
    }
    default:
      throw std::invalid_argument("matricize: mode must be 1, 2, or 3");
  }
}

Tensor3 fold(const Eigen::MatrixXd& m, int d1, int d2, int d3, int mode) {
  Tensor3 t(d1, d2, d3);
  switch (mode) {
    case 1:
      require(m.rows() == d1 && m.cols() == static_cast<Eigen::Index>(d2) * d3,
              "fold: matrix shape does not match mode-1 unfolding");
      t.mode1() = m;
      return t;
    case 2:
      require(m.rows() == d2 && m.cols() == static_cast<Eigen::Index>(d1) * d3,
              "fold: matrix shape does not match mode-2 unfolding");
      for (int k = 0; k < d3; ++k)
        t.slice(k) =
            m.middleCols(static_cast<Eigen::Index>(k) * d1, d1).transpose();
      return t;
    case 3:
      require(m.rows() == d3 && m.cols() == static_cast<Eigen::Index>(d1) * d2,
              "fold: matrix shape does not match mode-3 unfolding");
      for (int k = 0; k < d3; ++k)
        Eigen::Map<Eigen::VectorXd>(
            t.data() + static_cast<std::ptrdiff_t>(k) * d1 * d2,
            static_cast<Eigen::Index>(d1) * d2) = m.row(k);
      return t;
    default:
      throw std::invalid_argument("fold: mode must be 1, 2, or 3");
  }
}

Tensor3 mode_product(const Tensor3& t, const Eigen::MatrixXd& m, int mode) {
  if (mode == 1) {
    require(m.cols() == t.d1(),
            "mode_product: matrix columns must match mode-1 extent");
    Tensor3 out(static_cast<int>(m.rows()), t.d2(), t.d3());
    for (int k = 0; k < t.d3(); ++k) out.slice(k) = m * t.slice(k);
    return out;
  }
  if (mode == 2) {
    require(m.cols() == t.d2(),
            "mode_product: matrix columns must match mode-2 extent");
    Tensor3 out(t.d1(), static_cast<int>(m.rows()), t.d3());
    for (int k = 0; k < t.d3(); ++k) out.slice(k) = t.slice(k) * m.transpose();
    return out;
  }
  throw std::invalid_argument("mode_product: mode must be 1 or 2");
}

Tensor3 reconstruct(const TuckerFactors& f) {
  require(f.u1.cols() == f.core.d1() && f.u2.cols() == f.core.d2(),
          "reconstruct: factor columns must match core extents");
  Tensor3 out(static_cast<int>(f.u1.rows()), static_cast<int>(f.u2.rows()),
              f.core.d3());
  for (int k = 0; k < f.core.d3(); ++k)
    out.slice(k) = f.u1 * f.core.slice(k) * f.u2.transpose();
  return out;
}

Eigen::VectorXd group_norms(const Tensor3& t) {
  Eigen::VectorXd norms(t.d3());
  for (int k = 0; k < t.d3(); ++k) norms(k) = t.slice(k).norm();
  return norms;
}

std::pair<Tensor3, GroupSupport> hard_threshold(const Tensor3& t, int s) {
  require(s >= 0 && s <= t.d3(),
          "hard_threshold: s must lie in [0, number of slices]");
  Eigen::VectorXd norms = group_norms(t);
  std::vector<int> order(t.d3());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (norms(a) != norms(b)) return norms(a) > norms(b);
    return a < b;  // ties keep the smaller lag
  });

  GroupSupport support;
  support.t0 = t.d3();
  support.lags.assign(order.begin(), order.begin() + s);
  std::sort(support.lags.begin(), support.lags.end());

  Tensor3 out = t;
  std::vector<bool> keep(t.d3(), false);
  for (int& lag : support.lags) {
    keep[lag] = true;
    lag += 1;  // report 1-based
  }
  for (int k = 0; k < t.d3(); ++k)
    if (!keep[k]) out.slice(k).setZero();
  return {std::move(out), std::move(support)};
}

Tensor3 soft_threshold(const Tensor3& t, double lambda) {
  require(lambda >= 0.0, "soft_threshold: lambda must be nonnegative");
  Tensor3 out = t;
  for (int k = 0; k < t.d3(); ++k) {
    double n = out.slice(k).norm();
    if (n <= lambda)
      out.slice(k).setZero();
    else
      out.slice(k) *= 1.0 - lambda / n;
  }
  return out;
}

}  // namespace tuckervar
