#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace glv {

using Complex = std::complex<double>;

/// Trapezoid weight of node index i on an edge with N intervals (indices -N/2..N/2).
inline double trapezoid_weight(int i, int n) {
  const int half = n / 2;
  if (i < -half || i > half) {
    throw std::out_of_range("trapezoid_weight: index " + std::to_string(i) + " outside [-N/2, N/2]");
  }
  return (i == -half || i == half) ? 0.5 : 1.0;
}

/// Node-centered uniform grid on the square (-d/2, d/2)^2 with N intervals per edge.
///
/// Nodes are indexed (i, j) with i, j in {-N/2, ..., N/2}; the flat index runs
/// fastest in i. Quadrature weights w_i w_j h^2 are cached and shared between copies.
class Grid {
 public:
  Grid() = default;

  Grid(double d, int n) : d_(d), n_(n) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw std::invalid_argument("edge length d must be positive");
    }
    if (n < 2) {
      throw std::invalid_argument("N must be a positive even integer >= 2");
    }
    if (n % 2 != 0) {
      throw std::invalid_argument("N must be even");
    }
    h_ = d_ / n_;
    auto w = std::make_shared<std::vector<double>>(size());
    const int half = n_ / 2;
    for (int j = -half; j <= half; ++j) {
      for (int i = -half; i <= half; ++i) {
        (*w)[index(i, j)] = trapezoid_weight(i, n_) * trapezoid_weight(j, n_) * h_ * h_;
      }
    }
    weights_ = std::move(w);
  }

  double d() const { return d_; }
  int n() const { return n_; }
  int half() const { return n_ / 2; }
  double h() const { return h_; }
  int nodes_per_edge() const { return n_ + 1; }
  std::size_t size() const { return static_cast<std::size_t>(n_ + 1) * static_cast<std::size_t>(n_ + 1); }
  double area() const { return d_ * d_; }

  double x(int i) const { return i * h_; }
  double y(int j) const { return j * h_; }

  bool contains(int i, int j) const {
    const int hf = half();
    return i >= -hf && i <= hf && j >= -hf && j <= hf;
  }

  std::size_t index(int i, int j) const {
    const int hf = half();
    return static_cast<std::size_t>(i + hf) + static_cast<std::size_t>(j + hf) * static_cast<std::size_t>(n_ + 1);
  }

  /// Quadrature weight w_i w_j h^2 at flat index k.
  double weight(std::size_t k) const { return (*weights_)[k]; }
  std::span<const double> weights() const { return *weights_; }

  bool operator==(const Grid& other) const { return d_ == other.d_ && n_ == other.n_; }
  bool operator!=(const Grid& other) const { return !(*this == other); }

 private:
  double d_ = 0.0;
  int n_ = 0;
  double h_ = 0.0;
  std::shared_ptr<const std::vector<double>> weights_;
};

inline Grid make_grid(double d, int n) { return Grid(d, n); }

inline void require_same_grid(const Grid& a, const Grid& b, const char* where) {
  if (a != b) {
    throw std::invalid_argument(std::string(where) + ": grid mismatch");
  }
}

/// Complex order parameter sampled on every grid node.
class OrderField {
 public:
  OrderField() = default;
  explicit OrderField(Grid grid, Complex fill = 0.0) : grid_(std::move(grid)), values_(grid_.size(), fill) {}

  template <class F>
  static OrderField from_function(const Grid& grid, F&& f) {
    OrderField out(grid);
    const int hf = grid.half();
    for (int j = -hf; j <= hf; ++j) {
      for (int i = -hf; i <= hf; ++i) {
        out(i, j) = f(grid.x(i), grid.y(j));
      }
    }
    return out;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }

  Complex& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
  const Complex& operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
  Complex& operator[](std::size_t k) { return values_[k]; }
  const Complex& operator[](std::size_t k) const { return values_[k]; }

  std::span<Complex> values() { return values_; }
  std::span<const Complex> values() const { return values_; }

  /// Interleaved (re, im) view; the realified coordinates used by all Krylov code.
  double* real_data() { return reinterpret_cast<double*>(values_.data()); }
  const double* real_data() const { return reinterpret_cast<const double*>(values_.data()); }
  std::size_t real_size() const { return 2 * values_.size(); }

  bool all_finite() const {
    for (const auto& v : values_) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
    return true;
  }

  OrderField& operator+=(const OrderField& o) {
    require_same_grid(grid_, o.grid_, "OrderField::operator+=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  OrderField& operator-=(const OrderField& o) {
    require_same_grid(grid_, o.grid_, "OrderField::operator-=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  OrderField& operator*=(Complex s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  /// this += s * o
  OrderField& axpy(Complex s, const OrderField& o) {
    require_same_grid(grid_, o.grid_, "OrderField::axpy");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += s * o.values_[k];
    return *this;
  }

  friend OrderField operator+(OrderField a, const OrderField& b) { return a += b; }
  friend OrderField operator-(OrderField a, const OrderField& b) { return a -= b; }
  friend OrderField operator*(Complex s, OrderField a) { return a *= s; }
  friend OrderField operator*(OrderField a, Complex s) { return a *= s; }

 private:
  Grid grid_;
  std::vector<Complex> values_;
};

/// Weighted discrete L2 product sum w_i w_j h^2 conj(a) b.
inline Complex inner_complex(const OrderField& a, const OrderField& b) {
  require_same_grid(a.grid(), b.grid(), "inner_complex");
  const auto w = a.grid().weights();
  Complex acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += w[k] * std::conj(a[k]) * b[k];
  return acc;
}

/// Real part of inner_complex; the inner product under which the Jacobian is self-adjoint.
inline double inner_real(const OrderField& a, const OrderField& b) {
  require_same_grid(a.grid(), b.grid(), "inner_real");
  const auto w = a.grid().weights();
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    acc += w[k] * (a[k].real() * b[k].real() + a[k].imag() * b[k].imag());
  }
  return acc;
}

inline double norm(const OrderField& a) { return std::sqrt(inner_real(a, a)); }

/// Root-mean-square amplitude, norm / d.
inline double rms(const OrderField& a) { return norm(a) / a.grid().d(); }

inline OrderField times_i(OrderField a) { return a *= Complex(0.0, 1.0); }

}  // namespace glv
