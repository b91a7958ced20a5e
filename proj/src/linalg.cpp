#include "flowsac/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <string>

#include "flowsac/errors.hpp"
#include "flowsac/rng.hpp"

namespace flowsac {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

void require_finite(const std::vector<double>& entries, const char* what) {
  for (double v : entries) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) +
                                  " must have finite entries");
    }
  }
}

}  // namespace

Vector::Vector(std::initializer_list<double> entries) : e_(entries) {
  require_finite(e_, "vector");
}

Vector Vector::of(std::vector<double> entries) {
  require_finite(entries, "vector");
  Vector v;
  v.e_ = std::move(entries);
  return v;
}

double Vector::dot(const Vector& other) const {
  require(dim() == other.dim(), "dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < e_.size(); ++i) s += e_[i] * other.e_[i];
  return s;
}

double Vector::norm() const { return std::sqrt(sq_norm()); }

bool Vector::all_finite() const {
  return std::all_of(e_.begin(), e_.end(),
                     [](double v) { return std::isfinite(v); });
}

Vector& Vector::operator+=(const Vector& other) {
  require(dim() == other.dim(), "vector +: dimension mismatch");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] += other.e_[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& other) {
  require(dim() == other.dim(), "vector -: dimension mismatch");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] -= other.e_[i];
  return *this;
}

Vector& Vector::operator*=(double s) {
  for (double& v : e_) v *= s;
  return *this;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double s, Vector v) { return v *= s; }

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  e_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "matrix literal: ragged rows");
    e_.insert(e_.end(), r.begin(), r.end());
  }
  require_finite(e_, "matrix");
}

Matrix Matrix::of(std::size_t rows, std::size_t cols,
                  std::vector<double> row_major) {
  require(row_major.size() == rows * cols, "matrix: wrong entry count");
  require_finite(row_major, "matrix");
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.e_ = std::move(row_major);
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const Vector& d) {
  Matrix m(d.dim(), d.dim());
  for (std::size_t i = 0; i < d.dim(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : e_) s += v * v;
  return std::sqrt(s);
}

bool Matrix::all_finite() const {
  return std::all_of(e_.begin(), e_.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_,
          "matrix +: shape mismatch");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] += other.e_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_,
          "matrix -: shape mismatch");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] -= other.e_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : e_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix m) { return m *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * brow[j];
    }
  }
  return c;
}

Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }

Vector operator*(const Matrix& a, const Vector& v) {
  require(a.cols() == v.dim(), "matvec: dimension mismatch");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += arow[j] * v[j];
    out[i] = s;
  }
  return out;
}

double trace(const Matrix& a) {
  require(a.rows() == a.cols(), "trace: matrix must be square");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

Matrix cholesky(const Matrix& a) {
  require(a.rows() == a.cols(), "cholesky: matrix must be square");
  const std::size_t n = a.rows();
  const double scale = std::max(1.0, a.frobenius_norm());
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = j; i < n; ++i) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-8 * scale) {
        throw numeric_error("cholesky: matrix is not symmetric");
      }
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 1e-14 * scale) {
          char buf[96];
          std::snprintf(buf, sizeof(buf),
                        "cholesky: matrix is not positive definite "
                        "(pivot %.3e at index %zu)",
                        s, j);
          throw numeric_error(buf);
        }
        l(j, j) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

namespace {

// Solve L y = b then L^T x = y.
Vector cholesky_solve(const Matrix& l, const Vector& b) {
  const std::size_t n = l.rows();
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Vector x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

}  // namespace

Vector solve_spd(const Matrix& a, const Vector& b) {
  require(a.rows() == b.dim(), "solve_spd: dimension mismatch");
  return cholesky_solve(cholesky(a), b);
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "solve_spd: dimension mismatch");
  const Matrix l = cholesky(a);
  Matrix x(b.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    Vector col(b.rows());
    for (std::size_t i = 0; i < b.rows(); ++i) col[i] = b(i, j);
    const Vector sol = cholesky_solve(l, col);
    for (std::size_t i = 0; i < b.rows(); ++i) x(i, j) = sol[i];
  }
  return x;
}

double logdet_spd(const Matrix& a) {
  const Matrix l = cholesky(a);
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

SymEig sym_eig(const Matrix& a) {
  require(a.rows() == a.cols(), "sym_eig: matrix must be square");
  const std::size_t n = a.rows();
  const double scale = std::max(1.0, a.frobenius_norm());
  Matrix b(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > 1e-8 * scale) {
        throw std::invalid_argument("sym_eig: matrix is not symmetric");
      }
      b(i, j) = 0.5 * (a(i, j) + a(j, i));
    }
  }
  Matrix v = Matrix::identity(n);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += b(p, q) * b(p, q);
    return std::sqrt(2.0 * s);
  };

  const double tol = 1e-14 * scale;
  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = b(p, q);
        if (std::abs(apq) <= 1e-18 * scale) continue;
        const double theta = (b(q, q) - b(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // Rotate rows/columns p and q of b, accumulate rotation in v.
        for (std::size_t k = 0; k < n; ++k) {
          const double bkp = b(k, p), bkq = b(k, q);
          b(k, p) = c * bkp - s * bkq;
          b(k, q) = s * bkp + c * bkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double bpk = b(p, k), bqk = b(q, k);
          b(p, k) = c * bpk - s * bqk;
          b(q, k) = s * bpk + c * bqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) {
                     return b(i, i) < b(j, j);
                   });
  SymEig out;
  out.values = Vector(n);
  out.vectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = b(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

Matrix sym_psd_sqrt(const Matrix& a) {
  const SymEig eig = sym_eig(a);
  const std::size_t n = a.rows();
  Vector roots(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lam = eig.values[i];
    if (lam < -1e-8) {
      char buf[96];
      std::snprintf(buf, sizeof(buf),
                    "sym_psd_sqrt: eigenvalue %.3e is negative", lam);
      throw numeric_error(buf);
    }
    roots[i] = std::sqrt(std::max(0.0, lam));
  }
  // v * diag(roots) * v^T, symmetrized against rounding drift.
  Matrix scaled(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      scaled(i, j) = eig.vectors(i, j) * roots[j];
  Matrix s = matmul(scaled, eig.vectors.transpose());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = 0.5 * (s(i, j) + s(j, i));
      s(i, j) = m;
      s(j, i) = m;
    }
  return s;
}

double spectral_radius(const Matrix& a, double tol) {
  require(a.rows() == a.cols(), "spectral_radius: matrix must be square");
  const std::size_t n = a.rows();
  if (n == 0) return 0.0;

  double best = 0.0;
  const int max_iters = 2000 + 200 * static_cast<int>(n);
  for (std::uint64_t restart = 0; restart < 3; ++restart) {
    Rng rng = Rng(0x5eedf00dULL).split(restart);
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.normal();
    double vn = v.norm();
    if (vn == 0.0) continue;
    v *= 1.0 / vn;

    Vector v_prev;
    double est = 0.0, est_prev = -1.0;
    int stable = 0;
    for (int iter = 0; iter < max_iters; ++iter) {
      Vector w = a * v;
      const double nw = w.norm();
      if (!(nw > 1e-300)) {
        est = 0.0;  // iterate annihilated: nilpotent direction
        stable = 3;
        break;
      }
      double alpha = w.dot(v), beta = 0.0;
      if (v_prev.dim() == n) {
        // Least-squares fit w ~ alpha*v + (beta/n_k)*v_prev resolves a
        // complex conjugate dominant pair: the moduli are roots of
        // lambda^2 - alpha*lambda - beta.
        const double g = v.dot(v_prev);
        const double det = 1.0 - g * g;
        const double r1 = w.dot(v), r2 = w.dot(v_prev);
        if (det > 1e-12) {
          alpha = (r1 - g * r2) / det;
          const double b_over_nk = (r2 - g * r1) / det;
          beta = b_over_nk * vn;
        }
      }
      const double disc = alpha * alpha + 4.0 * beta;
      if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        est = std::max(std::abs(0.5 * (alpha + root)),
                       std::abs(0.5 * (alpha - root)));
      } else {
        est = std::sqrt(-beta);
      }
      if (std::abs(est - est_prev) <= tol * std::max(est, 1.0)) {
        if (++stable >= 3) break;
      } else {
        stable = 0;
      }
      est_prev = est;
      v_prev = v;
      vn = nw;
      w *= 1.0 / nw;
      v = w;
    }
    best = std::max(best, est);
  }
  return best;
}

}  // namespace flowsac
