#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace flowsac {

// Dense double-precision vectors and matrices, sized for control problems
// with a handful of dimensions.  Values are validated to be finite when
// constructed from raw entries; operations on valid inputs are pure.

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t dim) : e_(dim, 0.0) {}
  Vector(std::initializer_list<double> entries);
  static Vector of(std::vector<double> entries);

  std::size_t dim() const { return e_.size(); }
  double operator[](std::size_t i) const { return e_[i]; }
  double& operator[](std::size_t i) { return e_[i]; }
  const std::vector<double>& entries() const { return e_; }
  double* data() { return e_.data(); }
  const double* data() const { return e_.data(); }

  double dot(const Vector& other) const;
  double sq_norm() const { return dot(*this); }
  double norm() const;
  bool all_finite() const;

  Vector& operator+=(const Vector& other);
  Vector& operator-=(const Vector& other);
  Vector& operator*=(double s);

 private:
  std::vector<double> e_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double s, Vector v);

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), e_(rows * cols, 0.0) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix of(std::size_t rows, std::size_t cols,
                   std::vector<double> row_major);
  static Matrix identity(std::size_t n);
  static Matrix diag(const Vector& d);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const {
    return e_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) { return e_[r * cols_ + c]; }
  const double* row(std::size_t r) const { return e_.data() + r * cols_; }
  const std::vector<double>& entries() const { return e_; }
  double* data() { return e_.data(); }
  const double* data() const { return e_.data(); }
  std::size_t size() const { return e_.size(); }

  Matrix transpose() const;
  double frobenius_norm() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> e_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix m);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, const Vector& v);

Matrix matmul(const Matrix& a, const Matrix& b);
double trace(const Matrix& a);

// Lower-triangular L with a = L L^T.  Errors if a is not symmetric positive
// definite.
Matrix cholesky(const Matrix& a);

// Solve a x = b for symmetric positive definite a.
Vector solve_spd(const Matrix& a, const Vector& b);
Matrix solve_spd(const Matrix& a, const Matrix& b);

// log det a for symmetric positive definite a.
double logdet_spd(const Matrix& a);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations:
// a = vectors * diag(values) * vectors^T, values ascending.
struct SymEig {
  Vector values;
  Matrix vectors;
};
SymEig sym_eig(const Matrix& a);

// Symmetric PSD square root via eigendecomposition.  Eigenvalues in
// [-1e-8, 0] are clamped to zero; anything more negative is an error.
Matrix sym_psd_sqrt(const Matrix& a);

// Largest eigenvalue modulus of a general square matrix, by power iteration
// with random restarts, refined with a two-term recurrence fit so complex
// conjugate dominant pairs converge too.
double spectral_radius(const Matrix& a, double tol = 1e-9);

}  // namespace flowsac
