#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace daclyf {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Sizes in this project are tiny
/// (state dimension 4, error dimension 2k <= 4), so everything is done
/// with straightforward O(n^3) dense kernels.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Matrix(int r, int c, std::initializer_list<double> init);

  static Matrix identity(int n);

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Vec operator*(const Matrix& a, const Vec& x);

Matrix transpose(const Matrix& a);
Matrix kron(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
bool is_symmetric(const Matrix& a, double tol);

// Vector helpers.
double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
double norm_inf(const Vec& a);
Vec operator+(const Vec& a, const Vec& b);
Vec operator-(const Vec& a, const Vec& b);
Vec operator*(double s, const Vec& a);
Vec concat(const Vec& a, const Vec& b);
bool all_finite(const Vec& a);

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Solves A x = b by LU factorization with partial pivoting.
/// Throws SingularMatrixError if any pivot magnitude falls below 1e-12.
Vec lu_solve(Matrix a, Vec b);

/// Cholesky factor (lower triangular) of a symmetric positive definite
/// matrix; empty result if the factorization breaks down.
bool cholesky(const Matrix& s, Matrix& lower);

/// Solves the continuous-time Lyapunov equation
///   A_cl^T P + P A_cl = -Q
/// by vectorizing to (I (x) A_cl^T + A_cl^T (x) I) vec(P) = -vec(Q) and
/// solving with lu_solve. The result is symmetrized. A singular system
/// indicates a non-Hurwitz or degenerate input.
Matrix solve_ctle(const Matrix& a_cl, const Matrix& q);

struct EigBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

/// Extreme eigenvalues of a symmetric matrix via cyclic Jacobi rotations,
/// iterated until the off-diagonal Frobenius norm falls below 1e-12.
/// Rejects inputs that are not symmetric within 1e-12.
EigBounds sym_eig_bounds(Matrix s);

using OdeField = std::function<Vec(double t, const Vec& x)>;

/// One classical fourth-order Runge-Kutta step. Throws DivergenceError
/// if any stage evaluation produces a non-finite value.
Vec rk4_step(const OdeField& f, const Vec& x, double t, double h);

/// First derivative of a uniformly sampled time series: second-order
/// central differences at interior points, first-order one-sided at the
/// endpoints. Requires at least 3 samples.
std::vector<double> central_difference(const std::vector<double>& v, double dt);

/// Deterministic splittable random stream (SplitMix64 core). Equal seeds
/// give bitwise-identical sequences; split() derives an independent
/// stream from (seed, label) without disturbing the parent.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : state_(seed) {}

  RngStream split(uint64_t label) const;
  RngStream split(std::string_view label) const;

  uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal (polar Box-Muller, deterministic draw order).
  double gaussian();

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace daclyf
