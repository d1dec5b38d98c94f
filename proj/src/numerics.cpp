#include "daclyf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace daclyf {

namespace {
constexpr double kPivotTol = 1e-12;
constexpr double kJacobiTol = 1e-12;
constexpr double kSymmetryTol = 1e-12;
}  // namespace

Matrix::Matrix(int r, int c, std::initializer_list<double> init) : Matrix(r, c) {
  if (static_cast<int>(init.size()) != r * c) {
    throw std::invalid_argument("Matrix initializer size mismatch");
  }
  std::copy(init.begin(), init.end(), data.begin());
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Vec operator*(const Matrix& a, const Vec& x) {
  Vec out(a.rows, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < a.cols; ++j) acc += a(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows * b.rows, a.cols * b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j)
      for (int p = 0; p < b.rows; ++p)
        for (int q = 0; q < b.cols; ++q)
          out(i * b.rows + p, j * b.cols + q) = a(i, j) * b(p, q);
  return out;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows != a.cols) return false;
  for (int i = 0; i < a.rows; ++i)
    for (int j = i + 1; j < a.cols; ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol) return false;
  return true;
}

double dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

double norm_inf(const Vec& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

Vec operator+(const Vec& a, const Vec& b) {
  Vec out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Vec operator-(const Vec& a, const Vec& b) {
  Vec out = a;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Vec operator*(double s, const Vec& a) {
  Vec out = a;
  for (double& v : out) v *= s;
  return out;
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

bool all_finite(const Vec& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

Vec lu_solve(Matrix a, Vec b) {
  const int n = a.rows;
  if (a.cols != n || static_cast<int>(b.size()) != n) {
    throw std::invalid_argument("lu_solve: dimension mismatch");
  }
  for (int col = 0; col < n; ++col) {
    // partial pivoting
    int pivot = col;
    double best = std::abs(a(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double mag = std::abs(a(r, col));
      if (mag > best) {
        best = mag;
        pivot = r;
      }
    }
    if (best < kPivotTol) {
      throw SingularMatrixError("lu_solve: pivot below tolerance at column " +
                                std::to_string(col));
    }
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (int r = col + 1; r < n; ++r) {
      const double factor = a(r, col) / a(col, col);
      if (factor == 0.0) continue;
      for (int j = col; j < n; ++j) a(r, j) -= factor * a(col, j);
      b[r] -= factor * b[col];
    }
  }
  // back substitution
  Vec x(n, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[i];
    for (int j = i + 1; j < n; ++j) acc -= a(i, j) * x[j];
    x[i] = acc / a(i, i);
  }
  return x;
}

bool cholesky(const Matrix& s, Matrix& lower) {
  const int n = s.rows;
  lower = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double acc = s(i, j);
      for (int k = 0; k < j; ++k) acc -= lower(i, k) * lower(j, k);
      if (i == j) {
        if (acc <= 0.0) return false;
        lower(i, i) = std::sqrt(acc);
      } else {
        lower(i, j) = acc / lower(j, j);
      }
    }
  }
  return true;
}

Matrix solve_ctle(const Matrix& a_cl, const Matrix& q) {
  const int n = a_cl.rows;
  if (a_cl.cols != n || q.rows != n || q.cols != n) {
    throw std::invalid_argument("solve_ctle: dimension mismatch");
  }
  if (!is_symmetric(q, kSymmetryTol)) {
    throw std::invalid_argument("solve_ctle: Q must be symmetric");
  }
  // vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P), with vec taken
  // row-major so that kron(I, A^T) multiplies P from the left.
  const Matrix at = transpose(a_cl);
  const Matrix eye = Matrix::identity(n);
  const Matrix system = kron(eye, at) + kron(at, eye);
  Vec rhs(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) rhs[static_cast<size_t>(i) * n + j] = -q(i, j);
  Vec p_vec = lu_solve(system, rhs);
  Matrix p(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) p(i, j) = p_vec[static_cast<size_t>(i) * n + j];
  // enforce exact symmetry
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      const double avg = 0.5 * (p(i, j) + p(j, i));
      p(i, j) = avg;
      p(j, i) = avg;
    }
  return p;
}

namespace {

double off_diagonal_frobenius(const Matrix& s) {
  double acc = 0.0;
  for (int i = 0; i < s.rows; ++i)
    for (int j = 0; j < s.cols; ++j)
      if (i != j) acc += s(i, j) * s(i, j);
  return std::sqrt(acc);
}

}  // namespace

EigBounds sym_eig_bounds(Matrix s) {
  const int n = s.rows;
  if (s.cols != n) throw std::invalid_argument("sym_eig_bounds: matrix not square");
  if (!is_symmetric(s, kSymmetryTol)) {
    throw std::invalid_argument("sym_eig_bounds: matrix not symmetric within 1e-12");
  }
  // cyclic Jacobi sweeps
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_diagonal_frobenius(s) <= kJacobiTol) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = s(p, q);
        if (apq == 0.0) continue;
        const double app = s(p, p);
        const double aqq = s(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0)
                             ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                             : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double skp = s(k, p);
          const double skq = s(k, q);
          s(k, p) = c * skp - sn * skq;
          s(k, q) = sn * skp + c * skq;
        }
        for (int k = 0; k < n; ++k) {
          const double spk = s(p, k);
          const double sqk = s(q, k);
          s(p, k) = c * spk - sn * sqk;
          s(q, k) = sn * spk + c * sqk;
        }
      }
    }
  }
  EigBounds out;
  out.lambda_min = s(0, 0);
  out.lambda_max = s(0, 0);
  for (int i = 1; i < n; ++i) {
    out.lambda_min = std::min(out.lambda_min, s(i, i));
    out.lambda_max = std::max(out.lambda_max, s(i, i));
  }
  return out;
}

Vec rk4_step(const OdeField& f, const Vec& x, double t, double h) {
  if (h <= 0.0) throw std::invalid_argument("rk4_step: step must be positive");
  auto stage = [&](double ts, const Vec& xs) {
    Vec k = f(ts, xs);
    if (!all_finite(k)) {
      throw DivergenceError("rk4_step: non-finite stage value at t=" + std::to_string(ts));
    }
    return k;
  };
  const Vec k1 = stage(t, x);
  const Vec k2 = stage(t + 0.5 * h, x + (0.5 * h) * k1);
  const Vec k3 = stage(t + 0.5 * h, x + (0.5 * h) * k2);
  const Vec k4 = stage(t + h, x + h * k3);
  Vec out = x;
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

std::vector<double> central_difference(const std::vector<double>& v, double dt) {
  const size_t n = v.size();
  if (n < 3) throw std::invalid_argument("central_difference: need at least 3 samples");
  if (dt <= 0.0) throw std::invalid_argument("central_difference: dt must be positive");
  std::vector<double> d(n, 0.0);
  d[0] = (v[1] - v[0]) / dt;
  for (size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
  d[n - 1] = (v[n - 1] - v[n - 2]) / dt;
  return d;
}

namespace {

// SplitMix64 finalizer; also used to hash split labels.
uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream RngStream::split(uint64_t label) const {
  return RngStream(mix64(state_ ^ mix64(label)));
}

RngStream RngStream::split(std::string_view label) const { return split(fnv1a(label)); }

uint64_t RngStream::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  have_spare_ = true;
  return u * factor;
}

}  // namespace daclyf
