#include "pogp/numerics.hpp"

#include <cmath>
#include <sstream>

#include "pogp/errors.hpp"

namespace pogp {

namespace {

constexpr double kSymmetryTol = 1e-12;

void check_dims(const CholeskyFactor& f, Eigen::Index rows) {
  if (f.dim() != rows) {
    std::ostringstream msg;
    msg << "factor has dimension " << f.dim() << " but right-hand side has " << rows << " rows";
    throw Error(ErrorKind::DimensionMismatch, msg.str());
  }
}

}  // namespace

SpdMatrix::SpdMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "SpdMatrix must be square");
  }
  const double scale = std::max(m_.cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index j = 0; j < m_.cols(); ++j) {
    for (Eigen::Index i = j + 1; i < m_.rows(); ++i) {
      if (std::abs(m_(i, j) - m_(j, i)) > kSymmetryTol * scale) {
        std::ostringstream msg;
        msg << "matrix is not symmetric at (" << i << ", " << j << ")";
        throw Error(ErrorKind::ValidationError, msg.str());
      }
    }
  }
}

double SpdMatrix::mean_diagonal() const {
  if (m_.rows() == 0) return 0.0;
  return m_.diagonal().mean();
}

std::vector<double> default_jitter_schedule(const SpdMatrix& m) {
  const double scale = std::max(std::abs(m.mean_diagonal()), 1e-300);
  return {0.0, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale, 1e-4 * scale};
}

CholeskyFactor cholesky(const SpdMatrix& m, std::span<const double> jitter_schedule) {
  for (double jitter : jitter_schedule) {
    Matrix shifted = m.matrix();
    if (jitter > 0.0) shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      return CholeskyFactor(std::move(llt), jitter);
    }
  }
  std::ostringstream msg;
  msg << "cholesky failed for every jitter in the schedule (dim " << m.dim() << ")";
  throw Error(ErrorKind::NotPositiveDefinite, msg.str());
}

CholeskyFactor cholesky(const SpdMatrix& m) {
  const auto schedule = default_jitter_schedule(m);
  return cholesky(m, schedule);
}

Vector solve_psd(const CholeskyFactor& f, const Vector& b) {
  check_dims(f, b.rows());
  return f.llt().solve(b);
}

Matrix solve_psd(const CholeskyFactor& f, const Matrix& b) {
  check_dims(f, b.rows());
  return f.llt().solve(b);
}

Matrix inverse_psd(const CholeskyFactor& f) {
  const Eigen::Index n = f.dim();
  Matrix linv = Matrix::Identity(n, n);
  f.llt().matrixL().solveInPlace(linv);
  Matrix inv(n, n);
  inv.setZero();
  inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
  return inv.selfadjointView<Eigen::Lower>();
}

double log_det(const CholeskyFactor& f) {
  const auto& l = f.llt().matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
  return 2.0 * acc;
}

double spectral_norm(const SpdMatrix& m, double tol, int max_iters) {
  const Eigen::Index n = m.dim();
  if (n == 0) return 0.0;
  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = v.dot(m.matrix() * v);
  for (int it = 0; it < max_iters; ++it) {
    Vector w = m.matrix() * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(m.matrix() * v);
    if (std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  throw Error(ErrorKind::NoConvergence, "power iteration did not converge");
}

double smallest_eigenvalue(const CholeskyFactor& f, double tol, int max_iters) {
  const Eigen::Index n = f.dim();
  if (n == 0) {
    throw Error(ErrorKind::DimensionMismatch, "smallest_eigenvalue of an empty factor");
  }
  // Power iteration on the inverse; each step is two triangular solves.
  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double mu = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vector w = f.llt().solve(v);
    const double next = v.dot(w);
    v = w / w.norm();
    if (it > 0 && std::abs(next - mu) <= tol * std::abs(next)) return 1.0 / next;
    mu = next;
  }
  throw Error(ErrorKind::NoConvergence, "inverse power iteration did not converge");
}

double inverse_spectral_norm(const CholeskyFactor& f, double tol, int max_iters) {
  return 1.0 / smallest_eigenvalue(f, tol, max_iters);
}

}  // namespace pogp
