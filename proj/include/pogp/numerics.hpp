#pragma once

#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace pogp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense symmetric positive (semi-)definite matrix.
///
/// Construction checks symmetry to a relative tolerance of 1e-12; positive
/// definiteness is only established by a successful cholesky().
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(Matrix m);

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  double mean_diagonal() const;

 private:
  Matrix m_;
};

/// Lower Cholesky factor of m + jitter * I.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  CholeskyFactor(Eigen::LLT<Matrix> llt, double jitter) : llt_(std::move(llt)), jitter_(jitter) {}

  Eigen::Index dim() const { return llt_.rows(); }
  Matrix lower() const { return llt_.matrixL(); }
  double jitter_used() const { return jitter_; }
  const Eigen::LLT<Matrix>& llt() const { return llt_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

/// The absolute jitter schedule {0, 1e-10, 1e-8, 1e-6, 1e-4} times the mean
/// diagonal of m.
std::vector<double> default_jitter_schedule(const SpdMatrix& m);

/// Factor m + j*I for the first j in `jitter_schedule` that succeeds.
/// Throws NotPositiveDefinite when every entry fails.
CholeskyFactor cholesky(const SpdMatrix& m, std::span<const double> jitter_schedule);
CholeskyFactor cholesky(const SpdMatrix& m);

Vector solve_psd(const CholeskyFactor& f, const Vector& b);
Matrix solve_psd(const CholeskyFactor& f, const Matrix& b);

/// Explicit inverse (L L^T)^{-1}. O(n^3); only used where the full inverse is needed.
Matrix inverse_psd(const CholeskyFactor& f);

double log_det(const CholeskyFactor& f);

inline constexpr int kDefaultEigenIterations = 10'000;

/// Largest eigenvalue of a PSD matrix by power iteration from the normalized
/// all-ones vector. Throws NoConvergence after max_iters.
double spectral_norm(const SpdMatrix& m, double tol, int max_iters = kDefaultEigenIterations);

/// Smallest eigenvalue of L L^T by inverse power iteration on the factor.
double smallest_eigenvalue(const CholeskyFactor& f, double tol,
                           int max_iters = kDefaultEigenIterations);

/// ||(L L^T)^{-1}||_2 = 1 / smallest eigenvalue.
double inverse_spectral_norm(const CholeskyFactor& f, double tol,
                             int max_iters = kDefaultEigenIterations);

}  // namespace pogp
