#include "pogp/kernels.hpp"

#include <cmath>

#include "pogp/errors.hpp"
#include "pogp/pseudo_outcome.hpp"

namespace pogp {

SeKernel SeKernel::natural(double output_scale, double lengthscale) {
  if (!(output_scale > 0.0) || !(lengthscale > 0.0)) {
    throw Error(ErrorKind::ValidationError, "kernel scales must be positive");
  }
  return SeKernel{std::log(output_scale), std::log(lengthscale)};
}

double SeKernel::output_scale() const { return std::exp(log_output_scale); }
double SeKernel::lengthscale() const { return std::exp(log_lengthscale); }
double SeKernel::variance() const { return std::exp(2.0 * log_output_scale); }

double SeKernel::from_squared_distance(double r2) const {
  const double ell = lengthscale();
  return variance() * std::exp(-0.5 * r2 / (ell * ell));
}

double kernel_eval(const SeKernel& k, const Vector& x, const Vector& xp) {
  if (x.size() != xp.size()) throw Error(ErrorKind::DimensionMismatch, "kernel inputs differ in dimension");
  return k.from_squared_distance((x - xp).squaredNorm());
}

double kernel_lipschitz(const SeKernel& k) {
  return k.variance() * std::exp(-0.5) / k.lengthscale();
}

Coregionalization Coregionalization::from_matrix(const Eigen::Matrix2d& a) {
  if (!(a(0, 0) > 0.0)) throw Error(ErrorKind::ValidationError, "coregionalization A(0,0) must be positive");
  const double l00 = std::sqrt(a(0, 0));
  const double l10 = a(1, 0) / l00;
  const double rem = a(1, 1) - l10 * l10;
  if (!(rem > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "coregionalization matrix is not PD");
  return Coregionalization{std::log(l00), l10, 0.5 * std::log(rem)};
}

Eigen::Matrix2d Coregionalization::matrix() const {
  const double l00 = std::exp(log_l00);
  const double l11 = std::exp(log_l11);
  Eigen::Matrix2d a;
  a << l00 * l00, l00 * l10, l00 * l10, l10 * l10 + l11 * l11;
  return a;
}

Eigen::Matrix2d Coregionalization::derivative(int i) const {
  const double l00 = std::exp(log_l00);
  const double l11 = std::exp(log_l11);
  Eigen::Matrix2d d = Eigen::Matrix2d::Zero();
  switch (i) {
    case 0: d << 2.0 * l00 * l00, l00 * l10, l00 * l10, 0.0; break;
    case 1: d << 0.0, l00, l00, 2.0 * l10; break;
    case 2: d(1, 1) = 2.0 * l11 * l11; break;
    default: throw Error(ErrorKind::ValidationError, "coregionalization parameter index out of range");
  }
  return d;
}

NoiseParams NoiseParams::natural(double sigma0, double sigma1) {
  if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) throw Error(ErrorKind::ValidationError, "noise must be positive");
  return NoiseParams{std::log(sigma0), std::log(sigma1)};
}

double NoiseParams::sigma(int t) const { return std::exp(t == 0 ? log_sigma0 : log_sigma1); }
double NoiseParams::variance(int t) const { return std::exp(2.0 * (t == 0 ? log_sigma0 : log_sigma1)); }

MultitaskKernel MultitaskKernel::naive(SeKernel k) {
  return MultitaskKernel(Kind::Naive, k, SeKernel{}, PropensityModel::constant(0.5));
}

MultitaskKernel MultitaskKernel::pseudo_fixed(SeKernel k, SeKernel l, PropensityModel propensity) {
  return MultitaskKernel(Kind::PseudoFixed, k, l, std::move(propensity));
}

MultitaskKernel MultitaskKernel::lcm_trainable(SeKernel k, SeKernel l, Coregionalization a0,
                                               Coregionalization a1, PropensityModel propensity) {
  MultitaskKernel m(Kind::LcmTrainable, k, l, std::move(propensity));
  m.a0_ = a0;
  m.a1_ = a1;
  return m;
}

const char* to_string(MultitaskKernel::Kind kind) {
  switch (kind) {
    case MultitaskKernel::Kind::Naive: return "naive";
    case MultitaskKernel::Kind::PseudoFixed: return "ours";
    case MultitaskKernel::Kind::LcmTrainable: return "lcm";
  }
  return "unknown";
}

MultitaskKernel::Loadings MultitaskKernel::loadings(const Vector& x, int task) const {
  if (task < 0 || task > 2) throw Error(ErrorKind::InvalidTask, "task " + std::to_string(task));
  Loadings out{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  switch (kind_) {
    case Kind::Naive:
      out.k(0) = 1.0;
      break;
    case Kind::PseudoFixed: {
      const auto c = task_coefficients(propensity_(x));
      out.k(0) = c.a[task];
      out.l(0) = c.b[task];
      break;
    }
    case Kind::LcmTrainable:
      if (task == kCateTask) {
        // Propensity-weighted arm average (1 - pi) f_0 + pi f_1; the b-terms cancel.
        const double pi = propensity_(x);
        out.k << 1.0 - pi, pi;
      } else {
        out.k(task) = 1.0;
      }
      out.l = out.k;
      break;
  }
  return out;
}

Eigen::Matrix2d MultitaskKernel::k_mixing() const {
  if (kind_ == Kind::LcmTrainable) return a0_.matrix();
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  m(0, 0) = 1.0;
  return m;
}

Eigen::Matrix2d MultitaskKernel::l_mixing() const {
  if (kind_ == Kind::LcmTrainable) return a1_.matrix();
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  if (kind_ == Kind::PseudoFixed) m(0, 0) = 1.0;
  return m;
}

double MultitaskKernel::cate_prior_variance(const Vector& x) const {
  return task_kernel_eval(*this, TaskPoint{x, kCateTask}, TaskPoint{x, kCateTask});
}

double task_kernel_eval(const MultitaskKernel& kernel, const TaskPoint& p, const TaskPoint& q) {
  if (p.x.size() != q.x.size()) throw Error(ErrorKind::DimensionMismatch, "task points differ in dimension");
  const auto lp = kernel.loadings(p.x, p.task);
  const auto lq = kernel.loadings(q.x, q.task);
  const double r2 = (p.x - q.x).squaredNorm();
  double value = lp.k.dot(kernel.k_mixing() * lq.k) * kernel.k().from_squared_distance(r2);
  if (kernel.kind() != MultitaskKernel::Kind::Naive) {
    value += lp.l.dot(kernel.l_mixing() * lq.l) * kernel.l().from_squared_distance(r2);
  }
  return value;
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Vector an = a.rowwise().squaredNorm();
  const Vector bn = b.rowwise().squaredNorm();
  Matrix d = (-2.0 * a * b.transpose()).colwise() + an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

namespace {

struct LoadingTable {
  Matrix x;
  Eigen::MatrixX2d pk;
  Eigen::MatrixX2d pl;
};

LoadingTable tabulate(const MultitaskKernel& kernel, std::span<const TaskPoint> points) {
  LoadingTable t;
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = n > 0 ? points[0].x.size() : 0;
  t.x.resize(n, d);
  t.pk.resize(n, 2);
  t.pl.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (points[i].x.size() != d) throw Error(ErrorKind::DimensionMismatch, "points differ in dimension");
    t.x.row(i) = points[i].x.transpose();
    const auto ld = kernel.loadings(points[i].x, points[i].task);
    t.pk.row(i) = ld.k.transpose();
    t.pl.row(i) = ld.l.transpose();
  }
  return t;
}

Matrix assemble(const MultitaskKernel& kernel, const LoadingTable& a, const LoadingTable& b) {
  const Matrix r2 = squared_distances(a.x, b.x);
  const double ellk = kernel.k().lengthscale();
  Matrix out = (a.pk * kernel.k_mixing() * b.pk.transpose()).cwiseProduct(
      kernel.k().variance() * (-0.5 / (ellk * ellk) * r2).array().exp().matrix());
  if (kernel.kind() != MultitaskKernel::Kind::Naive) {
    const double elll = kernel.l().lengthscale();
    out += (a.pl * kernel.l_mixing() * b.pl.transpose())
               .cwiseProduct(kernel.l().variance() * (-0.5 / (elll * elll) * r2).array().exp().matrix());
  }
  return out;
}

}  // namespace

SpdMatrix gram_matrix(const MultitaskKernel& kernel, std::span<const TaskPoint> points,
                      const NoiseParams* noise) {
  if (points.empty()) throw Error(ErrorKind::ValidationError, "gram_matrix needs at least one point");
  const auto table = tabulate(kernel, points);
  Matrix g = assemble(kernel, table, table);
  // Exact symmetry; the two products above can differ in the last bit.
  g = 0.5 * (g + g.transpose()).eval();
  if (noise) {
    for (size_t i = 0; i < points.size(); ++i) {
      if (points[i].task != kCateTask) g(i, i) += noise->variance(points[i].task);
    }
  }
  return SpdMatrix(std::move(g));
}

Matrix cross_covariance(const MultitaskKernel& kernel, std::span<const TaskPoint> rows,
                        std::span<const TaskPoint> cols) {
  if (rows.empty() || cols.empty()) {
    return Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  }
  return assemble(kernel, tabulate(kernel, rows), tabulate(kernel, cols));
}

}  // namespace pogp
