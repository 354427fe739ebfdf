#include "pogp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/QR>

#include "pogp/errors.hpp"

namespace pogp {

const char* to_string(Environment env) {
  return env == Environment::Observational ? "observational" : "experimental";
}

Dataset::Dataset(Matrix covariates, std::vector<int> treatments, Vector outcomes,
                 Environment environment, std::vector<std::string> covariate_names)
    : covariates_(std::move(covariates)),
      treatments_(std::move(treatments)),
      outcomes_(std::move(outcomes)),
      environment_(environment),
      names_(std::move(covariate_names)) {
  const auto n = covariates_.rows();
  if (n < 1) throw Error(ErrorKind::ValidationError, "dataset must have at least one row");
  if (static_cast<Eigen::Index>(treatments_.size()) != n || outcomes_.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "covariates, treatments and outcomes differ in length");
  }
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < covariates_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names_.size()) != covariates_.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "covariate name count does not match columns");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (treatments_[i] != 0 && treatments_[i] != 1) {
      throw Error(ErrorKind::ValidationError,
                  "treatment at row " + std::to_string(i) + " is not binary");
    }
    if (!std::isfinite(outcomes_[i]) || !covariates_.row(i).allFinite()) {
      throw Error(ErrorKind::ValidationError, "non-finite value at row " + std::to_string(i));
    }
  }
}

std::optional<Eigen::Index> Dataset::column_index(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - names_.begin());
}

Dataset Dataset::with_outcomes(Vector outcomes) const {
  return Dataset(covariates_, treatments_, std::move(outcomes), environment_, names_);
}

Dataset Dataset::with_covariates(Matrix covariates) const {
  return Dataset(std::move(covariates), treatments_, outcomes_, environment_, names_);
}

std::vector<Eigen::Index> Dataset::arm_rows(int t) const {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (treatments_[i] == t) rows.push_back(i);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string_view view(line);
  size_t start = 0;
  while (true) {
    auto comma = view.find(',', start);
    cells.push_back(trim(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_cell(const std::string& cell, size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    std::ostringstream msg;
    msg << "cannot parse '" << cell << "' at row " << row << ", column '" << column << "'";
    throw Error(ErrorKind::ParseError, msg.str());
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, "missing header row in " + path.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  const auto header = split_line(line);
  std::map<std::string, size_t> index;
  for (size_t j = 0; j < header.size(); ++j) index[header[j]] = j;

  auto require = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorKind::SchemaError, "missing column '" + name + "'");
    return it->second;
  };

  std::optional<size_t> t_col;
  if (!schema.treatment_column.empty()) t_col = require(schema.treatment_column);
  std::optional<size_t> y_col;
  if (schema.outcome_column) y_col = require(*schema.outcome_column);

  std::vector<std::string> cov_names = schema.covariate_columns;
  if (cov_names.empty()) {
    for (size_t j = 0; j < header.size(); ++j) {
      if ((t_col && j == *t_col) || (y_col && j == *y_col)) continue;
      cov_names.push_back(header[j]);
    }
  }
  if (cov_names.empty()) throw Error(ErrorKind::SchemaError, "schema names no covariate columns");
  std::vector<size_t> cov_cols;
  for (const auto& name : cov_names) cov_cols.push_back(require(name));

  std::vector<std::vector<double>> rows;
  std::vector<int> treatments;
  std::vector<double> outcomes;
  size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      std::ostringstream msg;
      msg << "row " << row << " has " << cells.size() << " cells, expected " << header.size();
      throw Error(ErrorKind::ParseError, msg.str());
    }
    const double t = t_col ? parse_cell(cells[*t_col], row, header[*t_col]) : 0.0;
    if (t != 0.0 && t != 1.0) {
      std::ostringstream msg;
      msg << "treatment '" << cells[*t_col] << "' at row " << row << " is not binary";
      throw Error(ErrorKind::ValidationError, msg.str());
    }
    std::vector<double> x;
    x.reserve(cov_cols.size());
    for (size_t c : cov_cols) x.push_back(parse_cell(cells[c], row, header[c]));
    const double y = y_col ? parse_cell(cells[*y_col], row, header[*y_col]) : 0.0;
    bool finite = std::isfinite(y);
    for (double v : x) finite = finite && std::isfinite(v);
    if (!finite) throw Error(ErrorKind::ValidationError, "non-finite value at row " + std::to_string(row));
    rows.push_back(std::move(x));
    treatments.push_back(static_cast<int>(t));
    outcomes.push_back(y);
    ++row;
  }
  if (rows.empty()) throw Error(ErrorKind::ValidationError, "no data rows in " + path.string());

  Matrix cov(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cov_cols.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < cov_cols.size(); ++j) cov(i, j) = rows[i][j];
  }
  Vector y = Eigen::Map<Vector>(outcomes.data(), static_cast<Eigen::Index>(outcomes.size()));
  return Dataset(std::move(cov), std::move(treatments), std::move(y), schema.environment,
                 std::move(cov_names));
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::RuntimeFailure, "cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "t,y";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << data.treatments()[i] << ',' << data.outcomes()[i];
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << ',' << data.covariates()(i, j);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Propensity

PropensityModel::PropensityModel(double p, Function fn, double delta)
    : p_(p), fn_(std::move(fn)), delta_(delta) {
  if (!(delta_ > 0.0 && delta_ < 0.5)) {
    throw Error(ErrorKind::ValidationError, "overlap delta must lie in (0, 0.5)");
  }
}

PropensityModel PropensityModel::constant(double p, double overlap_delta) {
  PropensityModel m(p, nullptr, overlap_delta);
  if (!(p > overlap_delta && p < 1.0 - overlap_delta)) {
    std::ostringstream msg;
    msg << "constant propensity " << p << " outside (" << overlap_delta << ", " << 1.0 - overlap_delta << ")";
    throw Error(ErrorKind::OverlapViolation, msg.str());
  }
  return m;
}

PropensityModel PropensityModel::tabulated(Function fn, double overlap_delta) {
  if (!fn) throw Error(ErrorKind::ValidationError, "tabulated propensity needs a function");
  return PropensityModel(0.5, std::move(fn), overlap_delta);
}

double PropensityModel::operator()(const Vector& x) const {
  const double p = fn_ ? fn_(x) : p_;
  if (!(p > delta_ && p < 1.0 - delta_)) {
    std::ostringstream msg;
    msg << "propensity " << p << " violates strict overlap with delta " << delta_;
    throw Error(ErrorKind::OverlapViolation, msg.str());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Observational model

ObservationalModel ObservationalModel::oracle(Function gap) {
  ObservationalModel m;
  m.gap_ = std::move(gap);
  return m;
}

ObservationalModel ObservationalModel::ridge(RidgeCoefficients coefs) {
  ObservationalModel m;
  m.ridge_ = std::move(coefs);
  return m;
}

ObservationalModel ObservationalModel::zero() {
  return oracle([](const Vector&) { return 0.0; });
}

double ObservationalModel::predict_arm(const Vector& x, int t) const {
  if (!ridge_) throw Error(ErrorKind::ValidationError, "predict_arm requires a ridge model");
  return ridge_->intercept[t] + ridge_->slope[t].dot(x);
}

double ObservationalModel::predict_gap(const Vector& x) const {
  if (ridge_) return predict_arm(x, 1) - predict_arm(x, 0);
  return gap_(x);
}

const RidgeCoefficients& ObservationalModel::coefficients() const {
  if (!ridge_) throw Error(ErrorKind::ValidationError, "not a ridge model");
  return *ridge_;
}

ObservationalModel fit_observational_ridge(const Dataset& obs, double lambda) {
  if (obs.environment() != Environment::Observational) {
    throw Error(ErrorKind::ValidationError, "ridge fit expects an observational dataset");
  }
  if (!(lambda >= 0.0)) throw Error(ErrorKind::ValidationError, "ridge lambda must be nonnegative");
  const Eigen::Index d = obs.dim();
  RidgeCoefficients coefs;
  coefs.lambda = lambda;
  for (int t = 0; t < 2; ++t) {
    const auto rows = obs.arm_rows(t);
    const auto m = static_cast<Eigen::Index>(rows.size());
    if (m == 0 || (lambda == 0.0 && m < d + 1)) {
      throw Error(ErrorKind::DegenerateArm,
                  "arm " + std::to_string(t) + " has " + std::to_string(m) + " rows for " +
                      std::to_string(d) + " covariates");
    }
    // Augmented least squares [X 1; sqrt(lambda) I 0] beta = [y; 0], solved by QR.
    // Centring first keeps the intercept out of the penalty.
    Matrix x(m, d);
    Vector y(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      x.row(i) = obs.covariates().row(rows[i]);
      y[i] = obs.outcomes()[rows[i]];
    }
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    Matrix a(m + (lambda > 0.0 ? d : 0), d);
    Vector rhs = Vector::Zero(a.rows());
    a.topRows(m) = x.rowwise() - x_mean;
    rhs.head(m) = y.array() - y_mean;
    if (lambda > 0.0) a.bottomRows(d) = std::sqrt(lambda) * Matrix::Identity(d, d);
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    if (qr.rank() < d) {
      throw Error(ErrorKind::DegenerateArm, "arm " + std::to_string(t) + " design is rank deficient");
    }
    coefs.slope[t] = qr.solve(rhs);
    coefs.intercept[t] = y_mean - x_mean.dot(coefs.slope[t]);
  }
  return ObservationalModel::ridge(std::move(coefs));
}

// ---------------------------------------------------------------------------
// Covering numbers

std::uint64_t covering_number_hypercube(std::span<const double> side_lengths, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::ValidationError, "tau must be positive");
  double log_total = 0.0;
  std::uint64_t total = 1;
  for (double r : side_lengths) {
    if (!(r > 0.0)) throw Error(ErrorKind::ValidationError, "side lengths must be positive");
    const double factor = std::ceil(1.0 + r / tau);
    log_total += std::log(factor);
    if (log_total > std::log(static_cast<double>(std::numeric_limits<std::uint64_t>::max())) ||
        factor > static_cast<double>(std::numeric_limits<std::uint64_t>::max())) {
      throw Error(ErrorKind::Overflow, "covering number exceeds 64-bit range");
    }
    const auto f = static_cast<std::uint64_t>(factor);
    if (total > std::numeric_limits<std::uint64_t>::max() / f) {
      throw Error(ErrorKind::Overflow, "covering number exceeds 64-bit range");
    }
    total *= f;
  }
  return total;
}

double log_covering_number_hypercube(std::span<const double> side_lengths, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::ValidationError, "tau must be positive");
  double acc = 0.0;
  for (double r : side_lengths) {
    if (!(r > 0.0)) throw Error(ErrorKind::ValidationError, "side lengths must be positive");
    acc += std::log(std::ceil(1.0 + r / tau));
  }
  return acc;
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean[j]).square().sum() / std::max<Eigen::Index>(x.rows() - 1, 1);
    s.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Box Box::cube(Eigen::Index d, double lo, double hi) {
  return Box{Vector::Constant(d, lo), Vector::Constant(d, hi)};
}

Box Box::bounding(const Matrix& x) {
  Box b{x.colwise().minCoeff().transpose(), x.colwise().maxCoeff().transpose()};
  // Degenerate columns get a unit-width slab so side lengths stay positive.
  for (Eigen::Index j = 0; j < b.dim(); ++j) {
    if (b.upper[j] - b.lower[j] <= 0.0) {
      b.lower[j] -= 0.5;
      b.upper[j] += 0.5;
    }
  }
  return b;
}

bool Box::contains(const Vector& x, double slack) const {
  if (x.size() != lower.size()) return false;
  return ((x.array() >= lower.array() - slack) && (x.array() <= upper.array() + slack)).all();
}

double Box::volume() const { return side_lengths().prod(); }

}  // namespace pogp
