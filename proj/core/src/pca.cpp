#include "persyn/pca.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace persyn {

PcaModel::PcaModel(std::vector<double> mean, std::vector<double> basis,
                   std::vector<double> variances, std::size_t retained_dim)
    : mean_(std::move(mean)),
      basis_(std::move(basis)),
      variances_(std::move(variances)),
      retained_dim_(retained_dim) {}

double PcaModel::retained_variance_ratio() const {
  double total = 0.0, kept = 0.0;
  for (std::size_t i = 0; i < variances_.size(); ++i) {
    total += variances_[i];
    if (i < retained_dim_) kept += variances_[i];
  }
  return total > 0.0 ? kept / total : 1.0;
}

void PcaModel::project(std::span<const float> v, std::span<double> out) const {
  if (v.size() != input_dim()) {
    throw ShapeError("cannot project a vector of dim " +
                     std::to_string(v.size()) + " with a dim-" +
                     std::to_string(input_dim()) + " model");
  }
  for (std::size_t k = 0; k < retained_dim_; ++k) {
    const double* basis_row = basis_.data() + k * input_dim();
    double acc = 0.0;
    for (std::size_t j = 0; j < input_dim(); ++j) {
      acc += (static_cast<double>(v[j]) - mean_[j]) * basis_row[j];
    }
    out[k] = acc;
  }
}

std::vector<double> PcaModel::project(std::span<const float> v) const {
  std::vector<double> out(retained_dim_);
  project(v, out);
  return out;
}

PcaModel fit_pca(const NeighborhoodMatrix& points, double variance_target) {
  const std::size_t n = points.count();
  const std::size_t d = points.dim;
  if (n < 2) throw DomainError("PCA needs at least 2 points");
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw DomainError("variance target must be in (0, 1]");
  }

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = points.vec(static_cast<std::int32_t>(i));
    for (std::size_t j = 0; j < d; ++j) x(i, j) = row[j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;

  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw DomainError("eigendecomposition did not converge");
  }

  // Eigen returns ascending eigenvalues; we want them descending.
  std::vector<double> variances(d);
  double total = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    variances[k] = std::max(0.0, solver.eigenvalues()(d - 1 - k));
    total += variances[k];
  }

  std::size_t retained = 0;
  if (total > 0.0) {
    double cum = 0.0;
    for (retained = 1; retained <= d; ++retained) {
      cum += variances[retained - 1];
      if (cum >= variance_target * total) break;
    }
    retained = std::min(retained, d);
  }

  std::vector<double> basis(retained * d);
  for (std::size_t k = 0; k < retained; ++k) {
    Eigen::VectorXd comp = solver.eigenvectors().col(d - 1 - k);
    // Deterministic sign: the largest-magnitude entry is positive.
    Eigen::Index arg = 0;
    comp.cwiseAbs().maxCoeff(&arg);
    if (comp(arg) < 0.0) comp = -comp;
    for (std::size_t j = 0; j < d; ++j) basis[k * d + j] = comp(j);
  }

  return PcaModel(std::vector<double>(mean.data(), mean.data() + d),
                  std::move(basis), std::move(variances), retained);
}

ProjectedMatrix project_all(const PcaModel& model, const NeighborhoodMatrix& points) {
  ProjectedMatrix out;
  out.dim = model.retained_dim();
  out.count = points.count();
  out.data.resize(out.dim * out.count);
  for (std::size_t i = 0; i < out.count; ++i) {
    model.project(points.vec(static_cast<std::int32_t>(i)),
                  {out.data.data() + i * out.dim, out.dim});
  }
  return out;
}

}  // namespace persyn
