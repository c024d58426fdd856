#pragma once

#include <span>
#include <vector>

#include "persyn/neighborhood.hpp"

namespace persyn {

// Principal component basis over a set of neighborhood vectors.
// Components are orthonormal, ordered by descending explained variance,
// and sign-fixed so every component's largest-magnitude entry is
// positive. retained_dim is the smallest prefix reaching the variance
// target; it is 0 when the data has no variance at all.
class PcaModel {
 public:
  PcaModel() = default;
  PcaModel(std::vector<double> mean, std::vector<double> basis,
           std::vector<double> variances, std::size_t retained_dim);

  std::size_t input_dim() const { return mean_.size(); }
  std::size_t retained_dim() const { return retained_dim_; }

  std::span<const double> mean() const { return mean_; }
  // Full eigen-spectrum, descending, including the non-retained tail.
  std::span<const double> variances() const { return variances_; }
  std::span<const double> component(std::size_t k) const {
    return {basis_.data() + k * input_dim(), input_dim()};
  }

  double retained_variance_ratio() const;

  // Coordinates of (v - mean) on the retained basis.
  void project(std::span<const float> v, std::span<double> out) const;
  std::vector<double> project(std::span<const float> v) const;

 private:
  std::vector<double> mean_;
  std::vector<double> basis_;  // retained_dim x input_dim, row-major
  std::vector<double> variances_;
  std::size_t retained_dim_ = 0;
};

PcaModel fit_pca(const NeighborhoodMatrix& points, double variance_target = 0.95);

// Flat row-major matrix of projected points.
struct ProjectedMatrix {
  std::size_t dim = 0;
  std::size_t count = 0;
  std::vector<double> data;

  std::span<const double> row(std::int32_t i) const {
    return {data.data() + static_cast<std::size_t>(i) * dim, dim};
  }
};

ProjectedMatrix project_all(const PcaModel& model, const NeighborhoodMatrix& points);

}  // namespace persyn
