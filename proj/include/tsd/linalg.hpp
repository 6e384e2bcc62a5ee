#pragma once

#include <span>

#include <Eigen/Dense>

namespace tsd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::span<const double> view(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}
inline std::span<double> view_mut(Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace tsd
