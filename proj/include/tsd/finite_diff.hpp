#pragma once

#include <functional>
#include <stdexcept>

#include "tsd/linalg.hpp"

namespace tsd {

class FiniteDiffError : public std::runtime_error {
 public:
  FiniteDiffError(const std::string& what, int component)
      : std::runtime_error(what), component_(component) {}
  int component() const { return component_; }

 private:
  int component_;
};

/// h = 1e-6 * (1 + |x|_inf)
double default_fd_step(const Vec& x);

/// Central differences. h <= 0 selects default_fd_step(x).
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                         double h = 0.0);

/// Column k holds the central difference of g along e_k.
Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& g, const Vec& x, double h = 0.0);

}  // namespace tsd
