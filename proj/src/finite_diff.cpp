#include "tsd/finite_diff.hpp"

#include <cmath>
#include <string>

namespace tsd {

double default_fd_step(const Vec& x) {
  return 1e-6 * (1.0 + (x.size() ? x.lpNorm<Eigen::Infinity>() : 0.0));
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (h <= 0.0) h = default_fd_step(x);
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    const double fp = f(xp);
    xp[k] = x[k] - h;
    const double fm = f(xp);
    xp[k] = x[k];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw FiniteDiffError("non-finite function value when perturbing component " +
                                std::to_string(k),
                            static_cast<int>(k));
    }
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat finite_diff_jacobian(const std::function<Vec(const Vec&)>& g, const Vec& x, double h) {
  if (h <= 0.0) h = default_fd_step(x);
  Mat J;
  Vec xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    const Vec gp = g(xp);
    xp[k] = x[k] - h;
    const Vec gm = g(xp);
    xp[k] = x[k];
    if (!gp.allFinite() || !gm.allFinite()) {
      throw FiniteDiffError("non-finite value when perturbing component " + std::to_string(k),
                            static_cast<int>(k));
    }
    if (k == 0) J.resize(gp.size(), x.size());
    J.col(k) = (gp - gm) / (2.0 * h);
  }
  return J;
}

}  // namespace tsd
