#include "tsd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace tsd::kernels::scalar {

double max_step(std::span<const double> x, std::span<const double> dx, double tau) {
  double a = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (dx[i] < 0.0) a = std::min(a, (tau * x[i]) / (-dx[i]));
  }
  return a;
}

void complementarity(std::span<const double> s, std::span<const double> lam, double mu,
                     std::span<double> out) {
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * lam[i] - mu;
}

void minmax_complementarity(std::span<const double> s, std::span<const double> lam,
                            std::span<double> out) {
  for (std::size_t i = 0; i < s.size(); ++i)
    out[i] = std::max(std::max(std::min(s[i], lam[i]), -s[i]), -lam[i]);
}

void ratio(std::span<const double> lam, std::span<const double> s, std::span<double> out) {
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = lam[i] / s[i];
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

}  // namespace tsd::kernels::scalar
