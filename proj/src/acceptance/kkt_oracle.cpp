#include <Eigen/Dense>

#include "tsd/acceptance.hpp"

namespace tsd {

DenseNewtonStep dense_extrapolation_step(const TwoStageProblem& p, const FullPrimalDual& w,
                                         double mu_next, const std::vector<int>& active) {
  const int N = p.num_subproblems(), n0 = p.n0, na = static_cast<int>(active.size());
  std::vector<int> off(N + 1);
  off[0] = n0 + na;
  for (int i = 0; i < N; ++i) off[i + 1] = off[i] + w.v[i].size();
  const int dim = off[N];
  Mat K = Mat::Zero(dim, dim);
  Vec r = Vec::Zero(dim);

  Mat W0 = p.master->hessian(w.x);
  Vec grad = p.master->gradient(w.x);
  Mat J0(0, n0);
  Vec c0(0);
  if (p.m0) {
    W0 += p.master->constraint_hessian(w.x, w.lambda0);
    J0 = p.master->jacobian(w.x);
    c0 = p.master->constraints(w.x);
    grad += J0.transpose() * w.lambda0;
  }
  symmetrize(W0);
  K.topLeftCorner(n0, n0) = W0;
  r.head(n0) = -grad;
  std::vector<bool> is_active(p.m0, false);
  for (int a = 0; a < na; ++a) {
    const int j = active[a];
    is_active[j] = true;
    K.block(0, n0 + a, n0, 1) = J0.row(j).transpose();
    K.block(n0 + a, 0, 1, n0) = J0.row(j);
    r[n0 + a] = -c0[j];
  }
  for (int j = 0; j < p.m0; ++j)
    if (!is_active[j]) r.head(n0) += J0.row(j).transpose() * w.lambda0[j];

  for (int i = 0; i < N; ++i) {
    const auto& d = p.subproblems[i];
    const int n = d.n, nc = d.nc(), m = d.m, o = off[i], dimi = w.v[i].size();
    K.block(o, o, dimi, dimi) = dense_subproblem_jacobian(d, w.v[i]);
    r.segment(o, dimi) = -kkt_residual(d, w.v[i], w.x, mu_next).stacked();
    // copy rows: xt - P x; master stationarity: -P' eta
    for (int j = 0; j < nc; ++j) {
      const int col = d.projection[j];
      K(o + n + nc + 2 * m + j, col) -= 1.0;
      K(col, o + n + nc + 2 * m + j) -= 1.0;
      r[col] += w.v[i].eta[j];
    }
  }

  DenseNewtonStep out;
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible()) return out;
  const Vec d = lu.solve(r);
  out.ok = d.allFinite();
  out.dx = d.head(n0);
  out.dlambda0 = -w.lambda0;
  for (int a = 0; a < na; ++a) out.dlambda0[active[a]] = d[n0 + a];
  for (int i = 0; i < N; ++i) out.dv.push_back(d.segment(off[i], w.v[i].size()));
  return out;
}

}  // namespace tsd
