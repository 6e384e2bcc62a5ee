#include "tsd/monolithic.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tsd/kernels.hpp"
#include "tsd/subsolver.hpp"

namespace tsd {

namespace {

// Iterate over all rows: master rows first, then subproblem i's rows.
struct Point {
  Vec x;
  std::vector<Vec> y;
  Vec s0, l0;
  std::vector<Vec> s, l;
};

struct Block {
  Vec c, gy, gx;
  Mat Jy, Jx;
  Mat Hyy, Hyx, Hxx;
};

struct Derivs {
  double f = 0.0;
  Vec g0;
  Vec c0;
  Mat J0, H0;
  std::vector<Block> b;
};

struct Direction {
  Vec dx;
  std::vector<Vec> dy;
  Vec ds0, dl0;
  std::vector<Vec> ds, dl;
};

class Ipm {
 public:
  Ipm(const TwoStageProblem& p, const MonolithicOptions& o) : P(p), o(o), N(p.num_subproblems()) {}

  MonolithicResult solve(const Vec& x0, const std::vector<Vec>& y0);

 private:
  const TwoStageProblem& P;
  const MonolithicOptions& o;
  const int N;
  double mu_s = 0.0, mu_m = 0.0;
  double delta_last = 0.0;
  int corrections = 0;
  std::vector<std::pair<double, double>> filter;

  Vec xt(int i, const Vec& x) const { return P.subproblems[i].project(x); }

  double objective(const Point& z) const {
    double f = P.master->objective(z.x);
    for (int i = 0; i < N; ++i) f += P.subproblems[i].fn->objective(z.y[i], xt(i, z.x));
    return f;
  }

  // theta = ||c + s||_1, phi = f - sum mu ln s; infinite if a value is not finite
  std::pair<double, double> measures(const Point& z) const {
    double th = 0.0, ph = objective(z);
    if (P.m0) {
      th += (P.master->constraints(z.x) + z.s0).lpNorm<1>();
      ph -= mu_m * z.s0.array().log().sum();
    }
    for (int i = 0; i < N; ++i) {
      const auto& d = P.subproblems[i];
      th += (d.fn->constraints(z.y[i], xt(i, z.x)) + z.s[i]).lpNorm<1>();
      ph -= mu_s * z.s[i].array().log().sum();
    }
    if (!std::isfinite(th) || !std::isfinite(ph)) return {INFINITY, INFINITY};
    return {th, ph};
  }

  Derivs derivs(const Point& z) const {
    Derivs D;
    D.g0 = P.master->gradient(z.x);
    D.H0 = P.master->hessian(z.x);
    if (P.m0) {
      D.c0 = P.master->constraints(z.x);
      D.J0 = P.master->jacobian(z.x);
      D.H0 += P.master->constraint_hessian(z.x, z.l0);
    }
    symmetrize(D.H0);
    D.b.resize(N);
    for (int i = 0; i < N; ++i) {
      const auto& d = P.subproblems[i];
      const int n = d.n, nc = d.nc();
      const Vec t = xt(i, z.x);
      Block& B = D.b[i];
      const Vec g = d.fn->gradient(z.y[i], t);
      Mat H = d.fn->hessian(z.y[i], t);
      if (d.m) H += d.fn->constraint_hessian(z.y[i], t, z.l[i]);
      symmetrize(H);
      const Mat J = d.fn->jacobian(z.y[i], t);
      B.c = d.fn->constraints(z.y[i], t);
      B.gy = g.head(n);
      B.gx = Vec::Zero(P.n0);
      d.scatter_add(Vec(g.tail(nc)), B.gx);
      B.Jy = J.leftCols(n);
      B.Jx = Mat::Zero(d.m, P.n0);
      for (int j = 0; j < nc; ++j) B.Jx.col(d.projection[j]) += J.col(n + j);
      B.Hyy = H.topLeftCorner(n, n);
      B.Hyx = Mat::Zero(n, P.n0);
      for (int j = 0; j < nc; ++j) B.Hyx.col(d.projection[j]) += H.col(n + j).head(n);
      B.Hxx = Mat::Zero(P.n0, P.n0);
      d.scatter_add(Mat(H.bottomRightCorner(nc, nc)), B.Hxx);
    }
    return D;
  }

  // Stationarity of the Lagrangian in (x, y_i).
  std::pair<Vec, std::vector<Vec>> grad_lagrangian(const Derivs& D, const Point& z) const {
    Vec gx = D.g0;
    if (P.m0) gx += D.J0.transpose() * z.l0;
    std::vector<Vec> gy(N);
    for (int i = 0; i < N; ++i) {
      const Block& B = D.b[i];
      gx += B.gx;
      gy[i] = B.gy;
      if (B.c.size()) {
        gx += B.Jx.transpose() * z.l[i];
        gy[i] += B.Jy.transpose() * z.l[i];
      }
    }
    return {gx, gy};
  }

  double error(const Derivs& D, const Point& z) const {
    auto [gx, gy] = grad_lagrangian(D, z);
    double dual = gx.size() ? gx.lpNorm<Eigen::Infinity>() : 0.0;
    double prim = 0.0, comp = 0.0, lsum = 0.0;
    int m = 0;
    if (P.m0) {
      prim = std::max(prim, (D.c0 + z.s0).lpNorm<Eigen::Infinity>());
      comp = std::max(comp, (z.s0.cwiseProduct(z.l0).array() - mu_m).abs().maxCoeff());
      lsum += z.l0.lpNorm<1>();
      m += P.m0;
    }
    for (int i = 0; i < N; ++i) {
      if (gy[i].size()) dual = std::max(dual, gy[i].lpNorm<Eigen::Infinity>());
      if (!z.s[i].size()) continue;
      prim = std::max(prim, (D.b[i].c + z.s[i]).lpNorm<Eigen::Infinity>());
      comp = std::max(comp, (z.s[i].cwiseProduct(z.l[i]).array() - mu_s).abs().maxCoeff());
      lsum += z.l[i].lpNorm<1>();
      m += static_cast<int>(z.s[i].size());
    }
    const double sd = std::max(100.0, m ? lsum / m : 0.0) / 100.0;
    return std::max({dual / sd, prim, comp / sd});
  }

  // Newton direction with inertia correction; false if the shift hits its cap.
  bool direction(const Derivs& D, const Point& z, Direction& d) {
    const int n0 = P.n0;
    // reduced right-hand side r = -grad f - J'(mu/s + Sigma (c + s))
    Vec rx = -D.g0;
    Vec w0;
    if (P.m0) {
      const Vec sig = z.l0.cwiseQuotient(z.s0);
      w0 = (mu_m / z.s0.array()).matrix() + sig.cwiseProduct(D.c0 + z.s0);
      rx -= D.J0.transpose() * w0;
    }
    std::vector<Vec> ry(N), sig(N), wi(N);
    for (int i = 0; i < N; ++i) {
      const Block& B = D.b[i];
      rx -= B.gx;
      ry[i] = -B.gy;
      if (!B.c.size()) continue;
      sig[i] = z.l[i].cwiseQuotient(z.s[i]);
      wi[i] = (mu_s / z.s[i].array()).matrix() + sig[i].cwiseProduct(B.c + z.s[i]);
      rx -= B.Jx.transpose() * wi[i];
      ry[i] -= B.Jy.transpose() * wi[i];
    }
    Mat Mxx0 = D.H0;
    for (int i = 0; i < N; ++i) Mxx0 += D.b[i].Hxx;
    if (P.m0) Mxx0 += D.J0.transpose() * z.l0.cwiseQuotient(z.s0).asDiagonal() * D.J0;
    std::vector<Mat> Myy0(N), Myx(N);
    for (int i = 0; i < N; ++i) {
      const Block& B = D.b[i];
      Myy0[i] = B.Hyy;
      Myx[i] = B.Hyx;
      if (B.c.size()) {
        const Mat SJy = sig[i].asDiagonal() * B.Jy;
        Myy0[i] += B.Jy.transpose() * SJy;
        Myx[i] += SJy.transpose() * B.Jx;
        Mxx0 += B.Jx.transpose() * sig[i].asDiagonal() * B.Jx;
      }
    }

    double delta = 0.0;
    std::vector<Eigen::LLT<Mat>> llt(N);
    for (int attempt = 0; attempt < 60; ++attempt) {
      bool ok = true;
      Mat S = Mxx0;
      S.diagonal().array() += delta;
      Vec rhs = rx;
      std::vector<Mat> Yx(N);
      std::vector<Vec> Yr(N);
      for (int i = 0; i < N && ok; ++i) {
        Mat M = Myy0[i];
        M.diagonal().array() += delta;
        llt[i].compute(M);
        if (llt[i].info() != Eigen::Success) {
          ok = false;
          break;
        }
        Yx[i] = llt[i].solve(Myx[i]);
        Yr[i] = llt[i].solve(ry[i]);
        S.noalias() -= Myx[i].transpose() * Yx[i];
        rhs.noalias() -= Myx[i].transpose() * Yr[i];
      }
      Eigen::LLT<Mat> ls;
      if (ok && n0) {
        symmetrize(S);
        ls.compute(S);
        ok = ls.info() == Eigen::Success;
      }
      if (ok) {
        d.dx = n0 ? Vec(ls.solve(rhs)) : Vec(0);
        d.dy.resize(N);
        for (int i = 0; i < N; ++i) d.dy[i] = Yr[i] - Yx[i] * d.dx;
        if (!d.dx.allFinite()) ok = false;
        for (int i = 0; i < N && ok; ++i) ok = d.dy[i].allFinite();
      }
      if (ok) {
        if (delta > 0.0) {
          delta_last = delta;
          ++corrections;
        }
        break;
      }
      if (delta == 0.0)
        delta = delta_last > 0.0 ? std::max(1e-20, delta_last / 3.0) : 1e-4;
      else
        delta *= delta_last > 0.0 ? 8.0 : 100.0;
      if (delta > 1e40) return false;
    }

    if (P.m0) {
      d.ds0 = -(D.c0 + z.s0) - D.J0 * d.dx;
      d.dl0 = (mu_m / z.s0.array()).matrix() - z.l0 - z.l0.cwiseQuotient(z.s0).cwiseProduct(d.ds0);
    }
    d.ds.resize(N);
    d.dl.resize(N);
    for (int i = 0; i < N; ++i) {
      const Block& B = D.b[i];
      if (!B.c.size()) {
        d.ds[i].resize(0);
        d.dl[i].resize(0);
        continue;
      }
      d.ds[i] = -(B.c + z.s[i]) - B.Jy * d.dy[i] - B.Jx * d.dx;
      d.dl[i] = (mu_s / z.s[i].array()).matrix() - z.l[i] - sig[i].cwiseProduct(d.ds[i]);
    }
    return true;
  }

  static double ftb(const Vec& v, const Vec& dv, double tau) {
    return v.size() ? kernels::max_step(view(v), view(dv), tau) : 1.0;
  }

  Point step(const Point& z, const Direction& d, double a, double al) const {
    Point t = z;
    t.x += a * d.dx;
    for (int i = 0; i < N; ++i) {
      t.y[i] += a * d.dy[i];
      if (z.s[i].size()) {
        t.s[i] += a * d.ds[i];
        t.l[i] += al * d.dl[i];
      }
    }
    if (P.m0) {
      t.s0 += a * d.ds0;
      t.l0 += al * d.dl0;
    }
    return t;
  }

  void safeguard(Point& z) const {
    auto clip = [](Vec& l, const Vec& s, double mu) {
      l = l.cwiseMax((mu / (1e10 * s.array())).matrix()).cwiseMin((1e10 * mu / s.array()).matrix());
    };
    if (P.m0) clip(z.l0, z.s0, mu_m);
    for (int i = 0; i < N; ++i)
      if (z.s[i].size()) clip(z.l[i], z.s[i], mu_s);
  }

  double phi_slope(const Derivs& D, const Point& z, const Direction& d) const {
    double g = D.g0.dot(d.dx);
    if (P.m0) g -= mu_m * (d.ds0.array() / z.s0.array()).sum();
    for (int i = 0; i < N; ++i) {
      g += D.b[i].gx.dot(d.dx) + D.b[i].gy.dot(d.dy[i]);
      if (z.s[i].size()) g -= mu_s * (d.ds[i].array() / z.s[i].array()).sum();
    }
    return g;
  }

  bool filter_ok(double th, double ph) const {
    for (const auto& [ft, fp] : filter)
      if (th >= ft && ph >= fp) return false;
    return true;
  }
};

MonolithicResult Ipm::solve(const Vec& x0, const std::vector<Vec>& y0) {
  MonolithicResult res;
  Point z;
  z.x = x0;
  z.y = y0;
  const double final_m = P.m0 ? std::min(o.master_mu_floor, o.mu_target) : o.mu_target;
  double mu = std::max(o.mu0, o.mu_target);
  mu_s = std::max(mu, o.mu_target);
  mu_m = mu;
  if (P.m0) {
    z.s0 = (-P.master->constraints(z.x)).cwiseMax(1e-2);
    z.l0 = (mu_m / z.s0.array()).matrix();
  }
  z.s.resize(N);
  z.l.resize(N);
  for (int i = 0; i < N; ++i) {
    const auto& d = P.subproblems[i];
    if (d.m == 0) continue;
    z.s[i] = (-d.fn->constraints(z.y[i], xt(i, z.x))).cwiseMax(1e-2);
    z.l[i] = (mu_s / z.s[i].array()).matrix();
  }

  auto [th0, ph0] = measures(z);
  if (!std::isfinite(th0)) {
    res.message = "objective or constraints not finite at the starting point";
    return res;
  }
  double theta_max = 1e4 * std::max(1.0, th0), theta_min = 1e-4 * std::max(1.0, th0);
  filter.clear();
  filter.emplace_back(theta_max, -INFINITY);

  int it = 0;
  for (; it < o.max_iterations; ++it) {
    Derivs D = derivs(z);
    double E = error(D, z);
    const bool final = mu_m <= final_m && mu_s <= o.mu_target;
    if (final && E <= o.tolerance) {
      res.converged = true;
      res.residual = E;
      break;
    }
    // barrier problem solved: decrease mu (several times if already satisfied)
    bool reset = false;
    while (!(mu_m <= final_m && mu_s <= o.mu_target) && E <= std::max(o.kappa_eps * mu_m, o.tolerance)) {
      mu = std::max(final_m, std::min(o.cmu1 * mu, std::pow(mu, o.cmu2)));
      mu_m = mu;
      mu_s = std::max(mu, o.mu_target);
      E = error(D, z);
      reset = true;
    }
    if (reset) {
      filter.clear();
      filter.emplace_back(theta_max, -INFINITY);
      if (mu_m <= final_m && mu_s <= o.mu_target && E <= o.tolerance) {
        res.converged = true;
        res.residual = E;
        break;
      }
    }

    Direction d;
    if (!direction(D, z, d)) {
      res.message = "Newton matrix could not be regularized";
      res.residual = E;
      break;
    }
    const double tau = std::max(o.tau_min, 1.0 - mu_m);
    double amax = 1.0, almax = 1.0;
    if (P.m0) {
      amax = std::min(amax, ftb(z.s0, d.ds0, tau));
      almax = std::min(almax, ftb(z.l0, d.dl0, tau));
    }
    for (int i = 0; i < N; ++i) {
      if (!z.s[i].size()) continue;
      amax = std::min(amax, ftb(z.s[i], d.ds[i], tau));
      almax = std::min(almax, ftb(z.l[i], d.dl[i], tau));
    }

    const auto [th, ph] = measures(z);
    const double slope = phi_slope(D, z, d);
    double a = amax;
    bool accepted = false;
    for (int k = 0; k < 60 && a > 1e-14; ++k, a *= 0.5) {
      Point t = step(z, d, a, almax);
      const auto [tt, tp] = measures(t);
      if (!(tt <= theta_max) || !filter_ok(tt, tp)) continue;
      const bool switching =
          slope < 0.0 && a * std::pow(-slope, 2.3) > std::pow(th, 1.1) && th <= theta_min;
      if (switching) {
        if (tp <= ph + 1e-4 * a * slope) {
          z = std::move(t);
          accepted = true;
          break;
        }
        continue;
      }
      if (tt <= (1.0 - 1e-5) * th || tp <= ph - 1e-5 * th) {
        filter.emplace_back((1.0 - 1e-5) * th, ph - 1e-5 * th);
        z = std::move(t);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // take a short step on the primal-dual direction and restart the filter
      z = step(z, d, std::min(amax, 1e-2), std::min(almax, 1e-2));
      filter.clear();
      filter.emplace_back(theta_max, -INFINITY);
    }
    safeguard(z);
  }
  res.iterations = it;
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.inertia_corrections = corrections;
  res.x = z.x;
  res.y = z.y;
  res.s = z.s;
  res.lambda = z.l;
  res.lambda0 = P.m0 ? z.l0 : Vec(0);
  res.objective = objective(z);
  if (!res.converged && res.residual == 0.0) res.residual = error(derivs(z), z);
  return res;
}

}  // namespace

MonolithicResult solve_monolithic(const TwoStageProblem& problem, const Vec& x0,
                                  const std::vector<Vec>& y0, const MonolithicOptions& opts) {
  problem.validate();
  if (x0.size() != problem.n0) throw ModelError("x0 has the wrong dimension");
  if (static_cast<int>(y0.size()) != problem.num_subproblems())
    throw ModelError("one starting y per subproblem is required");
  Ipm ipm(problem, opts);
  return ipm.solve(x0, y0);
}

MonolithicResult solve_monolithic(const TwoStageProblem& problem, const Vec& x0,
                                  const MonolithicOptions& opts) {
  std::vector<Vec> y0;
  for (const auto& d : problem.subproblems) y0.push_back(cold_start(d, x0, opts.mu0).y);
  return solve_monolithic(problem, x0, y0, opts);
}

std::vector<Vec> subproblem_starts(const TwoStageProblem& problem, const Vec& x0, double mu) {
  std::vector<Vec> y0;
  SubsolverOptions so;
  so.tolerance = SubsolverOptions::tolerance_for(mu, 0.1);
  for (const auto& d : problem.subproblems) {
    const SolveResult r = solve_subproblem(d, x0, mu, std::nullopt, so);
    y0.push_back(r.status == SolveStatus::Converged ? r.state.y : cold_start(d, x0, mu).y);
  }
  return y0;
}

}  // namespace tsd
