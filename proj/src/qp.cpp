#include "tsd/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tsd/kernels.hpp"

namespace tsd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct NewtonSolve {
  Vec dz, dw, du;
};

}  // namespace

DenseQpResult solve_dense_qp(const DenseQp& qp, const DenseQpOptions& opts) {
  const int nz = static_cast<int>(qp.h.size());
  const int mr = static_cast<int>(qp.b.size());
  if (qp.G.rows() != nz || qp.G.cols() != nz || qp.A.rows() != mr || (mr && qp.A.cols() != nz))
    throw QpError("dense QP dimensions are inconsistent");
  DenseQpResult res;
  const double scale_d = 1.0 + qp.h.lpNorm<Eigen::Infinity>();
  const double scale_p = 1.0 + (mr ? qp.b.lpNorm<Eigen::Infinity>() : 0.0);

  if (mr == 0) {
    Eigen::LDLT<Mat> ldlt(qp.G);
    res.z = ldlt.solve(-qp.h);
    res.u.resize(0);
    res.w.resize(0);
    res.residual = (qp.G * res.z + qp.h).lpNorm<Eigen::Infinity>() / scale_d;
    res.converged = ldlt.info() == Eigen::Success && ldlt.isPositive() && res.z.allFinite() &&
                    res.residual <= opts.tolerance;
    return res;
  }

  Vec z = Vec::Zero(nz);
  Vec w = (qp.b - qp.A * z).cwiseMax(1.0);
  Vec u = Vec::Ones(mr);
  double best = kInf;

  auto newton = [&](const Eigen::LDLT<Mat>& K, const Vec& rd, const Vec& rp, const Vec& rc) {
    NewtonSolve s;
    const Vec tmp = (-rc.array() + u.array() * rp.array()) / w.array();
    s.dz = K.solve(-rd - qp.A.transpose() * tmp);
    s.dw = -rp - qp.A * s.dz;
    s.du = (-rc.array() - u.array() * s.dw.array()) / w.array();
    return s;
  };

  for (int it = 0;; ++it) {
    const Vec rd = qp.G * z + qp.h + qp.A.transpose() * u;
    const Vec rp = qp.A * z + w - qp.b;
    const double gap = w.dot(u) / mr;
    const double r = std::max({rd.lpNorm<Eigen::Infinity>() / scale_d,
                               rp.lpNorm<Eigen::Infinity>() / scale_p, gap / scale_d});
    if (std::isfinite(r) && r < best) {
      best = r;
      res.z = z;
      res.u = u;
      res.w = w;
      res.residual = r;
      res.iterations = it;
    }
    if (r <= opts.tolerance) break;
    if (it >= opts.max_iterations || !std::isfinite(r)) break;

    const Vec D = u.array() / w.array();
    Mat K = qp.G + qp.A.transpose() * D.asDiagonal() * qp.A;
    Eigen::LDLT<Mat> ldlt(K);
    if (ldlt.info() != Eigen::Success) {
      K.diagonal().array() += 1e-12 * (1.0 + K.diagonal().cwiseAbs().maxCoeff());
      ldlt.compute(K);
    }
    const Vec rc_aff = w.cwiseProduct(u);
    const NewtonSolve aff = newton(ldlt, rd, rp, rc_aff);
    const double a_aff = std::min(kernels::max_step(view(w), view(aff.dw), 1.0),
                                  kernels::max_step(view(u), view(aff.du), 1.0));
    const double mu_aff =
        (w + a_aff * aff.dw).dot(u + a_aff * aff.du) / mr;
    const double sigma = std::pow(std::max(mu_aff, 0.0) / gap, 3);
    const double tau = std::max(opts.tau, 1.0 - gap);
    // step length: fraction to the boundary, then stay in a wide
    // neighbourhood of the central path
    auto step_length = [&](const NewtonSolve& d) {
      double a = std::min(kernels::max_step(view(w), view(d.dw), tau),
                          kernels::max_step(view(u), view(d.du), tau));
      for (int k = 0; k < 30; ++k) {
        const Vec wu = (w + a * d.dw).cwiseProduct(u + a * d.du);
        if (wu.minCoeff() >= 1e-3 * wu.mean()) break;
        a *= 0.7;
      }
      return a;
    };
    auto merit_after = [&](const NewtonSolve& d, double a) {
      const Vec z1 = z + a * d.dz, w1 = w + a * d.dw, u1 = u + a * d.du;
      return std::max({(qp.G * z1 + qp.h + qp.A.transpose() * u1).lpNorm<Eigen::Infinity>() / scale_d,
                       (qp.A * z1 + w1 - qp.b).lpNorm<Eigen::Infinity>() / scale_p,
                       w1.dot(u1) / mr / scale_d});
    };
    const Vec rc = rc_aff + aff.dw.cwiseProduct(aff.du) - Vec::Constant(mr, std::min(sigma, 1.0) * gap);
    NewtonSolve step = newton(ldlt, rd, rp, rc);
    if (!step.dz.allFinite()) break;
    double alpha = step_length(step);
    double merit = merit_after(step, alpha);
    // without the second-order term, and a plain centring step
    for (double sc : {std::min(sigma, 1.0), 0.5}) {
      NewtonSolve c = newton(ldlt, rd, rp, rc_aff - Vec::Constant(mr, sc * gap));
      if (!c.dz.allFinite()) continue;
      const double ac = step_length(c);
      const double mc = merit_after(c, ac);
      if (mc < merit) {
        step = std::move(c);
        alpha = ac;
        merit = mc;
      }
    }
    z += alpha * step.dz;
    w += alpha * step.dw;
    u += alpha * step.du;
  }
  res.converged = res.residual <= opts.tolerance;
  return res;
}

void L1Qp::validate() const {
  const int n_ = n(), m_ = m();
  if (H.rows() != n_ || H.cols() != n_) throw QpError("QP Hessian has wrong shape");
  if (J.rows() != m_ || (m_ && J.cols() != n_)) throw QpError("QP Jacobian has wrong shape");
  if (!equality.empty() && static_cast<int>(equality.size()) != m_)
    throw QpError("QP equality flags have wrong length");
  if (!(penalty > 0.0)) throw QpError("QP penalty must be positive");
  if (radius && !(*radius > 0.0)) throw QpError("QP trust radius must be positive");
  if (!g.allFinite() || !H.allFinite() || !c.allFinite() || (m_ && !J.allFinite()))
    throw QpError("QP data is not finite");
  if ((H - H.transpose()).lpNorm<Eigen::Infinity>() >
      1e-10 * std::max(1.0, H.lpNorm<Eigen::Infinity>()))
    throw QpError("QP Hessian is not symmetric");
}

double L1Qp::violation(const Vec& p) const {
  if (m() == 0) return 0.0;
  const Vec v = J * p + c;
  double s = 0.0;
  for (int j = 0; j < m(); ++j) s += is_equality(j) ? std::abs(v[j]) : std::max(v[j], 0.0);
  return s;
}

double L1Qp::model(const Vec& p) const {
  return g.dot(p) + 0.5 * p.dot(H * p) + penalty * violation(p);
}

namespace {

// Elastic form over z = (p, tau); tau >= 0 rows only for inequality constraints.
struct Elastic {
  DenseQp qp;
  int n = 0, m = 0;
  std::vector<int> second_row;  // row of -(Jp + c) - tau <= 0 for equality j, else -1
  std::vector<int> tau_row;     // row of -tau <= 0 for inequality j, else -1
};

Elastic build_elastic(const L1Qp& q, const Mat& H, const Vec& g) {
  Elastic e;
  e.n = q.n();
  e.m = q.m();
  const int n = e.n, m = e.m, nz = n + m;
  int meq = 0;
  for (int j = 0; j < m; ++j) meq += q.is_equality(j);
  const int rows = m + meq + (m - meq) + (q.radius ? 2 * n : 0);
  e.qp.G = Mat::Zero(nz, nz);
  e.qp.G.topLeftCorner(n, n) = H;
  e.qp.h.resize(nz);
  e.qp.h << g, Vec::Constant(m, q.penalty);
  e.qp.A = Mat::Zero(rows, nz);
  e.qp.b = Vec::Zero(rows);
  e.second_row.assign(m, -1);
  e.tau_row.assign(m, -1);
  int r = 0;
  for (int j = 0; j < m; ++j, ++r) {
    e.qp.A.row(r).head(n) = q.J.row(j);
    e.qp.A(r, n + j) = -1.0;
    e.qp.b[r] = -q.c[j];
  }
  for (int j = 0; j < m; ++j) {
    if (q.is_equality(j)) {
      e.qp.A.row(r).head(n) = -q.J.row(j);
      e.qp.A(r, n + j) = -1.0;
      e.qp.b[r] = q.c[j];
      e.second_row[j] = r++;
    } else {
      e.qp.A(r, n + j) = -1.0;
      e.tau_row[j] = r++;
    }
  }
  if (q.radius) {
    for (int k = 0; k < n; ++k, ++r) {
      e.qp.A(r, k) = 1.0;
      e.qp.b[r] = *q.radius;
    }
    for (int k = 0; k < n; ++k, ++r) {
      e.qp.A(r, k) = -1.0;
      e.qp.b[r] = *q.radius;
    }
  }
  return e;
}

Vec row_to_lambda(const Elastic& e, const Vec& u) {
  Vec lam(e.m);
  for (int j = 0; j < e.m; ++j) {
    lam[j] = u[j];
    if (e.second_row[j] >= 0) lam[j] -= u[e.second_row[j]];
  }
  return lam;
}

// Exact KKT solve on the active rows of the elastic QP with the true Hessian.
std::optional<std::pair<Vec, Vec>> polish(const Elastic& e, const Mat& H,
                                          const std::vector<int>& active) {
  const int nz = e.n + e.m, na = static_cast<int>(active.size());
  Mat K = Mat::Zero(nz + na, nz + na);
  K.topLeftCorner(e.n, e.n) = H;
  Vec rhs(nz + na);
  rhs.head(nz) = -e.qp.h;
  for (int a = 0; a < na; ++a) {
    K.block(nz + a, 0, 1, nz) = e.qp.A.row(active[a]);
    K.block(0, nz + a, nz, 1) = e.qp.A.row(active[a]).transpose();
    rhs[nz + a] = e.qp.b[active[a]];
  }
  Eigen::FullPivLU<Mat> lu(K);
  lu.setThreshold(1e-13);
  if (!lu.isInvertible()) return std::nullopt;
  const Vec sol = lu.solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  const Vec z = sol.head(nz);
  Vec u = Vec::Zero(e.qp.b.size());
  for (int a = 0; a < na; ++a) u[active[a]] = sol[nz + a];

  const double feas_tol = 1e-11 * (1.0 + e.qp.b.lpNorm<Eigen::Infinity>() + z.lpNorm<Eigen::Infinity>());
  const double dual_tol = 1e-11 * (1.0 + e.qp.h.lpNorm<Eigen::Infinity>());
  if (((e.qp.A * z - e.qp.b).array() > feas_tol).any()) return std::nullopt;
  if ((u.array() < -dual_tol).any()) return std::nullopt;
  return std::make_pair(z, u.cwiseMax(0.0));
}

struct ConvexSolve {
  bool ok = false;
  Vec p;
  Vec lambda;
  Elastic e;
  DenseQpResult ipm;
};

ConvexSolve solve_convex(const L1Qp& q, const Mat& H, const Vec& g, double tol) {
  ConvexSolve cs;
  cs.e = build_elastic(q, H, g);
  cs.ipm = solve_dense_qp(cs.e.qp);
  cs.ok = cs.ipm.z.size() > 0 && cs.ipm.residual <= tol;
  if (cs.ipm.z.size()) {
    cs.p = cs.ipm.z.head(q.n());
    cs.lambda = cs.ipm.u.size() ? row_to_lambda(cs.e, cs.ipm.u) : Vec(Vec::Zero(q.m()));
  }
  return cs;
}

std::vector<int> active_rows(const DenseQpResult& r) {
  std::vector<int> act;
  for (int i = 0; i < r.u.size(); ++i)
    if (r.u[i] > r.w[i]) act.push_back(i);
  return act;
}

Vec elastic_values(const L1Qp& q, const Vec& p) {
  Vec t = Vec::Zero(q.m());
  if (q.m() == 0) return t;
  const Vec v = q.J * p + q.c;
  for (int j = 0; j < q.m(); ++j) t[j] = q.is_equality(j) ? std::abs(v[j]) : std::max(v[j], 0.0);
  return t;
}

std::vector<int> active_constraints(const L1Qp& q, const Vec& p) {
  std::vector<int> act;
  if (q.m() == 0) return act;
  const Vec v = q.J * p + q.c;
  for (int j = 0; j < q.m(); ++j)
    if (q.is_equality(j) || v[j] >= -1e-9 * (1.0 + std::abs(q.c[j]))) act.push_back(j);
  return act;
}

// Multipliers of the l1 terms read off the sign pattern at p.
Vec subgradient_lambda(const L1Qp& q, const Vec& p, const Vec& ambiguous) {
  Vec lam = Vec::Zero(q.m());
  if (q.m() == 0) return lam;
  const Vec v = q.J * p + q.c;
  for (int j = 0; j < q.m(); ++j) {
    const double tol = 1e-12 * (1.0 + std::abs(q.c[j]));
    if (v[j] > tol)
      lam[j] = q.penalty;
    else if (v[j] < -tol)
      lam[j] = q.is_equality(j) ? -q.penalty : 0.0;
    else
      lam[j] = ambiguous[j];
  }
  return lam;
}

QpSolution finalize(const L1Qp& q, Vec p, Vec lambda) {
  QpSolution s;
  s.t = elastic_values(q, p);
  s.active = active_constraints(q, p);
  s.decrease = std::max(q.decrease(p), 0.0);
  s.kkt_residual = l1qp_kkt_residual(q, p, lambda);
  s.p = std::move(p);
  s.lambda = std::move(lambda);
  return s;
}

// Exact minimizer over a >= 0 of the piecewise quadratic model along p0 + a d,
// within the trust box.
double line_minimize(const L1Qp& q, const Vec& p0, const Vec& d) {
  const int m = q.m();
  double amax = kInf;
  if (q.radius) {
    for (int k = 0; k < q.n(); ++k) {
      if (d[k] > 0.0) amax = std::min(amax, (*q.radius - p0[k]) / d[k]);
      if (d[k] < 0.0) amax = std::min(amax, (-*q.radius - p0[k]) / d[k]);
    }
    amax = std::max(amax, 0.0);
  }
  const Vec v0 = m ? Vec(q.J * p0 + q.c) : Vec();
  const Vec Jd = m ? Vec(q.J * d) : Vec();
  const double g0 = (q.g + q.H * p0).dot(d);
  std::vector<double> bps;
  for (int j = 0; j < m; ++j) {
    if (Jd[j] != 0.0) {
      const double a = -v0[j] / Jd[j];
      if (a > 0.0 && a < amax) bps.push_back(a);
    }
  }
  const double curv = d.dot(q.H * d);
  if (!std::isfinite(amax)) {
    // unbounded line search only makes sense with positive curvature
    double far = 1.0;
    for (double a : bps) far = std::max(far, 2.0 * a);
    if (curv > 0.0) far = std::max(far, 2.0 * (std::abs(g0) + q.penalty * Jd.cwiseAbs().sum()) / curv);
    amax = far;
  }
  bps.push_back(0.0);
  bps.push_back(amax);
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  std::vector<double> cand = bps;
  for (size_t k = 0; k + 1 < bps.size(); ++k) {
    const double mid = 0.5 * (bps[k] + bps[k + 1]);
    double lin = g0;
    for (int j = 0; j < m; ++j) {
      const double v = v0[j] + mid * Jd[j];
      if (v > 0.0)
        lin += q.penalty * Jd[j];
      else if (q.is_equality(j) && v < 0.0)
        lin -= q.penalty * Jd[j];
    }
    if (curv > 0.0) {
      const double a = -lin / curv;
      if (a > bps[k] && a < bps[k + 1]) cand.push_back(a);
    }
  }
  double best_a = 0.0, best_m = q.model(p0);
  for (double a : cand) {
    const double val = q.model(p0 + a * d);
    if (val < best_m || (val == best_m && a < best_a)) {
      best_m = val;
      best_a = a;
    }
  }
  return best_a;
}

}  // namespace

double l1qp_kkt_residual(const L1Qp& q, const Vec& p, const Vec& lambda) {
  const int n = q.n(), m = q.m();
  Vec r = q.g + q.H * p;
  if (m) r += q.J.transpose() * lambda;
  double res = 0.0;
  for (int k = 0; k < n; ++k) {
    double rk = std::abs(r[k]);
    if (q.radius) {
      const double btol = 1e-9 * (1.0 + *q.radius);
      if (p[k] >= *q.radius - btol) rk = std::max(r[k], 0.0);
      if (p[k] <= -*q.radius + btol) rk = std::max(-r[k], 0.0);
    }
    res = std::max(res, rk);
  }
  if (m) {
    const Vec v = q.J * p + q.c;
    for (int j = 0; j < m; ++j) {
      const double lo = q.is_equality(j) ? -q.penalty : 0.0;
      const double tol = 1e-9 * (1.0 + std::abs(q.c[j]));
      double rj;
      if (v[j] > tol)
        rj = std::abs(lambda[j] - q.penalty);
      else if (v[j] < -tol)
        rj = std::abs(lambda[j] - lo);
      else
        rj = std::max({lo - lambda[j], lambda[j] - q.penalty, 0.0});
      res = std::max(res, rj);
    }
  }
  return res;
}

QpSolution cauchy_step(const L1Qp& q) {
  q.validate();
  const int n = q.n(), m = q.m();
  // Minimum-norm element of the subdifferential at p = 0.
  Vec gt = q.g;
  std::vector<int> zero_rows;
  for (int j = 0; j < m; ++j) {
    const double tol = 1e-12 * (1.0 + q.J.row(j).lpNorm<Eigen::Infinity>());
    if (q.c[j] > tol)
      gt += q.penalty * q.J.row(j).transpose();
    else if (q.c[j] < -tol) {
      if (q.is_equality(j)) gt -= q.penalty * q.J.row(j).transpose();
    } else {
      zero_rows.push_back(j);
    }
  }
  Vec xi = Vec::Zero(m);
  Vec d = -gt;
  if (!zero_rows.empty()) {
    const int nzr = static_cast<int>(zero_rows.size());
    Mat JZ(nzr, n);
    Vec lo(nzr), hi(nzr);
    for (int a = 0; a < nzr; ++a) {
      JZ.row(a) = q.J.row(zero_rows[a]);
      lo[a] = q.is_equality(zero_rows[a]) ? -q.penalty : 0.0;
      hi[a] = q.penalty;
    }
    DenseQp ls;
    ls.G = JZ * JZ.transpose();
    ls.h = JZ * gt;
    ls.A.resize(2 * nzr, nzr);
    ls.A << Mat::Identity(nzr, nzr), -Mat::Identity(nzr, nzr);
    ls.b.resize(2 * nzr);
    ls.b << hi, -lo;
    const DenseQpResult r = solve_dense_qp(ls);
    const Vec sol = r.z.cwiseMax(lo).cwiseMin(hi);
    for (int a = 0; a < nzr; ++a) xi[zero_rows[a]] = sol[a];
    d = -(gt + JZ.transpose() * sol);
  }

  Vec p = Vec::Zero(n);
  const double dn = d.lpNorm<Eigen::Infinity>();
  if (dn > 1e-15 * (1.0 + q.g.lpNorm<Eigen::Infinity>())) {
    p = line_minimize(q, p, d) * d;
    if (q.radius) p = p.cwiseMax(-*q.radius).cwiseMin(*q.radius);
  }
  QpSolution s = finalize(q, p, subgradient_lambda(q, p, xi));
  s.message = "cauchy";
  return s;
}

QpSolution solve_l1qp(const L1Qp& q, const QpOptions& opts) {
  q.validate();
  const int n = q.n();
  const QpSolution cauchy = cauchy_step(q);

  double lmin = 0.0;
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(q.H, Eigen::EigenvaluesOnly);
    lmin = es.eigenvalues()[0];
  }
  const double hscale = std::max(1.0, q.H.lpNorm<Eigen::Infinity>());
  const bool convex = lmin >= -1e-12 * hscale;

  std::optional<ConvexSolve> last;
  Vec p;
  bool failed = false;
  int iterations = 0;
  double delta = 0.0;
  if (convex) {
    last = solve_convex(q, q.H, q.g, opts.tolerance);
    iterations = last->ipm.iterations;
    failed = !last->ok;
    if (!failed) p = last->p;
  } else {
    delta = opts.delta_start;
    while (true) {
      Eigen::LLT<Mat> llt(q.H + delta * Mat::Identity(n, n));
      if (llt.info() == Eigen::Success) break;
      delta *= opts.delta_factor;
    }
    // a loose shift makes the proximal iteration crawl; narrow the bracket
    double lo = delta / opts.delta_factor;
    for (int k = 0; k < 30 && delta > lo * (1.0 + 1e-3); ++k) {
      const double mid = std::sqrt(lo * delta);
      Eigen::LLT<Mat> llt(q.H + mid * Mat::Identity(n, n));
      (llt.info() == Eigen::Success ? delta : lo) = mid;
    }
    delta *= 1.2;
    // proximal point iterations from the Cauchy point
    const Mat Hd = q.H + delta * Mat::Identity(n, n);
    p = cauchy.p;
    for (int k = 0; k < opts.prox_max_iterations; ++k) {
      ConvexSolve cs = solve_convex(q, Hd, q.g - delta * p, opts.tolerance);
      iterations += cs.ipm.iterations;
      if (!cs.ok) {
        failed = true;
        break;
      }
      const double step = (cs.p - p).lpNorm<Eigen::Infinity>();
      const Vec d = cs.p - p;
      p = cs.p;
      last = std::move(cs);
      if (step <= opts.prox_step_tolerance) break;
      // extrapolate along the proximal step, which otherwise crawls along
      // directions of negative curvature
      p += line_minimize(q, p, d) * d;
      if (q.radius) p = p.cwiseMax(-*q.radius).cwiseMin(*q.radius);
    }
    if (!last) failed = true;
  }

  if (failed) {
    QpSolution s = cauchy;
    s.fallback = true;
    s.convexified = !convex;
    s.iterations = iterations;
    s.message = "QP iteration failed; Cauchy step returned";
    return s;
  }

  Vec lambda = last->lambda;
  if (opts.polish) {
    const auto act = active_rows(last->ipm);
    const Elastic e = build_elastic(q, q.H, q.g);
    if (auto pol = polish(e, q.H, act)) {
      const Vec pp = pol->first.head(n);
      const double tol = 1e-12 * (1.0 + std::abs(q.model(p)));
      if (q.model(pp) <= q.model(p) + tol) {
        p = pp;
        lambda = row_to_lambda(e, pol->second);
      }
    }
  }
  if (q.radius) p = p.cwiseMax(-*q.radius).cwiseMin(*q.radius);

  if (cauchy.decrease > q.decrease(p) + 1e-12 * (1.0 + std::abs(q.model(p)))) {
    QpSolution s = cauchy;
    s.convexified = !convex;
    s.iterations = iterations;
    s.message = "Cauchy step dominates";
    return s;
  }
  QpSolution s = finalize(q, std::move(p), std::move(lambda));
  s.convexified = !convex;
  s.iterations = iterations;
  return s;
}

}  // namespace tsd
