#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>

#include <Eigen/Dense>

#include "tsd/benchgen.hpp"

namespace tsd {

namespace {

constexpr double kMergeTol = 1e-6;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Point {
  bool ok = false;
  double x = 0.0;
  SubproblemState st;
};

struct Tracer {
  const SubproblemDef& def;
  double mu;
  CurveQuantity quantity;
  SubsolverOptions newton;
  SubsolverOptions minimizer;

  Tracer(const SubproblemDef& d, double m, CurveQuantity q) : def(d), mu(m), quantity(q) {
    newton.seek_minimizer = false;
    newton.tolerance = 1e-12;
    newton.max_iterations = 100;
    minimizer.tolerance = 1e-12;
  }

  static Vec at(double x) { return Vec::Constant(1, x); }

  Point solve(double x, const std::optional<SubproblemState>& warm,
              const SubsolverOptions& o) const {
    Point p;
    p.x = x;
    SolveResult r = solve_subproblem(def, at(x), mu, warm, o);
    p.ok = r.status == SolveStatus::Converged;
    p.st = std::move(r.state);
    return p;
  }

  CurveRow row(const Point& p, int branch) const {
    CurveRow r;
    r.branch = branch;
    r.mu = mu;
    r.x = p.x;
    r.converged = p.ok;
    if (!p.ok) {
      r.value = r.y = r.sigma_min = r.lambda_min = kNaN;
      return r;
    }
    r.y = p.st.y[0];
    r.value = quantity == CurveQuantity::ObjectiveSmoothing
                  ? barrier_value(def, p.st, mu)
                  : def.fn->objective(p.st.y, p.st.x_copy);
    const NondegeneracyReport nd = check_nondegeneracy(def, p.st, at(p.x));
    r.sigma_min = nd.sigma_min;
    r.lambda_min = nd.lambda_min;
    r.degenerate = !nd.nondegenerate;
    return r;
  }

  double lambda_min(const Point& p) const {
    return check_nondegeneracy(def, p.st, at(p.x)).lambda_min;
  }

  /// Multistart at x: uniform starts across the declared box (or [-4, 4]
  /// where unbounded), solved as plain Newton and as minimizer search.
  std::vector<Point> seeds(double x, int count) const {
    std::vector<Point> out;
    for (const SubsolverOptions* o : {&newton, &minimizer}) {
      for (int k = 0; k < count; ++k) {
        SubproblemState st = cold_start(def, at(x), mu);
        for (int j = 0; j < def.n; ++j) {
          double lo = def.lower[j], hi = def.upper[j];
          if (!std::isfinite(lo) && !std::isfinite(hi)) lo = -4.0, hi = 4.0;
          else if (!std::isfinite(lo)) lo = hi - 8.0;
          else if (!std::isfinite(hi)) hi = lo + 8.0;
          st.y[j] = lo + (k + 0.5) * (hi - lo) / count;
        }
        const Vec c = def.fn->constraints(st.y, st.x_copy);
        for (int j = 0; j < def.m; ++j) {
          st.s[j] = std::max(1.0, -c[j] + 1.0);
          st.lambda[j] = mu / st.s[j];
        }
        Point p = solve(x, st, *o);
        if (!p.ok) continue;
        bool dup = false;
        for (const auto& q : out) dup |= (q.st.y - p.st.y).lpNorm<Eigen::Infinity>() <= kMergeTol;
        if (!dup) out.push_back(std::move(p));
      }
    }
    std::sort(out.begin(), out.end(), [](const Point& a, const Point& b) { return a.st.y[0] < b.st.y[0]; });
    return out;
  }

  /// Continuation step from p to x with an Euler predictor. A converged
  /// point far from the prediction counts as a jump to another branch.
  Point advance(const Point& p, double x) const {
    const double dx = x - p.x;
    SubproblemState warm = p.st;
    Vec ypred = p.st.y;
    if (auto f = factor_at(def, p.st, newton); f && !f->singular()) {
      const Vec dv = f->copy_sensitivity().col(0) * dx;
      SubproblemState pred = SubproblemState::unpack(p.st.pack() + dv, def.n, def.nc(), def.m);
      if (pred.positive()) warm = pred;
      ypred = pred.y;
    }
    Point q = solve(x, warm, newton);
    const double moved = (ypred - p.st.y).lpNorm<Eigen::Infinity>();
    if (q.ok && (q.st.y - ypred).lpNorm<Eigen::Infinity>() > std::max(0.05, 2.0 * moved)) q.ok = false;
    return q;
  }

  /// advance with step halving; a branch is lost only when the step to x
  /// fails at every subdivision depth.
  Point advance_adaptive(const Point& p, double x, int depth = 0) const {
    Point q = advance(p, x);
    if (q.ok || depth == 10) return q;
    Point mid = advance_adaptive(p, 0.5 * (p.x + x), depth + 1);
    if (!mid.ok) return mid;
    return advance_adaptive(mid, x, depth + 1);
  }

  /// Bisection in x between two converged points whose reduced Hessians have
  /// opposite signs.
  Point bisect_sign(const Point& a, const Point& b) const {
    Point lo = a, hi = b;
    const double sa = lambda_min(a);
    for (int it = 0; it < 60 && std::abs(hi.x - lo.x) > 1e-14 * (1.0 + std::abs(lo.x)); ++it) {
      Point m = solve(0.5 * (lo.x + hi.x), lo.st, newton);
      if (!m.ok) break;
      (lambda_min(m) * sa > 0 ? lo : hi) = m;
    }
    return std::abs(lambda_min(lo)) <= std::abs(lambda_min(hi)) ? lo : hi;
  }

  // Pseudo-arclength continuation in u = (v, x) past the last converged
  // point, used to locate a fold where x-continuation loses the branch.

  Vec residual(const Vec& u) const {
    const int D = static_cast<int>(u.size()) - 1;
    const SubproblemState st = SubproblemState::unpack(u.head(D), def.n, def.nc(), def.m);
    return kkt_residual(def, st, at(u[D]), mu).stacked();
  }

  Mat jacobian(const Vec& u) const {
    const int D = static_cast<int>(u.size()) - 1;
    const SubproblemState st = SubproblemState::unpack(u.head(D), def.n, def.nc(), def.m);
    Mat A = Mat::Zero(D, D + 1);
    A.leftCols(D) = dense_subproblem_jacobian(def, st);
    A(D - def.nc(), D) = -1.0;
    return A;
  }

  Vec tangent(const Vec& u, const Vec& prev) const {
    const int D = static_cast<int>(u.size()) - 1;
    Mat B(D + 1, D + 1);
    B.topRows(D) = jacobian(u);
    B.row(D) = prev.transpose();
    Vec rhs = Vec::Zero(D + 1);
    rhs[D] = 1.0;
    Vec t = B.fullPivLu().solve(rhs);
    t.normalize();
    if (t.dot(prev) < 0) t = -t;
    return t;
  }

  std::optional<Vec> correct(const Vec& base, const Vec& t, double h) const {
    const int D = static_cast<int>(base.size()) - 1;
    const Vec pred = base + h * t;
    Vec u = pred;
    for (int it = 0; it < 30; ++it) {
      Vec H(D + 1);
      H.head(D) = residual(u);
      H[D] = t.dot(u - pred);
      if (!H.allFinite()) return std::nullopt;
      if (H.lpNorm<Eigen::Infinity>() <= 1e-13) {
        const auto st = SubproblemState::unpack(u.head(D), def.n, def.nc(), def.m);
        if (!st.positive()) return std::nullopt;
        return u;
      }
      Mat B(D + 1, D + 1);
      B.topRows(D) = jacobian(u);
      B.row(D) = t.transpose();
      u -= B.fullPivLu().solve(H);
    }
    return std::nullopt;
  }

  Point point_of(const Vec& u) const {
    const int D = static_cast<int>(u.size()) - 1;
    Point p;
    p.ok = true;
    p.x = u[D];
    p.st = SubproblemState::unpack(u.head(D), def.n, def.nc(), def.m);
    return p;
  }

  std::optional<Point> find_fold(const Point& p, double x_next) const {
    const int D = p.st.size();
    const double span = std::abs(x_next - p.x);
    Vec u(D + 1);
    u << p.st.pack(), p.x;
    Vec t = Vec::Zero(D + 1);
    t[D] = x_next > p.x ? 1.0 : -1.0;
    if (auto f = factor_at(def, p.st, newton); f && !f->singular())
      t.head(D) = f->copy_sensitivity().col(0) * t[D];
    t.normalize();
    t = tangent(u, t);
    double sign = lambda_min(p);
    double h = 0.1 * span, travelled = 0.0;
    while (travelled < 20.0 * span + 1.0 && h > 1e-12 * span) {
      auto next = correct(u, t, h);
      if (!next) {
        h *= 0.5;
        continue;
      }
      const Point q = point_of(*next);
      const double s = lambda_min(q);
      if (s * sign <= 0) {
        double lo = 0.0, hi = h;
        Point best = q;
        for (int it = 0; it < 80 && hi - lo > 1e-15 * h; ++it) {
          const double mid = 0.5 * (lo + hi);
          auto m = correct(u, t, mid);
          if (!m) break;
          best = point_of(*m);
          (lambda_min(best) * sign > 0 ? lo : hi) = mid;
        }
        return best;
      }
      if ((q.x - x_next) * (x_next - p.x) > 0) return std::nullopt;
      travelled += h;
      t = tangent(*next, t);
      u = *next;
      h = std::min(2.0 * h, 0.25 * span);
    }
    return std::nullopt;
  }
};

struct Branch {
  int id;
  int dir;
  Point last;
  bool active = true;
};

}  // namespace

void CurveSpec::validate() const {
  if (canonical_example_id(example_id).empty())
    throw ModelError("curves: unknown example id " + example_id);
  if (count < 2) throw ModelError("curves: grid count must be at least 2");
  if (!(x_min < x_max) || !std::isfinite(x_min) || !std::isfinite(x_max))
    throw ModelError("curves: need x_min < x_max");
  if (mu.empty()) throw ModelError("curves: no mu values");
  for (double m : mu)
    if (!(m > 0.0) || !std::isfinite(m)) throw ModelError("curves: mu must be positive");
  if (multistart < 1) throw ModelError("curves: multistart must be positive");
}

std::vector<CurveRow> emit_curves(const CurveSpec& spec) {
  spec.validate();
  const NamedExample ex = example(spec.example_id);
  const SubproblemDef& def = ex.problem.subproblems.at(0);
  if (ex.problem.n0 != 1 || def.nc() != 1) throw ModelError("curves: scalar examples only");

  std::vector<double> grid(spec.count);
  for (int k = 0; k < spec.count; ++k)
    grid[k] = spec.x_min + (spec.x_max - spec.x_min) * k / (spec.count - 1);

  std::vector<CurveRow> rows;
  for (double mu : spec.mu) {
    const Tracer tr(def, mu, spec.quantity);
    // converged y per grid index, for merge detection across branches
    std::map<int, std::vector<std::pair<int, double>>> visited;
    std::vector<CurveRow> out;
    int next_id = 0;

    auto merged = [&](int k, int id, double y) {
      for (const auto& [other, yo] : visited[k])
        if (other != id && std::abs(yo - y) <= kMergeTol) return true;
      return false;
    };

    auto sweep = [&](std::vector<Branch> branches) {
      const int first = branches.empty() || branches[0].dir > 0 ? 0 : spec.count - 1;
      for (auto& b : branches) {
        out.push_back(tr.row(b.last, b.id));
        visited[first].push_back({b.id, b.last.st.y[0]});
      }
      for (int step = 1; step < spec.count; ++step) {
        for (auto& b : branches) {
          if (!b.active) continue;
          const int k = b.dir > 0 ? step : spec.count - 1 - step;
          Point q = tr.advance_adaptive(b.last, grid[k]);
          if (!q.ok) {
            if (auto fold = tr.find_fold(b.last, grid[k])) {
              CurveRow r = tr.row(*fold, b.id);
              r.refined = true;
              out.push_back(r);
            }
            q.x = grid[k];
            out.push_back(tr.row(q, b.id));
            b.active = false;
            continue;
          }
          if (tr.lambda_min(q) * tr.lambda_min(b.last) < 0) {
            CurveRow r = tr.row(tr.bisect_sign(b.last, q), b.id);
            r.refined = true;
            out.push_back(r);
          }
          out.push_back(tr.row(q, b.id));
          const bool join = merged(k, b.id, q.st.y[0]);
          visited[k].push_back({b.id, q.st.y[0]});
          b.last = std::move(q);
          if (join) b.active = false;
        }
      }
    };

    std::vector<Branch> fwd;
    for (auto& p : tr.seeds(grid.front(), spec.multistart)) fwd.push_back({next_id++, 1, std::move(p)});
    sweep(std::move(fwd));

    std::vector<Branch> bwd;
    for (auto& p : tr.seeds(grid.back(), spec.multistart))
      if (!merged(spec.count - 1, -1, p.st.y[0])) bwd.push_back({next_id++, -1, std::move(p)});
    sweep(std::move(bwd));

    for (auto& r : out) r.example = ex.id;
    std::stable_sort(out.begin(), out.end(), [](const CurveRow& a, const CurveRow& b) {
      return a.branch != b.branch ? a.branch < b.branch : a.x < b.x;
    });
    rows.insert(rows.end(), out.begin(), out.end());
  }
  return rows;
}

void write_curves_csv(std::ostream& os, const std::vector<CurveRow>& rows, bool diagnostics) {
  os << "example,branch,mu,x,value,y,converged";
  if (diagnostics) os << ",sigma_min,lambda_min,degenerate,refined";
  os << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.example << ',' << r.branch << ',' << r.mu << ',' << r.x << ',' << r.value << ','
       << r.y << ',' << (r.converged ? 1 : 0);
    if (diagnostics)
      os << ',' << r.sigma_min << ',' << r.lambda_min << ',' << (r.degenerate ? 1 : 0) << ','
         << (r.refined ? 1 : 0);
    os << '\n';
  }
}

}  // namespace tsd
