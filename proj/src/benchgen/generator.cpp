#include <cmath>

#include "tsd/benchgen.hpp"

namespace tsd {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr double kDensity = 0.05;

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t st = seed ^ (0xD1B54A32D192ED03ull * (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(st)),
                    static_cast<std::uint32_t>(splitmix64(st)),
                    static_cast<std::uint32_t>(splitmix64(st)),
                    static_cast<std::uint32_t>(splitmix64(st))};
  eng_.seed(seq);
}

double Rng::uniform(double lo, double hi) {
  const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double SymMatrix::quad(const Vec& y) const {
  double v = (diag.array() * y.array().square()).sum();
  for (const auto& t : offdiag) v += t.value * y[t.row] * y[t.col];
  return v;
}

Vec SymMatrix::apply(const Vec& y) const {
  Vec r = diag.cwiseProduct(y);
  for (const auto& t : offdiag) r[t.row] += t.value * y[t.col];
  return r;
}

void SymMatrix::add_to(Mat& M, double w, int offset) const {
  for (int k = 0; k < n; ++k) M(offset + k, offset + k) += w * diag[k];
  for (const auto& t : offdiag) M(offset + t.row, offset + t.col) += w * t.value;
}

namespace {

SymMatrix diagonal(Rng& rng, int n, double lo, double hi) {
  SymMatrix Q;
  Q.n = n;
  Q.diag.resize(n);
  for (int k = 0; k < n; ++k) Q.diag[k] = rng.uniform(lo, hi);
  return Q;
}

Vec uniform_vec(Rng& rng, int n, double lo, double hi) {
  Vec v(n);
  for (int k = 0; k < n; ++k) v[k] = rng.uniform(lo, hi);
  return v;
}

SymMatrix sparse_sym(Rng& rng, int n, bool convex) {
  SymMatrix Q;
  Q.n = n;
  Q.diag = Vec::Zero(n);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (rng.uniform(0.0, 1.0) < kDensity) {
        const double v = rng.uniform(-1.0, 1.0);
        Q.offdiag.push_back({a, b, v});
        Q.offdiag.push_back({b, a, v});
      }
    }
  }
  if (convex) {
    Vec rowsum = Vec::Zero(n);
    for (const auto& t : Q.offdiag) rowsum[t.row] += std::abs(t.value);
    for (int k = 0; k < n; ++k) Q.diag[k] = rowsum[k] + rng.uniform(0.0, 1.0);
  }
  return Q;
}

}  // namespace

QcqpInstance generate_qcqp(const QcqpDims& dims_in, std::uint64_t seed) {
  QcqpDims dims = dims_in;
  if (dims.n0 == 0) dims.n0 = dims.nc;
  if (dims.N < 1 || dims.ni < 1 || dims.mi < 0 || dims.nc < 1 || dims.m0 < 0 || dims.n0 < dims.nc)
    throw ModelError("invalid QCQP dimensions");
  QcqpInstance inst;
  inst.seed = seed;
  inst.dims = dims;

  Rng mr(seed, 0);
  inst.Q0 = diagonal(mr, dims.n0, 0.1, 1.0);
  inst.c0 = uniform_vec(mr, dims.n0, -1.0, 1.0);
  for (int j = 0; j < dims.m0; ++j) {
    QuadConstraint qc;
    qc.Q = diagonal(mr, dims.n0, 0.1, 1.0);
    qc.c = uniform_vec(mr, dims.n0, -1.0, 1.0);
    qc.r = mr.uniform(-2.0, -1.0);
    inst.master_constraints.push_back(std::move(qc));
  }

  for (int i = 0; i < dims.N; ++i) {
    Rng r(seed, static_cast<std::uint64_t>(i) + 1);
    QcqpSubproblem sp;
    sp.Q = dims.convex ? diagonal(r, dims.ni, 0.1, 1.0) : diagonal(r, dims.ni, -1.0, 1.0);
    sp.c = uniform_vec(r, dims.ni, -1.0, 1.0);
    for (int j = 0; j < dims.mi; ++j) {
      QuadConstraint qc;
      qc.Q = sparse_sym(r, dims.ni, dims.convex);
      qc.c = uniform_vec(r, dims.ni, -1.0, 1.0);
      qc.b = uniform_vec(r, dims.nc, -1.0, 1.0);
      qc.r = r.uniform(-2.0, -1.0);
      sp.constraints.push_back(std::move(qc));
    }
    sp.projection.resize(dims.nc);
    for (int k = 0; k < dims.nc; ++k) sp.projection[k] = k;
    inst.subproblems.push_back(std::move(sp));
  }
  return inst;
}

namespace {

class QcqpMaster final : public MasterFunctions {
 public:
  explicit QcqpMaster(const QcqpInstance& inst)
      : Q0_(inst.Q0), c0_(inst.c0), cons_(inst.master_constraints) {}

  double objective(const Vec& x) const override { return 0.5 * Q0_.quad(x) + c0_.dot(x); }
  Vec gradient(const Vec& x) const override { return Q0_.apply(x) + c0_; }
  Mat hessian(const Vec& x) const override {
    Mat H = Mat::Zero(x.size(), x.size());
    Q0_.add_to(H, 1.0);
    return H;
  }
  Vec constraints(const Vec& x) const override {
    Vec c(cons_.size());
    for (size_t j = 0; j < cons_.size(); ++j)
      c[j] = 0.5 * cons_[j].Q.quad(x) + cons_[j].c.dot(x) + cons_[j].r;
    return c;
  }
  Mat jacobian(const Vec& x) const override {
    Mat J(cons_.size(), x.size());
    for (size_t j = 0; j < cons_.size(); ++j)
      J.row(j) = (cons_[j].Q.apply(x) + cons_[j].c).transpose();
    return J;
  }
  Mat constraint_hessian(const Vec& x, const Vec& w) const override {
    Mat H = Mat::Zero(x.size(), x.size());
    for (size_t j = 0; j < cons_.size(); ++j) cons_[j].Q.add_to(H, w[j]);
    return H;
  }

 private:
  SymMatrix Q0_;
  Vec c0_;
  std::vector<QuadConstraint> cons_;
};

// z = (y, p, t, xt); rows: quadratic, y <= hi, lo <= y, p >= 0, t >= 0.
class QcqpSub final : public SubproblemFunctions {
 public:
  explicit QcqpSub(const QcqpSubproblem& sp)
      : sp_(sp), n_(sp.Q.n), nc_(static_cast<int>(sp.projection.size())) {
    mq_ = static_cast<int>(sp.constraints.size());
    m_ = mq_ + 2 * n_ + 2 * nc_;
    nz_ = n_ + 3 * nc_;
  }

  int n_local() const { return n_ + 2 * nc_; }
  int m_local() const { return m_; }

  double objective(const Vec& y, const Vec&) const override {
    const Vec yy = y.head(n_);
    return 0.5 * sp_.Q.quad(yy) + sp_.c.dot(yy) + sp_.rho * y.tail(2 * nc_).sum();
  }
  Vec gradient(const Vec& y, const Vec&) const override {
    Vec g = Vec::Zero(nz_);
    g.head(n_) = sp_.Q.apply(y.head(n_)) + sp_.c;
    g.segment(n_, 2 * nc_).setConstant(sp_.rho);
    return g;
  }
  Mat hessian(const Vec&, const Vec&) const override {
    Mat H = Mat::Zero(nz_, nz_);
    sp_.Q.add_to(H, 1.0);
    return H;
  }
  Vec constraints(const Vec& y, const Vec& xt) const override {
    Vec c(m_);
    const Vec yy = y.head(n_);
    const Vec w = xt - y.segment(n_, nc_) + y.segment(n_ + nc_, nc_);
    for (int j = 0; j < mq_; ++j) {
      const auto& q = sp_.constraints[j];
      c[j] = 0.5 * q.Q.quad(yy) + q.c.dot(yy) + q.b.dot(w) + q.r;
    }
    c.segment(mq_, n_) = yy.array() - sp_.upper;
    c.segment(mq_ + n_, n_) = sp_.lower - yy.array();
    c.segment(mq_ + 2 * n_, 2 * nc_) = -y.segment(n_, 2 * nc_);
    return c;
  }
  Mat jacobian(const Vec& y, const Vec&) const override {
    Mat J = Mat::Zero(m_, nz_);
    const Vec yy = y.head(n_);
    for (int j = 0; j < mq_; ++j) {
      const auto& q = sp_.constraints[j];
      J.row(j).head(n_) = (q.Q.apply(yy) + q.c).transpose();
      J.row(j).segment(n_, nc_) = -q.b.transpose();
      J.row(j).segment(n_ + nc_, nc_) = q.b.transpose();
      J.row(j).segment(n_ + 2 * nc_, nc_) = q.b.transpose();
    }
    for (int k = 0; k < n_; ++k) {
      J(mq_ + k, k) = 1.0;
      J(mq_ + n_ + k, k) = -1.0;
    }
    for (int k = 0; k < 2 * nc_; ++k) J(mq_ + 2 * n_ + k, n_ + k) = -1.0;
    return J;
  }
  Mat constraint_hessian(const Vec&, const Vec&, const Vec& w) const override {
    Mat H = Mat::Zero(nz_, nz_);
    for (int j = 0; j < mq_; ++j)
      if (w[j] != 0.0) sp_.constraints[j].Q.add_to(H, w[j]);
    return H;
  }

 private:
  QcqpSubproblem sp_;
  int n_, nc_, mq_ = 0, m_ = 0, nz_ = 0;
};

}  // namespace

TwoStageProblem to_problem(const QcqpInstance& inst) {
  TwoStageProblem p;
  p.n0 = inst.dims.n0;
  p.m0 = static_cast<int>(inst.master_constraints.size());
  p.master = std::make_shared<QcqpMaster>(inst);
  for (const auto& sp : inst.subproblems) {
    auto fn = std::make_shared<QcqpSub>(sp);
    SubproblemDef d;
    d.n = fn->n_local();
    d.m = fn->m_local();
    d.projection = sp.projection;
    const int n = sp.Q.n, nc = static_cast<int>(sp.projection.size());
    d.lower = Vec::Zero(d.n);
    d.upper = Vec::Constant(d.n, INFINITY);
    d.lower.head(n).setConstant(sp.lower);
    d.upper.head(n).setConstant(sp.upper);
    (void)nc;
    d.fn = std::move(fn);
    p.subproblems.push_back(std::move(d));
  }
  return p;
}

double qcqp_objective(const TwoStageProblem& problem, const Vec& x, const std::vector<Vec>& ys) {
  double v = problem.master->objective(x);
  for (int i = 0; i < problem.num_subproblems(); ++i) {
    const auto& d = problem.subproblems[i];
    v += d.fn->objective(ys[i], d.project(x));
  }
  return v;
}

}  // namespace tsd
