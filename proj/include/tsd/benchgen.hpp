#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tsd/model.hpp"
#include "tsd/subsolver.hpp"

namespace tsd {

// ---------------------------------------------------------------- corpus

struct NamedExample {
  std::string id;
  std::string name;
  TwoStageProblem problem;
  Vec x0;
};

/// Ids: "2.1" (lp), "3.1" (bilinear), "3.2" (curvature). Throws ModelError on
/// unknown ids. y0 sets the subproblem starting point.
NamedExample example(std::string_view id, std::optional<double> y0 = std::nullopt);
std::vector<NamedExample> example_corpus();
/// Canonical id for an alias, or empty if unknown.
std::string canonical_example_id(std::string_view id);

/// Box-bounded master with f0 = 0: c0 = (x - hi, lo - x).
std::shared_ptr<const MasterFunctions> bound_master(double lo, double hi);

// ---------------------------------------------------------------- QCQP

struct QcqpDims {
  int N = 1;
  int n0 = 0;  // 0 selects n0 = nc
  int ni = 10;
  int mi = 20;
  int nc = 3;
  int m0 = 5;
  bool convex = false;
};

struct Triplet {
  int row;
  int col;
  double value;
};

/// Symmetric matrix: diagonal part plus symmetric off-diagonal triplets.
/// Each off-diagonal entry is stored once per position, (i,j) and (j,i).
struct SymMatrix {
  int n = 0;
  Vec diag;
  std::vector<Triplet> offdiag;

  double quad(const Vec& y) const;
  Vec apply(const Vec& y) const;
  void add_to(Mat& M, double w, int offset = 0) const;
};

struct QuadConstraint {
  SymMatrix Q;
  Vec c;
  Vec b;  // coupling coefficients (subproblem rows only)
  double r = 0.0;
};

struct QcqpSubproblem {
  SymMatrix Q;
  Vec c;
  std::vector<QuadConstraint> constraints;
  double lower = -50.0;
  double upper = 50.0;
  double rho = 100.0;
  std::vector<int> projection;
};

struct QcqpInstance {
  std::uint64_t seed = 0;
  QcqpDims dims;
  SymMatrix Q0;
  Vec c0;
  std::vector<QuadConstraint> master_constraints;
  std::vector<QcqpSubproblem> subproblems;
};

/// Portable stream: mt19937_64 seeded through splitmix64, uniforms built from
/// the top 53 bits. Stream k of seed s is independent of every other k.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);
  double uniform(double lo, double hi);
  std::uint64_t next() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

QcqpInstance generate_qcqp(const QcqpDims& dims, std::uint64_t seed);

/// Subproblem variables are (y, p, t) with the elastic pair p, t >= 0 and
/// coupling b'(xt - p + t); box and sign bounds are explicit constraints.
TwoStageProblem to_problem(const QcqpInstance& inst);

/// Unbarriered objective f0(x) + sum f_i(y_i; P x).
double qcqp_objective(const TwoStageProblem& problem, const Vec& x,
                      const std::vector<Vec>& ys);

// ---------------------------------------------------------------- JSON

class InstanceFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Either a QCQP instance or a reference to a corpus example.
struct InstanceFile {
  std::optional<QcqpInstance> qcqp;
  std::string example_id;
  std::optional<double> y0;
};

std::string instance_to_json(const QcqpInstance& inst);
std::string example_to_json(std::string_view id);
InstanceFile parse_instance(std::string_view text);
InstanceFile load_instance(const std::string& path);
/// Builds the problem (and a default x0) for a parsed instance file.
NamedExample instantiate(const InstanceFile& f, std::optional<double> y0 = std::nullopt);

// ---------------------------------------------------------------- curves

enum class CurveQuantity { ObjectiveSmoothing, SolutionSmoothing };

struct CurveSpec {
  std::string example_id;
  double x_min = 0.0;
  double x_max = 1.0;
  int count = 2;
  std::vector<double> mu;
  CurveQuantity quantity = CurveQuantity::ObjectiveSmoothing;
  int multistart = 8;

  void validate() const;
};

struct CurveRow {
  std::string example;
  int branch = 0;
  double mu = 0.0;
  double x = 0.0;
  double value = 0.0;
  double y = 0.0;
  bool converged = false;
  double sigma_min = 0.0;
  double lambda_min = 0.0;
  bool degenerate = false;
  /// Inserted by bisection where the reduced Hessian changes sign.
  bool refined = false;
};

std::vector<CurveRow> emit_curves(const CurveSpec& spec);
void write_curves_csv(std::ostream& os, const std::vector<CurveRow>& rows,
                      bool diagnostics = false);

}  // namespace tsd
