#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsd/acceptance.hpp"
#include "tsd/benchgen.hpp"
#include "tsd/driver.hpp"
#include "tsd/monolithic.hpp"

using namespace tsd;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int default_threads() {
  if (const char* e = std::getenv("TWOSTAGE_THREADS")) {
    try {
      const int t = std::stoi(e);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring TWOSTAGE_THREADS=" << e << "\n";
  }
  return 1;
}

struct SolveArgs {
  std::string instance;
  std::string example;
  std::string out = ".";
  std::optional<double> y0;
  std::string x0;
  std::string mode = "decomposed";
  std::string smoothing = "obj";
  std::string extrapolation = "on";
  double mu0 = 0.1, c0 = 0.1, cmu1 = 0.2, cmu2 = 1.5, mu_tol = 1e-6;
  int threads = 1;
};

struct GenerateArgs {
  QcqpDims dims;
  std::uint64_t seed = 0;
  std::string example;
  std::string out;
};

struct CurveArgs {
  std::string example;
  std::vector<double> mu;
  std::string grid = "0:1:101";
  std::string smoothing = "obj";
  int multistart = 8;
  bool diagnostics = false;
  std::string out;
};

struct VerifyArgs {
  std::vector<int> criteria;
  bool quick = false;
  int threads = 4;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

Vec parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("--x0: not a number: " + tok);
    }
  }
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SmoothingKind smoothing_of(const std::string& s) {
  return s == "sol" ? SmoothingKind::Solution : SmoothingKind::Objective;
}

int cmd_generate(const GenerateArgs& a) {
  const std::string text = a.example.empty() ? instance_to_json(generate_qcqp(a.dims, a.seed))
                                             : example_to_json(a.example);
  if (a.out.empty() || a.out == "-") std::cout << text << "\n";
  else write_file(a.out, text + "\n");
  return 0;
}

int cmd_solve(const SolveArgs& a) {
  if (a.instance.empty() == a.example.empty())
    throw UsageError("solve: give exactly one of an instance file or --example");
  const InstanceFile file = a.instance.empty() ? parse_instance(example_to_json(a.example))
                                               : load_instance(a.instance);
  NamedExample ex = instantiate(file, a.y0);
  if (!a.x0.empty()) {
    ex.x0 = parse_list(a.x0);
    if (ex.x0.size() != ex.problem.n0)
      throw UsageError("--x0: expected " + std::to_string(ex.problem.n0) + " values");
  }

  DriverConfig c;
  c.mu0 = a.mu0;
  c.schedule.c0 = a.c0;
  c.schedule.cmu1 = a.cmu1;
  c.schedule.cmu2 = a.cmu2;
  c.schedule.mu_tol = a.mu_tol;
  c.threads = a.threads;
  c.smoothing = smoothing_of(a.smoothing);
  c.extrapolation = a.extrapolation == "on";
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  fs::create_directories(a.out);
  if (a.mode == "monolithic") {
    const MasterState pre = presolve(ex.problem, ex.x0);
    MonolithicOptions o;
    o.mu0 = a.mu0;
    o.mu_target = a.mu_tol;
    o.cmu1 = a.cmu1;
    o.cmu2 = a.cmu2;
    const auto y0 = subproblem_starts(ex.problem, pre.x, a.mu0);
    const MonolithicResult r = solve_monolithic(ex.problem, pre.x, y0, o);
    nlohmann::json j;
    j["mode"] = "monolithic";
    j["ok"] = r.converged;
    j["message"] = r.message;
    j["x"] = std::vector<double>(r.x.data(), r.x.data() + r.x.size());
    nlohmann::json ys = nlohmann::json::array();
    for (const auto& y : r.y) ys.push_back(std::vector<double>(y.data(), y.data() + y.size()));
    j["y"] = ys;
    j["objective"] = r.objective;
    j["residual"] = r.residual;
    j["iterations"] = r.iterations;
    j["mu"] = a.mu_tol;
    write_file(fs::path(a.out) / "report.json", j.dump(2) + "\n");
    std::cout << "monolithic " << (r.converged ? "converged" : "failed") << ": objective "
              << std::setprecision(12) << r.objective << ", " << r.iterations << " iterations\n";
    if (!r.converged) {
      std::cerr << "error: " << r.message << "\n";
      return 1;
    }
    return 0;
  }
  if (a.mode != "decomposed") throw UsageError("--mode must be decomposed or monolithic");

  const RunReport r = run(ex.problem, c, ex.x0);
  auto j = nlohmann::json::parse(report_to_json(r, c));
  j["mode"] = "decomposed";
  write_file(fs::path(a.out) / "report.json", j.dump(2) + "\n");
  {
    std::ofstream f(fs::path(a.out) / "sqp_log.csv");
    write_sqp_log_csv(f, r.sqp_log);
  }
  {
    std::ofstream f(fs::path(a.out) / "extrapolation_log.csv");
    write_extrapolation_log_csv(f, r.extrapolation_log);
  }
  if (!r.ok) {
    std::cerr << "error: stage " << r.failed_stage << ", subproblem " << r.failed_subproblem
              << ": " << r.message << "\n";
    return 1;
  }
  std::cout << "decomposed converged: objective " << std::setprecision(12) << r.objective
            << ", x =";
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(r.x.size(), 8); ++k) std::cout << ' ' << r.x[k];
  if (r.x.size() > 8) std::cout << " ...";
  std::cout << "\n  " << r.stages.size() << " stages, " << r.sqp_iterations << " SQP iterations, "
            << r.newton_iterations << " Newton iterations, " << r.extrapolation_accepted
            << " extrapolations accepted, " << r.wall_seconds << " s\n";
  return 0;
}

int cmd_curves(const CurveArgs& a) {
  CurveSpec s;
  s.example_id = a.example;
  s.mu = a.mu;
  s.multistart = a.multistart;
  s.quantity = a.smoothing == "sol" ? CurveQuantity::SolutionSmoothing
                                    : CurveQuantity::ObjectiveSmoothing;
  std::stringstream ss(a.grid);
  std::string p[3];
  for (auto& t : p)
    if (!std::getline(ss, t, ':')) throw UsageError("--grid expects min:max:count");
  try {
    s.x_min = std::stod(p[0]);
    s.x_max = std::stod(p[1]);
    s.count = std::stoi(p[2]);
  } catch (const std::exception&) {
    throw UsageError("--grid expects min:max:count");
  }
  try {
    s.validate();
  } catch (const ModelError& e) {
    throw UsageError(e.what());
  }
  const auto rows = emit_curves(s);
  if (a.out.empty() || a.out == "-") {
    write_curves_csv(std::cout, rows, a.diagnostics);
  } else {
    std::ofstream f(a.out);
    if (!f) throw std::runtime_error("cannot write " + a.out);
    write_curves_csv(f, rows, a.diagnostics);
  }
  return 0;
}

int cmd_verify(const VerifyArgs& a) {
  AcceptanceOptions o;
  o.quick = a.quick;
  o.threads = a.threads;
  const std::vector<int> ids = a.criteria.empty() ? criterion_ids() : a.criteria;
  const auto known = criterion_ids();
  for (int id : ids)
    if (std::find(known.begin(), known.end(), id) == known.end())
      throw UsageError("unknown criterion " + std::to_string(id));
  bool all = true;
  for (int id : ids) {
    const CriterionResult r = run_criterion(id, o);
    std::cout << format_result(r) << std::endl;
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage smoothing decomposition solver"};
  app.require_subcommand(1);

  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "write a random QCQP instance or an example file");
  gen->add_option("--N", g.dims.N, "number of subproblems")->check(CLI::PositiveNumber);
  gen->add_option("--n0", g.dims.n0, "master variables (0: same as nc)")->check(CLI::NonNegativeNumber);
  gen->add_option("--ni", g.dims.ni, "subproblem variables")->check(CLI::PositiveNumber);
  gen->add_option("--mi", g.dims.mi, "subproblem constraints")->check(CLI::NonNegativeNumber);
  gen->add_option("--nc", g.dims.nc, "coupled variables")->check(CLI::PositiveNumber);
  gen->add_option("--m0", g.dims.m0, "master constraints")->check(CLI::NonNegativeNumber);
  gen->add_flag("--convex", g.dims.convex, "strictly convex subproblems");
  gen->add_option("--seed", g.seed, "generator seed");
  gen->add_option("--example", g.example, "write an example file instead (2.1, 3.1, 3.2)");
  gen->add_option("-o,--output", g.out, "output file (default stdout)");

  SolveArgs s;
  s.threads = default_threads();
  auto* sol = app.add_subcommand("solve", "solve an instance");
  sol->add_option("instance,--instance", s.instance, "instance JSON file");
  sol->add_option("--example", s.example, "solve a corpus example directly");
  sol->add_option("--y0", s.y0, "subproblem starting point (examples)");
  sol->add_option("--x0", s.x0, "master starting point, comma separated");
  sol->add_option("--mode", s.mode, "decomposed or monolithic")
      ->check(CLI::IsMember({"decomposed", "monolithic"}));
  sol->add_option("--smoothing", s.smoothing, "obj or sol")->check(CLI::IsMember({"obj", "sol"}));
  sol->add_option("--extrapolation", s.extrapolation, "on or off")->check(CLI::IsMember({"on", "off"}));
  sol->add_option("--mu0", s.mu0, "initial smoothing parameter");
  sol->add_option("--c0", s.c0, "stage tolerance factor");
  sol->add_option("--cmu1", s.cmu1, "linear mu decrease factor");
  sol->add_option("--cmu2", s.cmu2, "superlinear mu decrease exponent");
  sol->add_option("--mu-tol", s.mu_tol, "final smoothing parameter");
  sol->add_option("--threads", s.threads, "worker threads (env TWOSTAGE_THREADS)")->check(CLI::PositiveNumber);
  sol->add_option("-o,--output", s.out, "output directory");

  CurveArgs cv;
  auto* cur = app.add_subcommand("curves", "emit smoothed value and solution-map curves");
  cur->add_option("--example", cv.example, "example id")->required();
  cur->add_option("--mu", cv.mu, "smoothing parameter (repeatable)")->required();
  cur->add_option("--grid", cv.grid, "x grid min:max:count");
  cur->add_option("--smoothing", cv.smoothing, "obj or sol")->check(CLI::IsMember({"obj", "sol"}));
  cur->add_option("--multistart", cv.multistart, "starts per branch seed")->check(CLI::PositiveNumber);
  cur->add_flag("--diagnostics", cv.diagnostics, "add nondegeneracy columns");
  cur->add_option("-o,--output", cv.out, "output CSV (default stdout)");

  VerifyArgs v;
  v.threads = std::max(4, default_threads());
  auto* ver = app.add_subcommand("verify", "run the acceptance suite");
  ver->add_option("--criterion", v.criteria, "criterion number (repeatable)");
  ver->add_flag("--quick", v.quick, "skip the largest scaling run");
  ver->add_option("--threads", v.threads, "threads for the parallel criterion")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_generate(g);
    if (*sol) return cmd_solve(s);
    if (*cur) return cmd_curves(cv);
    if (*ver) return cmd_verify(v);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const InstanceFormatError& e) {
    std::cerr << "instance error: " << e.what() << "\n";
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
