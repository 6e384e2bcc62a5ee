#include <iostream>

#include "CLI11.hpp"
#include "tsd/acceptance.hpp"

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> ids;
  tsd::AcceptanceOptions opts;
  app.add_option("--criterion", ids, "criterion number (repeatable)");
  app.add_flag("--quick", opts.quick, "skip the largest scaling run");
  app.add_option("--threads", opts.threads, "threads for the parallel criterion");
  CLI11_PARSE(app, argc, argv);
  if (ids.empty()) ids = tsd::criterion_ids();
  bool all = true;
  for (int id : ids) {
    const auto r = tsd::run_criterion(id, opts);
    std::cout << tsd::format_result(r) << std::endl;
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
