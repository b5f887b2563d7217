#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "strongnoise/acceptance.hpp"

using namespace strongnoise;

/// Usage: acceptance [--seed N] [criterion ids...]
int main(int argc, char** argv) {
  acceptance::Options opt;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--seed" && i + 1 < argc) opt.seed = std::stoull(argv[++i]);
    else only.push_back(std::stoi(a));
  }
  bool failed = false, inconclusive = false;
  acceptance::run_all(opt, only, [&](const acceptance::CriterionResult& r) {
    std::cout << acceptance::format_line(r) << std::endl;
    failed = failed || r.verdict == acceptance::Verdict::Fail;
    inconclusive = inconclusive || r.verdict == acceptance::Verdict::Inconclusive;
  });
  return failed ? 3 : inconclusive ? 4 : 0;
}
