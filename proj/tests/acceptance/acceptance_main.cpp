// Runs every acceptance criterion and prints one line each. Exit status is
// non-zero when any criterion fails. Optional arguments select criteria by id.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "criteria.hpp"

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::stoi(argv[i]));
  if (selected.empty()) selected = ov3r::criteria::ids();

  int failed = 0;
  for (int id : selected) {
    const auto r = ov3r::criteria::run(id);
    std::cout << ov3r::criteria::format(r) << std::endl;
    failed += r.passed ? 0 : 1;
  }
  std::cout << (selected.size() - failed) << "/" << selected.size() << " criteria passed" << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
