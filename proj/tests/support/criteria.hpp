#pragma once

#include <string>
#include <vector>

// The acceptance criteria as runnable checks, shared by the acceptance test
// binary and `ov3r selftest`.
namespace ov3r::criteria {

struct Result {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

std::vector<int> ids();
std::string title(int id);
Result run(int id);

/// "[PASS] 3 sim-loss point values (0.01 s): ..." style line.
std::string format(const Result& r);

}  // namespace ov3r::criteria
