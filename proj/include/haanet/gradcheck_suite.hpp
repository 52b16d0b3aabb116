#pragma once

#include <string>
#include <vector>

namespace haanet {

/// Worst finite-difference error over one parameter group of a module.
struct GradcheckGroup {
  std::string module;
  std::string group;
  double max_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;

  bool passed() const;
};

/// "primitives", "haam", "mfem", "backbone", "loss".
const std::vector<std::string>& gradcheck_modules();

/// Runs one module suite (or "all") in double precision on seeded inputs.
/// Unknown names throw std::invalid_argument.
GradcheckReport run_gradcheck(const std::string& module);

}  // namespace haanet
