#pragma once

#include <string>
#include <vector>

namespace evocap {

struct GradCheckConfig {
  std::size_t frames = 4;
  std::size_t dim = 12;  // d_v = d_t = d_e
  std::size_t extension = 5;
  std::vector<std::size_t> subspaces{2, 3};
  std::size_t feature_dim = 6;
  std::size_t hidden = 8;
  std::size_t vocab = 12;
  std::size_t prefix_len = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
  unsigned long long seed = 1;
};

struct GroupError {
  std::string group;
  std::size_t elements = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
};

struct GradCheckReport {
  std::string module;
  std::vector<GroupError> groups;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;

  bool passed() const { return max_rel < tolerance; }
  std::vector<std::string> failing_groups() const;
};

// Selectors accepted by grad_check().
const std::vector<std::string>& grad_check_modules();

// Central differences on every parameter and input of the selected module,
// compared against reverse-mode gradients of a fixed random projection of
// the module outputs. Relative error: |a - n| / max(|a|, |n|, 1e-6 max(1, |f|))
// where f is the projected objective at the base point.
GradCheckReport grad_check(const std::string& module, const GradCheckConfig& config);

std::string format_report(const GradCheckReport& report);

}  // namespace evocap
