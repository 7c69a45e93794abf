#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctranatd/layers.hpp"

namespace ctranatd {

struct GradCheckEntry {
  std::string target;  // parameter block name, or "input"
  std::string part;    // "weights", "bias" or "data"
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::vector<GradCheckEntry> failures;
  bool passed = false;
};

// Relative error with a small denominator floor, so gradients that are both
// essentially zero compare by absolute difference.
double gradient_rel_error(double analytic, double numeric);

// Compares every parameter and input gradient of `fragment` against central
// finite differences of the scalar loss sum(r * fragment(input)), where r is a
// fixed seeded random projection. Runs in inference mode (dropout off).
GradCheckReport grad_check(Layer& fragment, const Tensor3& input, double tolerance,
                           std::uint64_t seed = 7, double step = 1e-5);

}  // namespace ctranatd

namespace ctranatd {

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

// The standard battery: every differentiable layer on a small random input,
// then each architecture end to end on a (2, 8, 6) batch with a scaled-down
// config. Parameters are randomized so no bias sits at its zero init.
std::vector<NamedGradCheck> standard_grad_checks(double tolerance = 1e-4, std::uint64_t seed = 7);

}  // namespace ctranatd
