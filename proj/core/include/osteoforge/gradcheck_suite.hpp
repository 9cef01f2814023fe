#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "osteoforge/autodiff.hpp"

namespace osteoforge {

struct GradCheckCase {
  std::string name;
  double tolerance = 0.0;
  ad::GradCheckResult result;

  bool passed() const { return result.max_relative_error < tolerance; }
};

inline constexpr double kOpGradTolerance = 1e-4;
inline constexpr double kModelGradTolerance = 1e-3;

/// Double-precision central-difference checks of every differentiable op
/// and loss on small random inputs drawn from `seed`.
std::vector<GradCheckCase> op_gradchecks(std::uint64_t seed = 0);

/// End-to-end check of mean(toy U-Net(x)) with respect to every parameter
/// and the input, on a seeded subset of `coords_per_input` coordinates per
/// tensor. Biases are randomized so no pre-activation sits on a ReLU kink.
GradCheckCase model_gradcheck(std::uint64_t seed = 0, std::size_t coords_per_input = 3);

}  // namespace osteoforge
