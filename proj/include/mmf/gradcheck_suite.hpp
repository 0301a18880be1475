#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmf {

struct ComponentCheck {
  std::string component;
  double max_relative_error = 0.0;
  std::size_t elements = 0;
};

inline constexpr double kGradcheckTolerance = 1e-4;

/// Finite-difference checks in double precision for tensor ops, a tiny text
/// encoder, a tiny CNN and the fused model with loss, all initialized from
/// `seed`.
std::vector<ComponentCheck> run_gradcheck_suite(std::uint64_t seed);

}  // namespace mmf
