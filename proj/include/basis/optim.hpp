#pragma once

#include <span>
#include <vector>

#include "basis/modules.hpp"

namespace basis {

/// Classical (heavy-ball) momentum: v <- beta * v + g, p <- p - lr * v.
struct MomentumState {
  std::vector<Matrix> velocity;  // lazily shaped on the first step
  Real beta = Real(0.9);
  Real learning_rate = Real(0.01);
};

/// Applies one update to every parameter. Throws NumericError naming the
/// tensor if a gradient is non-finite and ContractError on shape mismatch;
/// nothing is modified in either case.
void sgd_momentum_step(std::span<const ParamRef> params, MomentumState& state);

}  // namespace basis
