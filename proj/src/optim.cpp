#include "basis/optim.hpp"

namespace basis {

void sgd_momentum_step(std::span<const ParamRef> params, MomentumState& state) {
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const auto& p : params) state.velocity.emplace_back(p.value->rows(), p.value->cols());
  }
  if (state.velocity.size() != params.size()) {
    throw ContractError("sgd_momentum_step: state tracks " + std::to_string(state.velocity.size()) +
                        " tensors but " + std::to_string(params.size()) + " were given");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const Matrix& v = state.velocity[i];
    if (p.grad->rows() != p.value->rows() || p.grad->cols() != p.value->cols() ||
        v.rows() != p.value->rows() || v.cols() != p.value->cols()) {
      throw ContractError("sgd_momentum_step: shape mismatch for " + p.name + ": value " +
                          shape_string(*p.value) + ", grad " + shape_string(*p.grad) +
                          ", velocity " + shape_string(v));
    }
    if (!all_finite(*p.grad)) throw NumericError("non-finite gradient in " + p.name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value->values();
    auto grad = params[i].grad->values();
    auto vel = state.velocity[i].values();
    for (std::size_t j = 0; j < value.size(); ++j) {
      vel[j] = state.beta * vel[j] + grad[j];
      value[j] -= state.learning_rate * vel[j];
    }
  }
}

}  // namespace basis
