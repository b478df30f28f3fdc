#include "earlycast/optim.hpp"

#include <cmath>
#include <string>

#include "earlycast/error.hpp"

namespace earlycast {

void adam_step(AdamState& state, std::span<const std::span<double>> values,
               std::span<const std::span<const double>> grads) {
  if (values.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(values.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.step_count == 0) {
    for (const auto& p : values) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != values.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != grads[i].size() || values[i].size() != state.m[i].size()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has " + std::to_string(values[i].size()) +
                       " values, " + std::to_string(grads[i].size()) + " gradients and " +
                       std::to_string(state.m[i].size()) + " moments");
    }
  }

  const AdamConfig& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double m_correction = 1.0 - std::pow(c.beta1, t);
  const double v_correction = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto p = values[i];
    auto g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double m_hat = m[k] / m_correction;
      const double v_hat = v[k] / v_correction;
      p[k] -= c.eta * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void adam_step(AdamState& state, std::span<Tensor* const> params) {
  std::vector<std::span<double>> values;
  std::vector<std::span<const double>> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (Tensor* p : params) {
    values.push_back(p->data());
    grads.push_back(p->grad());
  }
  adam_step(state, values, grads);
}

}  // namespace earlycast
