#include "sdtc/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace sdtc {

Adam::Adam(std::vector<NamedTensor> params, double learning_rate, double beta1,
           double beta2, double epsilon)
    : params_(std::move(params)) {
  state_.alpha = learning_rate;
  state_.beta1 = beta1;
  state_.beta2 = beta2;
  state_.epsilon = epsilon;
  state_.m.reserve(params_.size());
  state_.v.reserve(params_.size());
  for (const NamedTensor& p : params_) {
    state_.m.emplace_back(p.tensor.data().size(), 0.0);
    state_.v.emplace_back(p.tensor.data().size(), 0.0);
  }
}

void Adam::step() {
  ++state_.t;
  const double bc1 = 1.0 - std::pow(state_.beta1, state_.t);
  const double bc2 = 1.0 - std::pow(state_.beta2, state_.t);
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k].tensor;
    if (!p.has_grad())
      throw std::runtime_error("adam: missing gradient for parameter " +
                               params_[k].name);
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    const auto& g = p.grad();
    auto& w = p.data();
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = state_.beta1 * m[i] + (1.0 - state_.beta1) * g[i];
      v[i] = state_.beta2 * v[i] + (1.0 - state_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= state_.alpha * mhat / (std::sqrt(vhat) + state_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (NamedTensor& p : params_) {
    p.tensor.ensure_grad();
    p.tensor.zero_grad();
  }
}

Tensor init_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (int i = 0; i < t.size(); ++i) t.at(i) = u(rng);
  return t;
}

}  // namespace sdtc
