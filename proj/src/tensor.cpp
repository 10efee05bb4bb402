#include "sdtc/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace sdtc {

namespace {
size_t shape_size(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 3)
    throw std::invalid_argument("tensor rank must be 1..3, got rank " +
                                std::to_string(shape.size()));
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}
}  // namespace

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data.assign(shape_size(shape), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data,
                    bool requires_grad) {
  if (shape_size(shape) != data.size())
    throw std::invalid_argument("tensor data length does not match shape");
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("item() on non-scalar tensor");
  return impl_->data[0];
}

double& Tensor::at(int r, int c) {
  return impl_->data[static_cast<size_t>(r) *
                         static_cast<size_t>(impl_->shape.back()) +
                     static_cast<size_t>(c)];
}

double Tensor::at(int r, int c) const {
  return impl_->data[static_cast<size_t>(r) *
                         static_cast<size_t>(impl_->shape.back()) +
                     static_cast<size_t>(c)];
}

std::vector<double>& Tensor::grad() {
  ensure_grad();
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty())
    throw std::logic_error("gradient not populated; run backward first");
  return impl_->grad;
}

void Tensor::ensure_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < impl_->shape.size(); ++i) {
    if (i) os << 'x';
    os << impl_->shape[i];
  }
  os << ']';
  return os.str();
}

void Tape::backward(Tensor& loss) {
  if (loss.size() != 1)
    throw std::logic_error("backward requires a scalar loss");
  loss.ensure_grad();
  loss.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void check_finite(const Tensor& t, const char* where) {
  for (double v : t.data())
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("non-finite value in ") + where);
}

}  // namespace sdtc
