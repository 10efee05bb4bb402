#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdtc {

// Dense row-major real array, rank 1..3. Value handle with shared storage;
// ops never mutate an existing tensor's data after it is produced.
class Tensor {
 public:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;   // allocated lazily by ensure_grad()
    bool requires_grad = false;
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int size() const { return static_cast<int>(impl_->data.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double item() const;

  double& at(int i) { return impl_->data[static_cast<size_t>(i)]; }
  double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
  double& at(int r, int c);
  double at(int r, int c) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void ensure_grad();
  void zero_grad();

  Impl* impl() const { return impl_.get(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::string shape_str() const;

 private:
  std::shared_ptr<Impl> impl_;
};

// Record of one forward pass. Ops append backward closures in execution
// order; backward() runs them in reverse after seeding the loss gradient.
class Tape {
 public:
  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // loss must be a scalar produced on this tape.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void check_finite(const Tensor& t, const char* where);

}  // namespace sdtc
