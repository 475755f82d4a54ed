#include "seqft/tensor.hpp"

#include <sstream>

#include "seqft/errors.hpp"

namespace seqft {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, bool requires_grad) {
  for (int64_t d : shape) {
    if (d < 1) throw ContractError("tensor shape entries must be >= 1, got " + shape_to_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = make_impl(std::move(shape), requires_grad);
  impl->data.assign(static_cast<std::size_t>(shape_numel(impl->shape)), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = make_impl(std::move(shape), requires_grad);
  impl->data.assign(static_cast<std::size_t>(shape_numel(impl->shape)), value);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  auto impl = make_impl(std::move(shape), requires_grad);
  if (static_cast<int64_t>(data.size()) != shape_numel(impl->shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_to_string(impl->shape));
  }
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

int64_t Tensor::numel() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return static_cast<int64_t>(impl_->data.size());
}

int64_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ContractError("axis out of range");
  return s[axis];
}

std::span<double> Tensor::data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (!impl_) throw ContractError("use of undefined tensor");
  impl_->requires_grad = value;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<double> Tensor::grad() {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return impl_->grad;
}

void Tensor::drop_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

double Tensor::item() const {
  if (!impl_ || impl_->data.size() != 1) {
    throw ContractError("item() requires a one-element tensor, got " +
                        (impl_ ? shape_to_string(impl_->shape) : std::string("<undefined>")));
  }
  return impl_->data[0];
}

namespace {

std::size_t flat_index(const Shape& shape, std::initializer_list<int64_t> index) {
  if (index.size() != shape.size()) throw ContractError("index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= shape[axis]) throw ContractError("index out of bounds");
    flat = flat * static_cast<std::size_t>(shape[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return flat;
}

}  // namespace

double Tensor::at(std::initializer_list<int64_t> index) const {
  return data()[flat_index(shape(), index)];
}

double& Tensor::at(std::initializer_list<int64_t> index) {
  return data()[flat_index(shape(), index)];
}

Tensor Tensor::clone_values() const {
  if (!impl_) return Tensor();
  return Tensor::from_data(impl_->shape, impl_->data, false);
}

thread_local Graph* Graph::active_ = nullptr;

Graph* Graph::active() { return active_; }

void Graph::record(const char* op, std::function<void()> backward_fn) {
  nodes_.push_back(Node{op, std::move(backward_fn)});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss was not recorded on this graph (requires_grad is false)");
  }
  auto* impl = loss.impl();
  impl->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward_fn();
  }
}

TapeScope::TapeScope(Graph& graph) {
  if (Graph::active_ != nullptr) throw ContractError("nested TapeScope is not supported");
  Graph::active_ = &graph;
}

TapeScope::~TapeScope() { Graph::active_ = nullptr; }

void backward(Graph& graph, const Tensor& loss) { graph.backward(loss); }

}  // namespace seqft
