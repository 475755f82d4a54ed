#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace seqft {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward materializes it
  bool requires_grad = false;
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats.
///
/// Tensor is a shared handle: copying one aliases the same storage. That is
/// what gives parameters a stable identity across graphs, layer groups and
/// optimizer state. Use clone_values() when an independent copy is needed.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int64_t dim(std::size_t axis) const;

  std::span<double> data();
  std::span<const double> data() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<double> grad();
  std::span<const double> grad() const;
  void drop_grad();

  /// Value of a one-element tensor.
  double item() const;

  double at(std::initializer_list<int64_t> index) const;
  double& at(std::initializer_list<int64_t> index);

  /// Deep copy of the values. The copy has no grad and requires_grad false.
  Tensor clone_values() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Execution record of differentiable ops, in the order they ran.
/// backward() replays the record in exact reverse order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Graph currently recording on this thread, or nullptr.
  static Graph* active();

  void record(const char* op, std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }
  const char* op_at(std::size_t i) const { return nodes_[i].op; }

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every recorded
  /// tensor that requires grad. Tensors with requires_grad false never get a
  /// gradient buffer.
  void backward(const Tensor& loss);

 private:
  friend class TapeScope;
  struct Node {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  static thread_local Graph* active_;
};

/// Makes `graph` the recording target for ops on this thread. Non-reentrant:
/// nesting scopes is a contract error.
class TapeScope {
 public:
  explicit TapeScope(Graph& graph);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

void backward(Graph& graph, const Tensor& loss);

}  // namespace seqft
