#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "srd/nn/tensor.hpp"

namespace srd::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Ordered, reference-stable collection of named parameters.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Shape shape) {
    for (const auto& p : params_)
      if (p->name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

template <typename T>
class Graph;

// Handle to a node on a Graph tape.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return graph->value(id); }
  const Shape& shape() const { return value().shape(); }
  int dim(int i) const { return value().dim(i); }
  // Gradient accumulated by the last backward pass; zeros if none reached it.
  const Tensor<T>& grad() const { return graph->grad(id); }
  bool valid() const { return graph != nullptr; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep visits every node after all of its consumers.
template <typename T>
class Graph {
 public:
  // Receives the id of the node being differentiated.
  using BackwardFn = std::function<void(int self)>;

  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool tracking() const { return track_; }

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  // Leaf whose gradient is retained and readable after backward().
  Var<T> input(Tensor<T> value) { return push(std::move(value), track_, nullptr); }

  Var<T> parameter(Parameter<T>& p) { return push(p.value, track_, &p); }

  // Records an op output. `backward` is only stored when some parent needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn backward) {
    return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()), std::move(backward));
  }

  Var<T> record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn backward) {
    bool needs = false;
    if (track_)
      for (const auto& p : parents) needs = needs || nodes_[static_cast<std::size_t>(p.id)].requires_grad;
    Var<T> v = push(std::move(value), needs, nullptr);
    if (needs) nodes_.back().backward = std::move(backward);
    return v;
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  Tensor<T>& grad(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }
  const Tensor<T>& grad(int id) const { return const_cast<Graph*>(this)->grad(id); }

  // Seeds d(root)/d(root) = 1 for a single-element root and sweeps the tape.
  // Parameter gradients are accumulated (+=) into Parameter::grad.
  void backward(Var<T> root) {
    if (root.value().size() != 1) throw std::invalid_argument("backward() requires a scalar root");
    seed_and_sweep(root, Tensor<T>(root.shape(), T(1)));
  }

  // Backpropagates an explicit upstream gradient for a non-scalar root.
  void backward(Var<T> root, const Tensor<T>& upstream) {
    if (upstream.shape() != root.shape()) throw std::invalid_argument("upstream gradient shape mismatch");
    seed_and_sweep(root, upstream);
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Parameter<T>* param) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, param, {}});
    return Var<T>{this, static_cast<int>(nodes_.size() - 1)};
  }

  void seed_and_sweep(Var<T> root, const Tensor<T>& seed) {
    if (!track_) throw std::logic_error("backward() on a graph built without gradient tracking");
    grad(root.id) = seed;
    for (std::size_t i = static_cast<std::size_t>(root.id) + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(static_cast<int>(i));
      if (n.param) {
        auto& dst = n.param->grad.storage();
        const auto& src = n.grad.storage();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  bool track_;
  std::deque<Node> nodes_;
};

}  // namespace srd::nn
