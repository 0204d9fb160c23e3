#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcg/errors.hpp"
#include "dcg/numgrad/params.hpp"
#include "dcg/numgrad/tensor.hpp"

namespace dcg::ng {

class Tape;

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  Tape* tape = nullptr;
  bool requires_grad = false;
  std::string param;  // set on parameter leaves

  Tensor& ensure_grad() {
    if (grad.data.size() != value.data.size()) grad = Tensor(value.shape);
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

/// Records operations for one forward pass so that `backward` can replay them
/// in reverse. A non-recording tape evaluates the same ops without keeping
/// intermediates alive; it is used for target networks and acting.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->tape = this;
    return n;
  }

  // Leaf node for a named parameter; repeated calls return the same node.
  Var param(const ParamStore& store, const std::string& name) {
    auto it = params_.find(name);
    if (it != params_.end()) return it->second;
    auto n = std::make_shared<Node>();
    n->value = store.value(name);
    n->tape = this;
    n->requires_grad = recording_;
    n->param = name;
    params_.emplace(name, n);
    param_order_.push_back(n);
    return n;
  }

  Var record(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->tape = this;
    bool needs = false;
    for (const auto& p : parents) {
      if (p->tape != this) throw ContractError("operands recorded on different tapes");
      needs = needs || p->requires_grad;
    }
    if (recording_ && needs) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward_fn = std::move(fn);
      nodes_.push_back(n);
    }
    return n;
  }

  /// Reverse-mode sweep from a scalar loss; parameter gradients are added to
  /// the matching accumulators in `store`.
  void backward(const Var& loss, ParamStore& store) {
    if (loss->value.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " + to_string(loss->value.shape));
    }
    if (!loss->requires_grad) return;
    loss->ensure_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.grad.data.empty() || !n.backward_fn) continue;
      n.backward_fn(n);
    }
    for (const auto& p : param_order_) {
      if (p->grad.data.empty()) continue;
      Tensor& g = store.grad(p->param);
      require_same_shape(g, p->grad, "backward");
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::isnan(p->grad[i])) throw NumericError("NaN gradient in parameter '" + p->param + "'");
        g[i] += p->grad[i];
      }
    }
  }

  std::size_t recorded() const { return nodes_.size(); }

 private:
  bool recording_;
  std::vector<Var> nodes_;
  std::unordered_map<std::string, Var> params_;
  std::vector<Var> param_order_;
};

}  // namespace dcg::ng
