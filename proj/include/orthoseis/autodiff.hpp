#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "orthoseis/grid.hpp"

namespace orthoseis {

// Learnable tensor. Real-domain parameters hold their payload in `value` /
// `grad`; complex-domain ones in `cvalue` / `cgrad`. Gradients accumulate
// additively and stay untouched until zero_grad().
template <class T>
struct Parameter {
  std::string name;
  bool is_complex = false;
  RealGrid<T> value;
  RealGrid<T> grad;
  ComplexGrid<T> cvalue;
  ComplexGrid<T> cgrad;

  Parameter() = default;

  static Parameter real(std::string name, GridShape shape) {
    Parameter p;
    p.name = std::move(name);
    p.is_complex = false;
    p.value = RealGrid<T>(shape);
    p.grad = RealGrid<T>(shape);
    return p;
  }

  static Parameter complex(std::string name, GridShape shape) {
    Parameter p;
    p.name = std::move(name);
    p.is_complex = true;
    p.cvalue = ComplexGrid<T>(shape);
    p.cgrad = ComplexGrid<T>(shape);
    return p;
  }

  GridShape shape() const { return is_complex ? p_shape(cvalue) : p_shape(value); }

  // Number of stored real scalars; complex entries count twice.
  std::int64_t scalar_count() const { return is_complex ? 2 * cvalue.size() : value.size(); }

  void zero_grad() {
    if (is_complex) {
      cgrad.set_zero();
    } else {
      grad.set_zero();
    }
  }

 private:
  template <class G>
  static GridShape p_shape(const G& g) {
    return g.shape();
  }
};

struct ValueId {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Redirect target for parameter gradients produced by Trace::backward. The
// default sink adds into Parameter::grad; batch-parallel training supplies
// per-worker buffers instead and reduces them in sample order.
template <class T>
struct GradSink {
  virtual ~GradSink() = default;
  virtual void add_real(Parameter<T>& p, const RealGrid<T>& g) = 0;
  virtual void add_complex(Parameter<T>& p, const ComplexGrid<T>& g) = 0;
};

template <class T>
struct DirectGradSink final : GradSink<T> {
  void add_real(Parameter<T>& p, const RealGrid<T>& g) override { p.grad.data() += g.data(); }
  void add_complex(Parameter<T>& p, const ComplexGrid<T>& g) override {
    p.cgrad.real_view() += g.real_view();
  }
};

// Record of one forward computation over (h, w, c) grids. Operations append
// nodes; backward() replays them in reverse creation order, pulling each
// node's accumulated gradient and pushing contributions to its inputs.
//
// Gradients of complex nodes follow the convention
//   G = dL/d(Re z) + i * dL/d(Im z)
// so for an elementwise product c = a * b the contributions are
// conj(b) * G and conj(a) * G.
template <class T>
class Trace {
 public:
  // Backward callbacks receive the trace and the node's own id, pull the
  // accumulated output gradient, and deposit contributions into input nodes.
  using BackwardFn = std::function<void(Trace&, ValueId)>;

  struct Node {
    bool is_complex = false;
    RealGrid<T> value;
    ComplexGrid<T> cvalue;
    RealGrid<T> grad;
    ComplexGrid<T> cgrad;
    bool grad_live = false;
    bool needs_grad = false;
    Parameter<T>* bound = nullptr;
    BackwardFn backward;
  };

  // Constant leaf; gradients do not flow into it.
  ValueId constant(RealGrid<T> v) { return push_real(std::move(v), false); }
  ValueId constant(ComplexGrid<T> v) { return push_complex(std::move(v), false); }

  // Differentiable leaf that is not a parameter (used by gradient checks).
  ValueId variable(RealGrid<T> v) { return push_real(std::move(v), true); }
  ValueId variable(ComplexGrid<T> v) { return push_complex(std::move(v), true); }

  // Leaf bound to a learnable parameter; backward() routes its gradient to
  // the active GradSink.
  ValueId param(Parameter<T>& p) {
    ValueId id = p.is_complex ? push_complex(p.cvalue, true) : push_real(p.value, true);
    nodes_[id.i].bound = &p;
    return id;
  }

  int node_count() const { return static_cast<int>(nodes_.size()); }

  bool is_complex(ValueId id) const { return node(id).is_complex; }

  const RealGrid<T>& value(ValueId id) const {
    const Node& n = node(id);
    require(!n.is_complex, "Trace::value: node is complex");
    return n.value;
  }

  const ComplexGrid<T>& cvalue(ValueId id) const {
    const Node& n = node(id);
    require(n.is_complex, "Trace::cvalue: node is real");
    return n.cvalue;
  }

  bool needs_grad(ValueId id) const { return node(id).needs_grad; }

  // Accumulated gradient of a node after backward(); zero grid if none flowed.
  RealGrid<T> grad(ValueId id) const {
    const Node& n = node(id);
    require(!n.is_complex, "Trace::grad: node is complex");
    if (!n.grad_live) return RealGrid<T>(n.value.shape());
    return n.grad;
  }

  ComplexGrid<T> cgrad(ValueId id) const {
    const Node& n = node(id);
    require(n.is_complex, "Trace::cgrad: node is real");
    if (!n.grad_live) return ComplexGrid<T>(n.cvalue.shape());
    return n.cgrad;
  }

  // Zero-copy access to a live gradient (valid inside backward callbacks).
  const RealGrid<T>& grad_ref(ValueId id) const {
    const Node& n = node(id);
    require(!n.is_complex && n.grad_live, "Trace::grad_ref: no live real gradient");
    return n.grad;
  }

  const ComplexGrid<T>& cgrad_ref(ValueId id) const {
    const Node& n = node(id);
    require(n.is_complex && n.grad_live, "Trace::cgrad_ref: no live complex gradient");
    return n.cgrad;
  }

  // Used inside backward closures to deposit gradient into an input node.
  RealGrid<T>& grad_buffer(ValueId id) {
    Node& n = nodes_[id.i];
    if (!n.grad_live) {
      n.grad = RealGrid<T>(n.value.shape());
      n.grad_live = true;
    }
    return n.grad;
  }

  ComplexGrid<T>& cgrad_buffer(ValueId id) {
    Node& n = nodes_[id.i];
    if (!n.grad_live) {
      n.cgrad = ComplexGrid<T>(n.cvalue.shape());
      n.grad_live = true;
    }
    return n.cgrad;
  }

  ValueId emit_real(RealGrid<T> value, std::initializer_list<ValueId> inputs, BackwardFn backward) {
    return emit(push_real(std::move(value), any_needs_grad(inputs)), std::move(backward));
  }

  ValueId emit_complex(ComplexGrid<T> value, std::initializer_list<ValueId> inputs,
                       BackwardFn backward) {
    return emit(push_complex(std::move(value), any_needs_grad(inputs)), std::move(backward));
  }

  // Reverse sweep from a real scalar loss node. Parameter-bound leaves feed
  // the provided sink (or Parameter::grad when sink is null).
  void backward(ValueId loss, GradSink<T>* sink = nullptr) {
    require(loss.valid() && loss.i < node_count(), "backward: invalid loss node");
    Node& ln = nodes_[loss.i];
    require(!ln.is_complex, "backward: loss must be real");
    require(ln.value.shape() == GridShape{1, 1, 1},
            "backward: loss must be a scalar grid, got " + ln.value.shape().str());
    DirectGradSink<T> direct;
    if (sink == nullptr) sink = &direct;
    grad_buffer(loss)[0] = T(1);
    for (int i = loss.i; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.grad_live) continue;
      if (n.backward) n.backward(*this, ValueId{i});
      if (n.bound != nullptr) {
        if (n.is_complex) {
          sink->add_complex(*n.bound, n.cgrad);
        } else {
          sink->add_real(*n.bound, n.grad);
        }
      }
    }
  }

 private:
  ValueId push_real(RealGrid<T> v, bool needs_grad) {
    Node n;
    n.is_complex = false;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return ValueId{static_cast<int>(nodes_.size()) - 1};
  }

  ValueId push_complex(ComplexGrid<T> v, bool needs_grad) {
    Node n;
    n.is_complex = true;
    n.cvalue = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return ValueId{static_cast<int>(nodes_.size()) - 1};
  }

  ValueId emit(ValueId id, BackwardFn backward) {
    if (nodes_[id.i].needs_grad) nodes_[id.i].backward = std::move(backward);
    return id;
  }

  bool any_needs_grad(std::initializer_list<ValueId> inputs) const {
    for (ValueId id : inputs) {
      if (id.valid() && node(id).needs_grad) return true;
    }
    return false;
  }

  const Node& node(ValueId id) const {
    require(id.valid() && id.i < node_count(), "Trace: invalid node id");
    return nodes_[id.i];
  }

  std::vector<Node> nodes_;
};

}  // namespace orthoseis
