#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace facedepth {

class Tensor;

// Op tag carried by every graph node. Loss code inspects it to fuse the
// sigmoid/BCE pair into a stable form.
enum class OpKind {
  kLeaf,
  kConv2d,
  kConvTranspose2d,
  kBatchNorm,
  kRelu,
  kLeakyRelu,
  kTanh,
  kSigmoid,
  kLinear,
  kAvgPool,
  kReshape,
  kAdd,
  kSub,
  kMul,
  kScale,
  kSum,
  kMean,
  kAbsDiff,
  kMse,
  kBce,
};

namespace detail {

struct TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

// Per-backward-pass gradient workspace. Contributions accumulate here and
// are flushed into the persistent grad buffers once the pass completes, so
// repeated backward() calls add up instead of double-counting shared paths.
class GradTable {
 public:
  std::vector<float>& slot(const TensorImpl* node, size_t numel) {
    auto it = slots_.find(node);
    if (it == slots_.end()) {
      it = slots_.emplace(node, std::vector<float>(numel, 0.0f)).first;
    }
    return it->second;
  }
  const std::vector<float>* find(const TensorImpl* node) const {
    auto it = slots_.find(node);
    return it == slots_.end() ? nullptr : &it->second;
  }

 private:
  std::unordered_map<const TensorImpl*, std::vector<float>> slots_;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::vector<float> grad;  // persistent; allocated on first backward flush

  OpKind op = OpKind::kLeaf;
  std::vector<ImplPtr> parents;
  // Receives this node's gradient and scatters contributions to parents.
  std::function<void(const std::vector<float>&, GradTable&)> backward_fn;

  TensorImpl() { ++live_count_; }
  ~TensorImpl() { --live_count_; }
  TensorImpl(const TensorImpl&) = delete;
  TensorImpl& operator=(const TensorImpl&) = delete;

  size_t numel() const { return data.size(); }

  static long live_count() { return live_count_.load(); }

 private:
  static inline std::atomic<long> live_count_{0};
};

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
    n *= static_cast<size_t>(d);
  }
  return n;
}

}  // namespace detail

// Dense row-major float32 tensor with reverse-mode autodiff. A Tensor is a
// value handle over shared node storage; copying it is cheap and aliases the
// same node. Forward results are treated as immutable; parameter mutation
// (optimizer steps, init) goes through mutable_data() under exclusive access.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<int> shape, std::vector<float> data, bool requires_grad = false) {
    const size_t n = detail::shape_numel(shape);
    if (n != data.size()) {
      throw std::invalid_argument("tensor data length does not match shape product");
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0f, requires_grad);
  }

  static Tensor ones(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), 1.0f, requires_grad);
  }

  static Tensor full(std::vector<int> shape, float value, bool requires_grad = false) {
    const size_t n = detail::shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
  }

  static Tensor scalar(float value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }

  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(size_t axis) const { return impl_->shape.at(axis); }
  size_t rank() const { return impl_->shape.size(); }
  size_t numel() const { return impl_->data.size(); }

  const std::vector<float>& data() const { return impl_->data; }
  std::vector<float>& mutable_data() { return impl_->data; }

  float item() const {
    if (numel() != 1) throw std::invalid_argument("item() requires a single-element tensor");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }

  // Toggling on a leaf freezes/unfreezes it; backward skips frozen leaves
  // entirely, so no gradient is retained on them.
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }

  const std::vector<float>& grad() const {
    if (impl_->grad.empty()) throw std::runtime_error("tensor has no gradient populated");
    return impl_->grad;
  }

  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
  }

  // New leaf with copied values and no graph history.
  Tensor detach() const { return Tensor(impl_->shape, impl_->data, false); }

  OpKind op_kind() const { return impl_->op; }

  // Reverse-mode pass from a scalar. Visits each reachable node exactly once
  // in reverse topological order, then adds this pass's contributions onto
  // the persistent grad of every requires_grad node.
  void backward() const {
    if (numel() != 1) {
      throw std::invalid_argument("backward() requires a scalar loss tensor");
    }
    detail::TensorImpl* root = impl_.get();
    if (!root->requires_grad) {
      throw std::invalid_argument("backward() on a tensor with no tracked ancestors");
    }

    // Iterative post-order DFS over parents restricted to tracked nodes.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> visited;
    struct Frame {
      detail::TensorImpl* node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root);
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        detail::TensorImpl* p = f.node->parents[f.next_parent++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }

    detail::GradTable table;
    table.slot(root, 1)[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::TensorImpl* node = *it;
      const std::vector<float>* gout = table.find(node);
      if (gout == nullptr || !node->backward_fn) continue;
      node->backward_fn(*gout, table);
    }
    for (detail::TensorImpl* node : order) {
      const std::vector<float>* g = table.find(node);
      if (g == nullptr) continue;
      if (node->grad.empty()) node->grad.assign(node->numel(), 0.0f);
      for (size_t i = 0; i < g->size(); ++i) node->grad[i] += (*g)[i];
    }
  }

  // Live node count; used to check that dropping results releases the graph.
  static long live_node_count() { return detail::TensorImpl::live_count(); }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const detail::ImplPtr& impl_ptr() const { return impl_; }

  // Builder for op results. Wires parents/backward only when some input is
  // tracked at build time; untracked forwards stay plain leaves and retain no
  // graph. Only inputs tracked at build time are kept as graph edges, so
  // toggling requires_grad on a leaf afterwards does not change where an
  // existing graph routes gradients.
  static Tensor make_node(std::vector<int> shape, std::vector<float> data, OpKind op,
                          std::vector<detail::ImplPtr> parents,
                          std::function<void(const std::vector<float>&, detail::GradTable&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data), false);
    std::vector<detail::ImplPtr> tracked_parents;
    for (const auto& p : parents) {
      if (p->requires_grad) tracked_parents.push_back(p);
    }
    out.impl_->op = op;
    if (!tracked_parents.empty()) {
      out.impl_->requires_grad = true;
      out.impl_->parents = std::move(tracked_parents);
      out.impl_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  detail::ImplPtr impl_;
};

// Named parameter handle; the Tensor aliases the model's storage.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

namespace detail {

// Gradient routing handle captured inside backward closures. Whether an
// input receives gradient is fixed when the node is built; freezing or
// unfreezing a leaf later does not affect graphs that already exist.
class GradSlot {
 public:
  explicit GradSlot(const ImplPtr& input) : impl_(input), wanted_(input->requires_grad) {}

  float* get(GradTable& table) const {
    return wanted_ ? table.slot(impl_.get(), impl_->numel()).data() : nullptr;
  }
  const std::vector<float>& data() const { return impl_->data; }
  size_t numel() const { return impl_->numel(); }
  const ImplPtr& impl() const { return impl_; }

 private:
  ImplPtr impl_;
  bool wanted_;
};

}  // namespace detail

}  // namespace facedepth
