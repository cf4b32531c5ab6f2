#include "jepa/core/tensor.hpp"

#include "jepa/core/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace jepa {

Eigen::Index shape_numel(const Shape& s) {
  Eigen::Index n = 1;
  for (Eigen::Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

static std::shared_ptr<TensorNode> make_node(Shape shape) {
  for (Eigen::Index d : shape)
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->values = ArrayX::Zero(shape_numel(n->shape));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, Scalar v, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->values = ArrayX::Constant(shape_numel(n->shape), v);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(Scalar v) { return full({1}, v); }

Tensor Tensor::from_data(Shape shape, const Scalar* data) {
  auto n = make_node(std::move(shape));
  n->values = Eigen::Map<const ArrayX>(data, shape_numel(n->shape));
  return Tensor(std::move(n));
}

Tensor Tensor::from_vector(Shape shape, const std::vector<Scalar>& data) {
  if (Eigen::Index(data.size()) != shape_numel(shape))
    throw std::invalid_argument("tensor: data size " + std::to_string(data.size()) +
                                " does not fill shape " + shape_str(shape));
  return from_data(std::move(shape), data.data());
}

Tensor Tensor::randn(Shape shape, std::uint64_t key, Scalar stddev, bool requires_grad) {
  auto n = make_node(std::move(shape));
  Eigen::Index count = shape_numel(n->shape);
  n->values.resize(count);
  for (Eigen::Index i = 0; i < count; ++i)
    n->values[i] = stddev * rng::normal(key, std::uint64_t(i));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const { return n_->shape; }
Eigen::Index Tensor::numel() const { return n_->values.size(); }
int Tensor::rank() const { return int(n_->shape.size()); }

Eigen::Index Tensor::dim(int i) const {
  int r = rank();
  if (i < 0) i += r;
  if (i < 0 || i >= r)
    throw std::invalid_argument("tensor: dim " + std::to_string(i) + " out of rank " + std::to_string(r));
  return n_->shape[size_t(i)];
}

ArrayX& Tensor::values() { return n_->values; }
const ArrayX& Tensor::values() const { return n_->values; }
Scalar* Tensor::data() { return n_->values.data(); }
const Scalar* Tensor::data() const { return n_->values.data(); }

Scalar Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("tensor: item() on shape " + shape_str(shape()));
  if (!std::isfinite(n_->values[0])) throw std::runtime_error("tensor: non-finite scalar");
  return n_->values[0];
}

bool Tensor::requires_grad() const { return n_->requires_grad; }
Tensor& Tensor::set_requires_grad(bool v) {
  n_->requires_grad = v;
  return *this;
}

bool Tensor::grad_touched() const { return n_->grad.size() > 0; }

ArrayX& Tensor::grad_ref() {
  if (n_->grad.size() == 0) n_->grad = ArrayX::Zero(n_->values.size());
  return n_->grad;
}

const ArrayX& Tensor::grad_raw() const { return n_->grad; }

Tensor Tensor::grad() const {
  Tensor g = Tensor::zeros(n_->shape);
  if (grad_touched()) g.values() = n_->grad;
  return g;
}

void Tensor::zero_grad() { n_->grad.resize(0); }

MatMap Tensor::mat() {
  Eigen::Index cols = n_->shape.back();
  return MatMap(data(), numel() / cols, cols);
}
ConstMatMap Tensor::mat() const {
  Eigen::Index cols = n_->shape.back();
  return ConstMatMap(data(), numel() / cols, cols);
}
MatMap Tensor::mat(Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != numel())
    throw std::invalid_argument("tensor: mat view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " does not cover " + shape_str(shape()));
  return MatMap(data(), rows, cols);
}
ConstMatMap Tensor::mat(Eigen::Index rows, Eigen::Index cols) const {
  if (rows * cols != numel())
    throw std::invalid_argument("tensor: mat view " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " does not cover " + shape_str(shape()));
  return ConstMatMap(data(), rows, cols);
}

static thread_local int g_no_grad_depth = 0;
bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));

  // Iterative post-order DFS; reversed post-order visits every node after all
  // of its consumers.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].node();
      if (p->backward_fn || p->requires_grad)
        if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor(loss).grad_ref().setConstant(1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn && node->grad.size() > 0) node->backward_fn(*node);
    if (node->drop_ctx) {
      node->drop_ctx();
      node->drop_ctx = nullptr;
    }
  }
}

Parameter::Parameter(Tensor value, bool trainable) : value_(std::move(value)), trainable_(trainable) {
  value_.set_requires_grad(trainable);
}

}  // namespace jepa
