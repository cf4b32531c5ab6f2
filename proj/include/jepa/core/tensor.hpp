#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace jepa {

// The whole stack runs in 32-bit floats; loss and gradient reductions
// accumulate in double where it matters.
using Scalar = float;
using ArrayX = Eigen::ArrayXf;
using Shape = std::vector<Eigen::Index>;

using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatRM>;
using ConstMatMap = Eigen::Map<const MatRM>;

Eigen::Index shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;

// Shared handle to one node of a define-by-run tape. Copies alias the same
// storage; the graph is the chain of parent handles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar v, bool requires_grad = false);
  static Tensor scalar(Scalar v);
  static Tensor from_data(Shape shape, const Scalar* data);
  static Tensor from_vector(Shape shape, const std::vector<Scalar>& data);
  static Tensor randn(Shape shape, std::uint64_t key, Scalar stddev = 1.0f,
                      bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  Eigen::Index numel() const;
  int rank() const;
  Eigen::Index dim(int i) const;  // negative i counts from the back

  ArrayX& values();
  const ArrayX& values() const;
  Scalar* data();
  const Scalar* data() const;
  Scalar item() const;  // scalar tensors only

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  // Gradient buffer stays empty until backward first touches it; an empty
  // buffer means "structurally unreached", which optimizers treat as no update.
  bool grad_touched() const;
  ArrayX& grad_ref();              // allocates and zeros on first use
  const ArrayX& grad_raw() const;  // may be empty
  Tensor grad() const;             // zeros if untouched; always value-shaped
  void zero_grad();                // back to untouched

  // Row-major matrix view [numel/last_dim, last_dim].
  MatMap mat();
  ConstMatMap mat() const;
  // Arbitrary row-major view; rows*cols must equal numel().
  MatMap mat(Eigen::Index rows, Eigen::Index cols);
  ConstMatMap mat(Eigen::Index rows, Eigen::Index cols) const;

  TensorNode* node() const { return n_.get(); }
  const std::shared_ptr<TensorNode>& handle() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

struct TensorNode {
  Shape shape;
  ArrayX values;
  ArrayX grad;  // size 0 until first accumulation
  bool requires_grad = false;
  std::vector<Tensor> parents;
  // Reads this->grad, accumulates into parents' grad.
  std::function<void(TensorNode&)> backward_fn;
  // Frees captured forward context once this node's backward has run.
  std::function<void()> drop_ctx;
};

// While any guard is alive, ops record no tape (pure forward).
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Seeds d(loss)/d(loss) = 1 and walks the tape in reverse topological order.
// The loss must be a scalar.
void backward(const Tensor& loss);

// A named leaf with an update policy. gradient() is always value-shaped;
// non-trainable parameters never receive optimizer updates.
class Parameter {
 public:
  Parameter() = default;
  Parameter(Tensor value, bool trainable);

  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor gradient() const { return value_.grad(); }
  bool trainable() const { return trainable_; }

 private:
  Tensor value_;
  bool trainable_ = true;
};

struct NamedParameter {
  std::string name;
  Parameter* param = nullptr;
  int group = 0;  // optimizer learning-rate group
};

}  // namespace jepa
