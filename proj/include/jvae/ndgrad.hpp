#pragma once

// Define-by-run reverse-mode automatic differentiation over dense 2-D
// matrices. A Graph is built fresh for every forward pass; each op appends a
// node holding its value, its inputs and whatever it needs for the backward
// rule. Nodes are appended in evaluation order, so the node vector is already
// topologically sorted and backward() is a single reverse sweep.

#include "jvae/common.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace jvae::nd {

/// Trainable tensor. `grad` accumulates across backward() calls until
/// zero_grad() is called.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix value)
      : name(std::move(name)), value(std::move(value)),
        grad(Matrix::Zero(this->value.rows(), this->value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  std::string name;
  Matrix value;
  Matrix grad;
};

enum class Op : std::uint8_t {
  Constant,
  Param,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Exp,
  Log,
  Relu,
  Sigmoid,
  Square,
  Abs,
  SoftmaxRows,
  LogSoftmaxRows,
  ConcatCols,
  Sum,
};

const char* op_name(Op op);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *g_; }
  std::size_t id() const { return id_; }
  bool valid() const { return g_ != nullptr; }

  const Matrix& value() const;
  /// Gradient of the last backward() target with respect to this node.
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}

  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var scalar(double v);
  /// Leaf bound to a trainable parameter; backward() adds into p.grad.
  Var param(Parameter& p);

  /// Reverse sweep from a 1x1 node. Node gradients are recomputed from
  /// scratch on every call; parameter gradients accumulate.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by the free-function ops below.
  Var record(Op op, Matrix value, Var a, Var b = {}, double aux = 0.0);

 private:
  friend class Var;

  struct Node {
    Op op = Op::Constant;
    std::array<std::size_t, 2> in{0, 0};
    int arity = 0;
    bool needs_grad = false;
    double aux = 0.0;
    Parameter* param = nullptr;
    Matrix value;
    Matrix grad;
  };

  void backprop_node(std::size_t id);
  void accumulate(std::size_t id, const Matrix& g);

  std::vector<Node> nodes_;
};

// Structural ops.
Var matmul(Var a, Var b);
/// Elementwise; `b` may also be a 1xC row vector or 1x1 scalar, broadcast
/// over the rows of `a`.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var scale(Var a, double s);
Var operator*(double s, Var a);
Var operator*(Var a, double s);
Var operator+(Var a, double s);
Var operator-(Var a, double s);
Var operator-(Var a);
Var concat_cols(Var a, Var b);

// Pointwise nonlinearities.
Var exp(Var a);
/// Throws DomainError on any non-positive entry.
Var log(Var a);
/// Subgradient 0 at 0.
Var relu(Var a);
Var sigmoid(Var a);
Var square(Var a);
/// Subgradient 0 at 0.
Var abs(Var a);

// Row-wise normalizers, max-shifted for stability.
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);

// Reductions to 1x1.
Var sum(Var a);
/// sum(a) / rows(a): the batch mean of a per-sample sum.
Var batch_mean(Var a);

// Plain-matrix helpers shared with the non-graph code paths.
Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

}  // namespace jvae::nd
