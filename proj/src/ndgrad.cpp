#include "jvae/ndgrad.hpp"

#include <cmath>

namespace jvae::nd {

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Square: return "square";
    case Op::Abs: return "abs";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::LogSoftmaxRows: return "log_softmax_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::Sum: return "sum";
  }
  return "?";
}

const Matrix& Var::value() const { return g_->nodes_[id_].value; }

const Matrix& Var::grad() const {
  const auto& n = g_->nodes_[id_];
  if (n.grad.size() == 0) {
    throw ContractError("node has no gradient; call backward() on a loss that depends on it");
  }
  return n.grad;
}

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("item() on a " + shape_str(v) + " tensor");
  }
  return v(0, 0);
}

Var Graph::constant(Matrix value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Var Graph::param(Parameter& p) {
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.param = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Op op, Matrix value, Var a, Var b, double aux) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.aux = aux;
  n.in[0] = a.id();
  n.arity = 1;
  n.needs_grad = nodes_[a.id()].needs_grad;
  if (b.valid()) {
    if (&b.graph() != this) throw ContractError("operands belong to different graphs");
    n.in[1] = b.id();
    n.arity = 2;
    n.needs_grad = n.needs_grad || nodes_[b.id()].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw ContractError("loss belongs to a different graph");
  const Matrix& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(lv));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (nodes_[id].needs_grad && nodes_[id].grad.size() != 0) backprop_node(id);
  }
}

namespace {

// Reduce a gradient computed at the broadcast shape back to `target`'s shape.
Matrix unbroadcast(const Matrix& g, const Matrix& target) {
  if (target.rows() == g.rows() && target.cols() == g.cols()) return g;
  if (target.rows() == 1 && target.cols() == 1) return Matrix::Constant(1, 1, g.sum());
  return g.colwise().sum();
}

void check_broadcast(const Matrix& a, const Matrix& b, const char* what) {
  const bool same = a.rows() == b.rows() && a.cols() == b.cols();
  const bool row = b.rows() == 1 && b.cols() == a.cols();
  const bool scalar = b.rows() == 1 && b.cols() == 1;
  if (!(same || row || scalar)) {
    throw DimensionError(std::string(what) + ": cannot broadcast " + shape_str(b) + " onto " +
                         shape_str(a));
  }
}

// Broadcast b to a's shape.
Matrix expand(const Matrix& b, Index rows, Index cols) {
  if (b.rows() == rows && b.cols() == cols) return b;
  if (b.rows() == 1 && b.cols() == 1) return Matrix::Constant(rows, cols, b(0, 0));
  return b.replicate(rows, 1);
}

}  // namespace

void Graph::backprop_node(std::size_t id) {
  // nodes_ is not resized during the sweep, so these references stay valid.
  const Node& n = nodes_[id];
  const Matrix& g = n.grad;
  const auto a = n.in[0];
  const auto b = n.in[1];

  switch (n.op) {
    case Op::Constant:
      break;
    case Op::Param:
      n.param->grad += g;
      break;
    case Op::MatMul:
      if (nodes_[a].needs_grad) accumulate(a, g * nodes_[b].value.transpose());
      if (nodes_[b].needs_grad) accumulate(b, nodes_[a].value.transpose() * g);
      break;
    case Op::Add:
      accumulate(a, g);
      if (nodes_[b].needs_grad) accumulate(b, unbroadcast(g, nodes_[b].value));
      break;
    case Op::Sub:
      accumulate(a, g);
      if (nodes_[b].needs_grad) accumulate(b, unbroadcast(-g, nodes_[b].value));
      break;
    case Op::Mul: {
      const Matrix& av = nodes_[a].value;
      const Matrix bv = expand(nodes_[b].value, av.rows(), av.cols());
      if (nodes_[a].needs_grad) accumulate(a, g.cwiseProduct(bv));
      if (nodes_[b].needs_grad) accumulate(b, unbroadcast(g.cwiseProduct(av), nodes_[b].value));
      break;
    }
    case Op::Scale:
      accumulate(a, n.aux * g);
      break;
    case Op::AddScalar:
      accumulate(a, g);
      break;
    case Op::Exp:
      accumulate(a, g.cwiseProduct(n.value));
      break;
    case Op::Log:
      accumulate(a, g.cwiseQuotient(nodes_[a].value));
      break;
    case Op::Relu:
      accumulate(a, (nodes_[a].value.array() > 0.0).select(g.array(), 0.0).matrix());
      break;
    case Op::Sigmoid:
      accumulate(a, (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
      break;
    case Op::Square:
      accumulate(a, 2.0 * g.cwiseProduct(nodes_[a].value));
      break;
    case Op::Abs:
      accumulate(a, (g.array() * nodes_[a].value.array().sign()).matrix());
      break;
    case Op::SoftmaxRows: {
      const Matrix& y = n.value;
      const Vector dot = g.cwiseProduct(y).rowwise().sum();
      accumulate(a, y.cwiseProduct(g - dot.replicate(1, g.cols())));
      break;
    }
    case Op::LogSoftmaxRows: {
      const Matrix y = n.value.array().exp().matrix();
      const Vector gs = g.rowwise().sum();
      accumulate(a, g - y.cwiseProduct(gs.replicate(1, g.cols())));
      break;
    }
    case Op::ConcatCols: {
      const Index ca = nodes_[a].value.cols();
      const Index cb = nodes_[b].value.cols();
      if (nodes_[a].needs_grad) accumulate(a, g.leftCols(ca));
      if (nodes_[b].needs_grad) accumulate(b, g.rightCols(cb));
      break;
    }
    case Op::Sum:
      accumulate(a, Matrix::Constant(nodes_[a].value.rows(), nodes_[a].value.cols(), g(0, 0)));
      break;
  }
}

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape_str(av) + " x " + shape_str(bv));
  }
  Matrix c;
  c.noalias() = av * bv;
  return a.graph().record(Op::MatMul, std::move(c), a, b);
}

Var operator+(Var a, Var b) {
  check_broadcast(a.value(), b.value(), "add");
  const Matrix& av = a.value();
  return a.graph().record(Op::Add, av + expand(b.value(), av.rows(), av.cols()), a, b);
}

Var operator-(Var a, Var b) {
  check_broadcast(a.value(), b.value(), "sub");
  const Matrix& av = a.value();
  return a.graph().record(Op::Sub, av - expand(b.value(), av.rows(), av.cols()), a, b);
}

Var operator*(Var a, Var b) {
  check_broadcast(a.value(), b.value(), "mul");
  const Matrix& av = a.value();
  return a.graph().record(Op::Mul, av.cwiseProduct(expand(b.value(), av.rows(), av.cols())), a, b);
}

Var scale(Var a, double s) { return a.graph().record(Op::Scale, s * a.value(), a, {}, s); }
Var operator*(double s, Var a) { return scale(a, s); }
Var operator*(Var a, double s) { return scale(a, s); }
Var operator-(Var a) { return scale(a, -1.0); }

Var operator+(Var a, double s) {
  return a.graph().record(Op::AddScalar, (a.value().array() + s).matrix(), a, {}, s);
}
Var operator-(Var a, double s) { return a + (-s); }

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: " + shape_str(av) + " and " + shape_str(bv));
  }
  Matrix c(av.rows(), av.cols() + bv.cols());
  c << av, bv;
  return a.graph().record(Op::ConcatCols, std::move(c), a, b);
}

Var exp(Var a) { return a.graph().record(Op::Exp, a.value().array().exp().matrix(), a); }

Var log(Var a) {
  const Matrix& av = a.value();
  if (!(av.array() > 0.0).all()) {
    throw DomainError("log: non-positive input (min " + std::to_string(av.minCoeff()) + ")");
  }
  return a.graph().record(Op::Log, av.array().log().matrix(), a);
}

Var relu(Var a) { return a.graph().record(Op::Relu, a.value().cwiseMax(0.0), a); }

Var sigmoid(Var a) {
  const Matrix& av = a.value();
  Matrix y(av.rows(), av.cols());
  for (Index i = 0; i < av.size(); ++i) {
    const double x = av.data()[i];
    if (x >= 0.0) {
      y.data()[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      y.data()[i] = e / (1.0 + e);
    }
  }
  return a.graph().record(Op::Sigmoid, std::move(y), a);
}

Var square(Var a) { return a.graph().record(Op::Square, a.value().array().square().matrix(), a); }

Var abs(Var a) { return a.graph().record(Op::Abs, a.value().cwiseAbs(), a); }

Matrix log_softmax_rows(const Matrix& logits) {
  const Vector mx = logits.rowwise().maxCoeff();
  Matrix shifted = logits - mx.replicate(1, logits.cols());
  const Vector lse = shifted.array().exp().rowwise().sum().log().matrix();
  shifted -= lse.replicate(1, logits.cols());
  return shifted;
}

Matrix softmax_rows(const Matrix& logits) {
  const Vector mx = logits.rowwise().maxCoeff();
  Matrix e = (logits - mx.replicate(1, logits.cols())).array().exp().matrix();
  const Vector s = e.rowwise().sum();
  return e.cwiseQuotient(s.replicate(1, logits.cols()));
}

Var softmax_rows(Var a) { return a.graph().record(Op::SoftmaxRows, softmax_rows(a.value()), a); }

Var log_softmax_rows(Var a) {
  return a.graph().record(Op::LogSoftmaxRows, log_softmax_rows(a.value()), a);
}

Var sum(Var a) { return a.graph().record(Op::Sum, Matrix::Constant(1, 1, a.value().sum()), a); }

Var batch_mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.rows())); }

}  // namespace jvae::nd
