#include "dancecam/nn/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "dancecam/core/types.hpp"

namespace dancecam::nn {

std::size_t ParameterSet::add(std::string name, Matrix init) {
  params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(init)}));
  return params_.size() - 1;
}

std::size_t ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i]->name == name) return i;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::numScalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Gradients::Gradients(const ParameterSet& ps) {
  g.reserve(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i)
    g.push_back(Matrix::Zero(ps[i].value.rows(), ps[i].value.cols()));
}

void Gradients::zero() {
  for (auto& m : g) m.setZero();
}

void Gradients::add(const Gradients& other, double s) {
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * other.g[i];
}

void Gradients::scale(double s) {
  for (auto& m : g) m *= s;
}

double Gradients::squaredNorm() const {
  double n = 0.0;
  for (const auto& m : g) n += m.squaredNorm();
  return n;
}

Matrix& Node::gradRef() {
  if (grad.size() == 0) grad = Matrix::Zero(value().rows(), value().cols());
  return grad;
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Var makeOp(Matrix value, std::vector<NodePtr> inputs, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  for (const auto& in : inputs) n->needs_grad = n->needs_grad || in->needs_grad;
  if (n->needs_grad) {
    n->inputs = std::move(inputs);
    n->backprop = std::move(backprop);
  }
  return Var(std::move(n));
}

void requireSameShape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

// Input i of node n, when it needs a gradient.
Node* in(Node& n, std::size_t i) {
  Node* p = n.inputs[i].get();
  return p->needs_grad ? p : nullptr;
}

}  // namespace

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  return Var(std::move(n));
}

Var variable(Matrix value) {
  auto n = std::make_shared<Node>();
  n->own = std::move(value);
  n->needs_grad = true;
  return Var(std::move(n));
}

Var param(const ParameterSet& ps, std::size_t index) {
  auto n = std::make_shared<Node>();
  n->ext = &ps[index].value;
  n->needs_grad = true;
  n->param_index = static_cast<long>(index);
  return Var(std::move(n));
}

void backward(const Var& loss, Gradients* grads) {
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
  if (!loss.needsGrad()) return;

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->needs_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad.resize(0, 0);
  loss.node()->gradRef()(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->grad.size() == 0) continue;
    if (n->backprop) n->backprop(*n);
    if (n->param_index >= 0 && grads) grads->g[static_cast<std::size_t>(n->param_index)] += n->grad;
  }
}

Var add(const Var& a, const Var& b) {
  requireSameShape(a, b, "add");
  return makeOp(a.value() + b.value(), {a.node(), b.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += n.grad;
    if (auto* y = in(n, 1)) y->gradRef() += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  requireSameShape(a, b, "sub");
  return makeOp(a.value() - b.value(), {a.node(), b.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += n.grad;
    if (auto* y = in(n, 1)) y->gradRef() -= n.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  requireSameShape(a, b, "mul");
  return makeOp(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& n) {
    const Matrix& av = n.inputs[0]->value();
    const Matrix& bv = n.inputs[1]->value();
    if (auto* x = in(n, 0)) x->gradRef() += n.grad.cwiseProduct(bv);
    if (auto* y = in(n, 1)) y->gradRef() += n.grad.cwiseProduct(av);
  });
}

Var scale(const Var& a, double s) {
  return makeOp(a.value() * s, {a.node()}, [s](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += s * n.grad;
  });
}

Var addScalar(const Var& a, double s) {
  return makeOp(a.value().array() + s, {a.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += n.grad;
  });
}

Var addRow(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("addRow: row shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  return makeOp(std::move(v), {a.node(), row.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += n.grad;
    if (auto* r = in(n, 1)) r->gradRef() += n.grad.colwise().sum();
  });
}

Var mulRow(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mulRow: row shape mismatch");
  Matrix v = a.value().array().rowwise() * row.value().row(0).array();
  return makeOp(std::move(v), {a.node(), row.node()}, [](Node& n) {
    const Matrix& av = n.inputs[0]->value();
    const Matrix& rv = n.inputs[1]->value();
    if (auto* x = in(n, 0)) x->gradRef().array() += n.grad.array().rowwise() * rv.row(0).array();
    if (auto* r = in(n, 1)) r->gradRef() += n.grad.cwiseProduct(av).colwise().sum();
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
  return makeOp(a.value() * b.value(), {a.node(), b.node()}, [](Node& n) {
    const Matrix& av = n.inputs[0]->value();
    const Matrix& bv = n.inputs[1]->value();
    if (auto* x = in(n, 0)) x->gradRef().noalias() += n.grad * bv.transpose();
    if (auto* y = in(n, 1)) y->gradRef().noalias() += av.transpose() * n.grad;
  });
}

Var matmulNT(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmulNT: inner dimension mismatch");
  return makeOp(a.value() * b.value().transpose(), {a.node(), b.node()}, [](Node& n) {
    const Matrix& av = n.inputs[0]->value();
    const Matrix& bv = n.inputs[1]->value();
    if (auto* x = in(n, 0)) x->gradRef().noalias() += n.grad * bv;
    if (auto* y = in(n, 1)) y->gradRef().noalias() += n.grad.transpose() * av;
  });
}

Var transpose(const Var& a) {
  return makeOp(a.value().transpose(), {a.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += n.grad.transpose();
  });
}

Var sliceRows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("sliceRows: out of range");
  return makeOp(a.value().middleRows(start, count), {a.node()}, [start, count](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef().middleRows(start, count) += n.grad;
  });
}

Var sliceCols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("sliceCols: out of range");
  return makeOp(a.value().middleCols(start, count), {a.node()}, [start, count](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef().middleCols(start, count) += n.grad;
  });
}

Var concatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concatCols: no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != parts[0].rows()) throw ShapeError("concatCols: row mismatch");
    cols += p.cols();
  }
  Matrix v(parts[0].rows(), cols);
  std::vector<NodePtr> nodes;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    nodes.push_back(p.node());
  }
  return makeOp(std::move(v), std::move(nodes), [](Node& n) {
    Eigen::Index c0 = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const Eigen::Index w = n.inputs[i]->value().cols();
      if (auto* x = in(n, i)) x->gradRef() += n.grad.middleCols(c0, w);
      c0 += w;
    }
  });
}

Var concatRows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concatRows: no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts[0].cols()) throw ShapeError("concatRows: col mismatch");
    rows += p.rows();
  }
  Matrix v(rows, parts[0].cols());
  std::vector<NodePtr> nodes;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    nodes.push_back(p.node());
  }
  return makeOp(std::move(v), std::move(nodes), [](Node& n) {
    Eigen::Index r0 = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const Eigen::Index h = n.inputs[i]->value().rows();
      if (auto* x = in(n, i)) x->gradRef() += n.grad.middleRows(r0, h);
      r0 += h;
    }
  });
}

Var placeRows(const Var& a, Eigen::Index rows, const std::vector<Eigen::Index>& index) {
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw ShapeError("placeRows: index size");
  Matrix v = Matrix::Zero(rows, a.cols());
  std::vector<Eigen::Index> winner(static_cast<std::size_t>(rows), -1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= rows) throw ShapeError("placeRows: index out of range");
    v.row(index[i]) = a.value().row(static_cast<Eigen::Index>(i));
    winner[static_cast<std::size_t>(index[i])] = static_cast<Eigen::Index>(i);
  }
  return makeOp(std::move(v), {a.node()}, [winner](Node& n) {
    if (auto* x = in(n, 0)) {
      Matrix& g = x->gradRef();
      for (std::size_t r = 0; r < winner.size(); ++r)
        if (winner[r] >= 0) g.row(winner[r]) += n.grad.row(static_cast<Eigen::Index>(r));
    }
  });
}

Var diffRows(const Var& a) {
  const Eigen::Index r = a.rows();
  if (r < 2) return constant(Matrix::Zero(0, a.cols()));
  Matrix v = a.value().bottomRows(r - 1) - a.value().topRows(r - 1);
  return makeOp(std::move(v), {a.node()}, [r](Node& n) {
    if (auto* x = in(n, 0)) {
      Matrix& g = x->gradRef();
      g.bottomRows(r - 1) += n.grad;
      g.topRows(r - 1) -= n.grad;
    }
  });
}

Var cumsumRows(const Var& a) {
  Matrix v = a.value();
  for (Eigen::Index i = 1; i < v.rows(); ++i) v.row(i) += v.row(i - 1);
  return makeOp(std::move(v), {a.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) {
      Matrix g = n.grad;
      for (Eigen::Index i = g.rows() - 2; i >= 0; --i) g.row(i) += g.row(i + 1);
      x->gradRef() += g;
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix v = x.unaryExpr([](double z) {
    return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
  });
  return makeOp(std::move(v), {a.node()}, [](Node& n) {
    if (auto* in0 = in(n, 0)) {
      const Matrix d = n.inputs[0]->value().unaryExpr([](double z) {
        const double t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
        return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
      });
      in0->gradRef() += n.grad.cwiseProduct(d);
    }
  });
}

Var sigmoid(const Var& a) {
  Matrix v = a.value().unaryExpr([](double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  });
  return makeOp(v, {a.node()}, [v](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef().array() += n.grad.array() * v.array() * (1.0 - v.array());
  });
}

Var softplus(const Var& a) {
  Matrix v = a.value().unaryExpr(
      [](double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); });
  return makeOp(std::move(v), {a.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) {
      const Matrix s = n.inputs[0]->value().unaryExpr([](double z) {
        return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      });
      x->gradRef() += n.grad.cwiseProduct(s);
    }
  });
}

Var square(const Var& a) {
  return makeOp(a.value().array().square().matrix(), {a.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += 2.0 * n.grad.cwiseProduct(n.inputs[0]->value());
  });
}

Var softmaxRows(const Var& a) {
  Matrix v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  return makeOp(v, {a.node()}, [v](Node& n) {
    if (auto* x = in(n, 0)) {
      const Eigen::VectorXd dot = n.grad.cwiseProduct(v).rowwise().sum();
      x->gradRef().array() += v.array() * (n.grad.colwise() - dot).array();
    }
  });
}

Var layerNormRows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Matrix& x = a.value();
  const Eigen::Index d = x.cols();
  if (gamma.cols() != d || beta.cols() != d) throw ShapeError("layerNorm: parameter width");
  const Eigen::VectorXd mu = x.rowwise().mean();
  Matrix xc = x.colwise() - mu;
  const Eigen::VectorXd inv =
      ((xc.array().square().rowwise().sum() / static_cast<double>(d)) + eps).rsqrt();
  Matrix xhat = xc.array().colwise() * inv.array();
  Matrix v = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
             beta.value().row(0).array();
  return makeOp(std::move(v), {a.node(), gamma.node(), beta.node()}, [xhat, inv, d](Node& n) {
    const Matrix& g = n.grad;
    if (auto* gm = in(n, 1)) gm->gradRef() += g.cwiseProduct(xhat).colwise().sum();
    if (auto* bt = in(n, 2)) bt->gradRef() += g.colwise().sum();
    if (auto* x0 = in(n, 0)) {
      const Matrix gx = g.array().rowwise() * n.inputs[1]->value().row(0).array();
      const Eigen::VectorXd s1 = gx.rowwise().sum();
      const Eigen::VectorXd s2 = gx.cwiseProduct(xhat).rowwise().sum();
      Matrix out = (static_cast<double>(d) * gx).colwise() - s1;
      out -= (xhat.array().colwise() * s2.array()).matrix();
      out = out.array().colwise() * (inv.array() / static_cast<double>(d));
      x0->gradRef() += out;
    }
  });
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return makeOp(a.value().cwiseProduct(mask), {a.node()}, [mask](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef() += n.grad.cwiseProduct(mask);
  });
}

Var sum(const Var& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return makeOp(std::move(v), {a.node()}, [](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef().array() += n.grad(0, 0);
  });
}

Var mean(const Var& a) {
  const double count = static_cast<double>(a.value().size());
  if (count == 0) return constant(Matrix::Zero(1, 1));
  Matrix v(1, 1);
  v(0, 0) = a.value().sum() / count;
  return makeOp(std::move(v), {a.node()}, [count](Node& n) {
    if (auto* x = in(n, 0)) x->gradRef().array() += n.grad(0, 0) / count;
  });
}

Var subMin(const Var& x) {
  if (x.cols() != 1 || x.rows() == 0) throw ShapeError("subMin: expects a non-empty column");
  Eigen::Index k = 0;
  const double m = x.value().col(0).minCoeff(&k);
  return makeOp(x.value().array() - m, {x.node()}, [k](Node& n) {
    if (auto* in0 = in(n, 0)) {
      Matrix& g = in0->gradRef();
      g += n.grad;
      g(k, 0) -= n.grad.sum();
    }
  });
}

Var customOp(Matrix value, const std::vector<Var>& inputs, BackpropFn fn) {
  std::vector<NodePtr> nodes;
  nodes.reserve(inputs.size());
  for (const auto& v : inputs) nodes.push_back(v.node());
  return makeOp(std::move(value), std::move(nodes), [fn = std::move(fn)](Node& n) {
    std::vector<Matrix*> grads(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i)
      if (n.inputs[i]->needs_grad) grads[i] = &n.inputs[i]->gradRef();
    fn(n.grad, grads);
  });
}

}  // namespace dancecam::nn
