#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Var is a handle to a node of a dynamically built graph. Every op computes
// its value eagerly and records a closure that pushes the output gradient to
// its inputs. backward() walks the graph in reverse topological order.
// Parameters live outside the graph; leaf nodes reference their storage and
// backward() accumulates into a caller-owned Gradients buffer, so several
// graphs over the same parameters can be differentiated independently.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dancecam::nn {

using Matrix = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Matrix value;
};

class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  // Returns the index of the new parameter.
  std::size_t add(std::string name, Matrix init);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  std::size_t find(const std::string& name) const;  // throws if absent
  std::size_t numScalars() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Gradient buffers aligned with a ParameterSet.
struct Gradients {
  std::vector<Matrix> g;

  explicit Gradients(const ParameterSet& ps);
  void zero();
  void add(const Gradients& other, double scale = 1.0);
  void scale(double s);
  double squaredNorm() const;
};

struct Node {
  Matrix own;
  const Matrix* ext = nullptr;
  Matrix grad;
  bool needs_grad = false;
  long param_index = -1;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  const Matrix& value() const { return ext ? *ext : own; }
  Matrix& gradRef();  // allocates zeros on first use
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value(); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool needsGrad() const { return node_->needs_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  // Gradient accumulated into this node by the last backward().
  const Matrix& grad() const { return node_->grad; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
// Leaf that participates in differentiation but is not a parameter; its
// gradient is readable through Var::grad() after backward().
Var variable(Matrix value);
Var param(const ParameterSet& ps, std::size_t index);

// Accumulates d(loss)/d(param) into grads. loss must be 1x1.
void backward(const Var& loss, Gradients* grads);

// Elementwise / structural ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard
Var scale(const Var& a, double s);
Var addScalar(const Var& a, double s);
Var addRow(const Var& a, const Var& row);  // row: 1 x cols, broadcast over rows
Var mulRow(const Var& a, const Var& row);
Var matmul(const Var& a, const Var& b);
Var matmulNT(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var sliceRows(const Var& a, Eigen::Index start, Eigen::Index n);
Var sliceCols(const Var& a, Eigen::Index start, Eigen::Index n);
Var concatCols(const std::vector<Var>& parts);
Var concatRows(const std::vector<Var>& parts);
// Output has `rows` rows; row i of `a` lands at row index[i]. Later entries
// overwrite earlier ones on duplicate indices.
Var placeRows(const Var& a, Eigen::Index rows, const std::vector<Eigen::Index>& index);
// Rowwise first difference: out.row(i) = a.row(i+1) - a.row(i).
Var diffRows(const Var& a);
Var cumsumRows(const Var& a);

// Nonlinearities.
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var square(const Var& a);
Var softmaxRows(const Var& a);
Var layerNormRows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);
Var dropout(const Var& a, double p, std::mt19937_64& rng);

// Reductions to 1x1.
Var sum(const Var& a);
Var mean(const Var& a);

// Column vector x (n x 1): x - min(x).
Var subMin(const Var& x);

// Op with a caller-supplied gradient rule. `grad_in[i]` is null when input i
// does not need a gradient; otherwise the rule accumulates into it.
using BackpropFn = std::function<void(const Matrix& grad_out, const std::vector<Matrix*>& grad_in)>;
Var customOp(Matrix value, const std::vector<Var>& inputs, BackpropFn fn);

}  // namespace dancecam::nn
