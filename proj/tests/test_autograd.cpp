#include <doctest.h>

#include <fstream>
#include <functional>
#include <random>

#include "dancecam/nn/autograd.hpp"
#include "dancecam/nn/layers.hpp"
#include "dancecam/nn/optim.hpp"
#include "fixtures.hpp"

using namespace dancecam::nn;

namespace {

using Fn = std::function<Var(const std::vector<Var>&)>;

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

// Projects f onto fixed random weights and compares analytic and central
// difference gradients for every input entry.
double maxGradError(const Fn& f, const std::vector<Matrix>& inputs, unsigned seed = 1) {
  std::mt19937_64 rng(seed);
  Matrix proj;
  auto loss = [&](const std::vector<Var>& xs) {
    const Var y = f(xs);
    if (proj.size() == 0) proj = randn(y.rows(), y.cols(), rng);
    return sum(mul(y, constant(proj)));
  };
  std::vector<Var> xs;
  for (const auto& m : inputs) xs.push_back(variable(m));
  backward(loss(xs), nullptr);
  double worst = 0;
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double d) {
        std::vector<Var> ys;
        for (std::size_t q = 0; q < inputs.size(); ++q) {
          Matrix m = inputs[q];
          if (q == k) m(i) += d;
          ys.push_back(constant(m));
        }
        return loss(ys).scalar();
      };
      const double fd = (eval(h) - eval(-h)) / (2 * h);
      const double an = xs[k].grad().size() ? xs[k].grad()(i) : 0.0;
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("elementwise and structural ops match finite differences") {
  std::mt19937_64 rng(7);
  const Matrix a = randn(4, 3, rng), b = randn(4, 3, rng), r = randn(1, 3, rng), c = randn(3, 5, rng);
  const Matrix d = randn(6, 3, rng);
  CHECK(maxGradError([](auto& x) { return add(x[0], x[1]); }, {a, b}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return sub(x[0], x[1]); }, {a, b}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return mul(x[0], x[1]); }, {a, b}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return scale(addScalar(x[0], 2.0), -1.5); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return addRow(x[0], x[1]); }, {a, r}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return mulRow(x[0], x[1]); }, {a, r}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return matmul(x[0], x[1]); }, {a, c}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return matmulNT(x[0], x[1]); }, {a, d}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return transpose(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return sliceRows(x[0], 1, 2); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return sliceCols(x[0], 1, 2); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return concatCols({x[0], x[1]}); }, {a, b}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return concatRows({x[0], x[1]}); }, {a, d}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return placeRows(x[0], 7, {6, 0, 3, 2}); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return diffRows(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return cumsumRows(x[0]); }, {a}) < 1e-6);
}

TEST_CASE("nonlinearities and reductions match finite differences") {
  std::mt19937_64 rng(8);
  const Matrix a = randn(4, 5, rng), g = randn(1, 5, rng), b = randn(1, 5, rng);
  CHECK(maxGradError([](auto& x) { return gelu(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return sigmoid(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return softplus(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return square(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return softmaxRows(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return layerNormRows(x[0], x[1], x[2]); }, {a, g, b}) < 1e-5);
  CHECK(maxGradError([](auto& x) { return sum(x[0]); }, {a}) < 1e-6);
  CHECK(maxGradError([](auto& x) { return mean(x[0]); }, {a}) < 1e-6);
  const Matrix col = randn(9, 1, rng);
  CHECK(maxGradError([](auto& x) { return subMin(x[0]); }, {col}) < 1e-6);
}

TEST_CASE("values of simple ops") {
  Matrix x(3, 1);
  x << 2, -1, 4;
  CHECK(subMin(constant(x)).value().col(0) == Eigen::Vector3d(3, 0, 5));
  CHECK(cumsumRows(constant(x)).value().col(0) == Eigen::Vector3d(2, 1, 5));
  CHECK(diffRows(constant(x)).value().col(0) == Eigen::Vector2d(-3, 5));
  const Matrix s = softmaxRows(constant(Matrix::Random(3, 4))).value();
  CHECK((s.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-12);
  const Matrix p = placeRows(constant(x), 5, {4, 0, 4}).value();
  CHECK(p(0, 0) == -1);
  CHECK(p(4, 0) == 4);
  CHECK(p(2, 0) == 0);
}

TEST_CASE("gradients accumulate into parameters through a decoder") {
  ParameterSet ps;
  std::mt19937_64 rng(4);
  Decoder dec(ps, "dec", 2, 8, 6, 2, rng);
  Linear head(ps, "head", 8, 1, rng);
  const Matrix x = randn(5, 8, rng), mem = randn(7, 6, rng);
  Context ctx{ps};
  auto loss = [&] { return mean(square(head(ctx, dec(ctx, constant(x), constant(mem))))); };
  Gradients g(ps);
  backward(loss(), &g);
  // Spot-check a few entries of every parameter against central differences.
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(3, ps[k].value.size()); ++i) {
      const double orig = ps[k].value(i);
      ps[k].value(i) = orig + h;
      const double up = loss().scalar();
      ps[k].value(i) = orig - h;
      const double dn = loss().scalar();
      ps[k].value(i) = orig;
      const double fd = (up - dn) / (2 * h);
      worst = std::max(worst, std::abs(fd - g.g[k](i)) / std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("dropout is identity at p = 0 and scales kept units") {
  std::mt19937_64 rng(1);
  const Var x = variable(Matrix::Ones(50, 50));
  CHECK(dropout(x, 0.0, rng).value() == x.value());
  const Matrix y = dropout(x, 0.5, rng).value();
  for (Eigen::Index i = 0; i < y.size(); ++i) CHECK((y(i) == 0.0 || y(i) == 2.0));
}

TEST_CASE("adam minimizes a quadratic and the cosine schedule hits its ends") {
  ParameterSet ps;
  ps.add("x", Matrix::Constant(3, 1, 5.0));
  Adam adam(ps, AdamConfig{.lr = 0.1});
  for (int i = 0; i < 500; ++i) {
    Gradients g(ps);
    backward(sum(square(addScalar(param(ps, 0), -1.0))), &g);
    adam.step(ps, g);
  }
  CHECK((ps[0].value.array() - 1.0).abs().maxCoeff() < 1e-2);
  CHECK(cosineSchedule(0, 100, 0.05) == doctest::Approx(1.0));
  CHECK(cosineSchedule(100, 100, 0.05) == doctest::Approx(0.05));
  CHECK(cosineSchedule(50, 100, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("checkpoint round trip") {
  fixtures::TempDir dir("ckpt");
  ParameterSet a;
  std::mt19937_64 rng(2);
  a.add("w", randn(3, 4, rng));
  a.add("b", randn(1, 4, rng));
  const nlohmann::json meta = {{"kind", "test"}, {"n", 3}};
  saveCheckpoint(dir.path / "m.ckpt", meta, a);
  CHECK(readCheckpointMeta(dir.path / "m.ckpt") == meta);

  ParameterSet b;
  b.add("w", Matrix::Zero(3, 4));
  b.add("b", Matrix::Zero(1, 4));
  CHECK(loadCheckpoint(dir.path / "m.ckpt", b) == meta);
  CHECK(b[0].value == a[0].value);
  CHECK(b[1].value == a[1].value);

  ParameterSet wrong;
  wrong.add("w", Matrix::Zero(4, 3));
  wrong.add("b", Matrix::Zero(1, 4));
  CHECK_THROWS(loadCheckpoint(dir.path / "m.ckpt", wrong));
  {
    std::ofstream f(dir.path / "bad.ckpt", std::ios::binary);
    f << "NOTACKPT0000000000000000";
  }
  CHECK_THROWS(readCheckpointMeta(dir.path / "bad.ckpt"));
}
