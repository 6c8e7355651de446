#include "dancecam/nn/layers.hpp"

#include <cmath>

#include "dancecam/core/types.hpp"

namespace dancecam::nn {

Var Context::drop(const Var& x) const {
  if (!training || dropout <= 0.0 || rng == nullptr) return x;
  return nn::dropout(x, dropout, *rng);
}

namespace {

Matrix xavier(int in, int out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(in, out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

}  // namespace

Linear::Linear(ParameterSet& ps, const std::string& name, int in, int out, std::mt19937_64& rng)
    : w_(ps.add(name + ".weight", xavier(in, out, rng))),
      b_(ps.add(name + ".bias", Matrix::Zero(1, out))) {}

Var Linear::operator()(const Context& ctx, const Var& x) const {
  return addRow(matmul(x, ctx.p(w_)), ctx.p(b_));
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, int dim)
    : g_(ps.add(name + ".gamma", Matrix::Ones(1, dim))),
      b_(ps.add(name + ".beta", Matrix::Zero(1, dim))) {}

Var LayerNorm::operator()(const Context& ctx, const Var& x) const {
  return layerNormRows(x, ctx.p(g_), ctx.p(b_));
}

Matrix sinusoidalPositions(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index t = 0; t < length; ++t) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(t, i) = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
  }
  return pe;
}

StreamEncoder::StreamEncoder(ParameterSet& ps, const std::string& name, int in, int dim,
                             std::mt19937_64& rng)
    : l1_(ps, name + ".fc1", in, dim, rng), l2_(ps, name + ".fc2", dim, dim, rng) {}

Var StreamEncoder::operator()(const Context& ctx, const Var& x) const {
  Var h = l2_(ctx, gelu(l1_(ctx, x)));
  return add(h, constant(sinusoidalPositions(h.rows(), h.cols())));
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name, int dim,
                                       int memory_dim, int heads, std::mt19937_64& rng)
    : q_(ps, name + ".q", dim, dim, rng),
      k_(ps, name + ".k", memory_dim, dim, rng),
      v_(ps, name + ".v", memory_dim, dim, rng),
      o_(ps, name + ".out", dim, dim, rng),
      dim_(dim),
      heads_(heads) {
  if (heads <= 0 || dim % heads != 0) throw ShapeError("attention: dim must divide into heads");
}

Var MultiHeadAttention::operator()(const Context& ctx, const Var& query, const Var& memory) const {
  const Var q = q_(ctx, query);
  const Var k = k_(ctx, memory);
  const Var v = v_(ctx, memory);
  const int hd = dim_ / heads_;
  const double s = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    const Var qh = sliceCols(q, h * hd, hd);
    const Var kh = sliceCols(k, h * hd, hd);
    const Var vh = sliceCols(v, h * hd, hd);
    const Var att = ctx.drop(softmaxRows(scale(matmulNT(qh, kh), s)));
    outs.push_back(matmul(att, vh));
  }
  return o_(ctx, heads_ == 1 ? outs[0] : concatCols(outs));
}

DecoderLayer::DecoderLayer(ParameterSet& ps, const std::string& name, int dim, int memory_dim,
                           int heads, int ffn_dim, std::mt19937_64& rng)
    : n1_(ps, name + ".norm1", dim),
      n2_(ps, name + ".norm2", dim),
      n3_(ps, name + ".norm3", dim),
      self_(ps, name + ".self_attn", dim, dim, heads, rng),
      cross_(ps, name + ".cross_attn", dim, memory_dim, heads, rng),
      f1_(ps, name + ".ffn1", dim, ffn_dim, rng),
      f2_(ps, name + ".ffn2", ffn_dim, dim, rng) {}

Var DecoderLayer::operator()(const Context& ctx, const Var& x, const Var& memory) const {
  Var h = n1_(ctx, x);
  Var y = add(x, ctx.drop(self_(ctx, h, h)));
  y = add(y, ctx.drop(cross_(ctx, n2_(ctx, y), memory)));
  return add(y, ctx.drop(f2_(ctx, gelu(f1_(ctx, n3_(ctx, y))))));
}

Decoder::Decoder(ParameterSet& ps, const std::string& name, int layers, int dim, int memory_dim,
                 int heads, std::mt19937_64& rng) {
  for (int i = 0; i < layers; ++i)
    layers_.emplace_back(ps, name + ".layer" + std::to_string(i), dim, memory_dim, heads, 4 * dim,
                         rng);
  final_ = LayerNorm(ps, name + ".norm", dim);
}

Var Decoder::operator()(const Context& ctx, const Var& x, const Var& memory) const {
  Var y = x;
  for (const auto& l : layers_) y = l(ctx, y, memory);
  return final_(ctx, y);
}

}  // namespace dancecam::nn
