#pragma once

#include <random>
#include <string>
#include <vector>

#include "dancecam/nn/autograd.hpp"

namespace dancecam::nn {

// Everything a forward pass needs besides the inputs.
struct Context {
  const ParameterSet& params;
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  Var p(std::size_t index) const { return param(params, index); }
  Var drop(const Var& x) const;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, std::mt19937_64& rng);
  Var operator()(const Context& ctx, const Var& x) const;

  std::size_t weightIndex() const { return w_; }
  std::size_t biasIndex() const { return b_; }

 private:
  std::size_t w_ = 0, b_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int dim);
  Var operator()(const Context& ctx, const Var& x) const;

 private:
  std::size_t g_ = 0, b_ = 0;
};

// Linear -> GELU -> Linear, plus a sinusoidal position code.
class StreamEncoder {
 public:
  StreamEncoder() = default;
  StreamEncoder(ParameterSet& ps, const std::string& name, int in, int dim, std::mt19937_64& rng);
  Var operator()(const Context& ctx, const Var& x) const;

 private:
  Linear l1_, l2_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, int dim, int memory_dim, int heads,
                     std::mt19937_64& rng);
  Var operator()(const Context& ctx, const Var& query, const Var& memory) const;

 private:
  Linear q_, k_, v_, o_;
  int dim_ = 0, heads_ = 1;
};

// Pre-norm decoder block: self-attention, cross-attention to memory, FFN.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParameterSet& ps, const std::string& name, int dim, int memory_dim, int heads,
               int ffn_dim, std::mt19937_64& rng);
  Var operator()(const Context& ctx, const Var& x, const Var& memory) const;

 private:
  LayerNorm n1_, n2_, n3_;
  MultiHeadAttention self_, cross_;
  Linear f1_, f2_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(ParameterSet& ps, const std::string& name, int layers, int dim, int memory_dim, int heads,
          std::mt19937_64& rng);
  Var operator()(const Context& ctx, const Var& x, const Var& memory) const;

 private:
  std::vector<DecoderLayer> layers_;
  LayerNorm final_;
};

Matrix sinusoidalPositions(Eigen::Index length, Eigen::Index dim);

}  // namespace dancecam::nn
