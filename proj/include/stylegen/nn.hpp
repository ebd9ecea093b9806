#pragma once

// Dense layers with hand-written backward passes. Activations are row-major
// in meaning: one row per sequence position.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stylegen/rng.hpp"

namespace stylegen::nn {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Linear {
  Mat w;  // in x out
  Mat b;  // 1 x out

  static Linear init(int in, int out, double stddev, Rng& rng);
  Mat forward(const Mat& x) const;
  // Accumulates into grad (when non-null) and returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy, Linear* grad) const;

  template <class Self, class F>
  static void visit(Self& s, const std::string& name, F&& f) {
    f(name + ".w", s.w);
    f(name + ".b", s.b);
  }
};

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

struct LayerNorm {
  Mat gamma;  // 1 x d
  Mat beta;   // 1 x d

  static LayerNorm init(int dim);
  Mat forward(const Mat& x, LayerNormCache* cache) const;
  Mat backward(const LayerNormCache& cache, const Mat& dy, LayerNorm* grad) const;

  template <class Self, class F>
  static void visit(Self& s, const std::string& name, F&& f) {
    f(name + ".gamma", s.gamma);
    f(name + ".beta", s.beta);
  }
};

// Tanh-approximated GELU.
Mat gelu(const Mat& u);
Mat gelu_backward(const Mat& u, const Mat& dy);

// Pre-norm transformer block: x + attn(ln1(x)), then + ff(ln2(.)).
struct Block {
  int heads = 1;
  LayerNorm ln1;
  Linear q, k, v, o;
  LayerNorm ln2;
  Linear ff1, ff2;

  static Block init(int dim, int heads, int ff_dim, int n_layers_total, Rng& rng);

  template <class Self, class F>
  static void visit(Self& s, const std::string& name, F&& f) {
    LayerNorm::visit(s.ln1, name + ".ln1", f);
    Linear::visit(s.q, name + ".q", f);
    Linear::visit(s.k, name + ".k", f);
    Linear::visit(s.v, name + ".v", f);
    Linear::visit(s.o, name + ".o", f);
    LayerNorm::visit(s.ln2, name + ".ln2", f);
    Linear::visit(s.ff1, name + ".ff1", f);
    Linear::visit(s.ff2, name + ".ff2", f);
  }
};

struct BlockCache {
  Mat x;
  LayerNormCache ln1;
  Mat h;
  Mat q, k, v;
  std::vector<RowMat> attn;  // per head, softmax weights
  Mat heads_out;
  Mat x1;
  LayerNormCache ln2;
  Mat h2;
  Mat u;
  Mat g;
};

Mat block_forward(const Block& p, const Mat& x, bool causal, BlockCache* cache);
// Accumulates into grad (when non-null) and returns dL/dx.
Mat block_backward(const Block& p, const BlockCache& cache, const Mat& dy, bool causal, Block* grad);

// Key/value cache for one block during incremental decoding.
struct KvCache {
  Mat k;
  Mat v;
  int size = 0;

  void reserve(int rows, int dim);
};

// Processes one new position given the cache of all earlier ones (causal).
Eigen::RowVectorXd block_step(const Block& p, const Eigen::RowVectorXd& x, KvCache& kv);

// Row-wise log-softmax.
Mat log_softmax_rows(const Mat& logits);

}  // namespace stylegen::nn
