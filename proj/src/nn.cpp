#include "stylegen/nn.hpp"

#include <cmath>
#include <limits>

#include "stylegen/errors.hpp"

namespace stylegen::nn {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

Mat random_normal(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  return m;
}

// In-place softmax of each row; with causal, row i only sees columns <= i + offset.
void softmax_rows(RowMat& s, bool causal, int offset) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Eigen::Index visible = causal ? std::min<Eigen::Index>(s.cols(), i + offset + 1) : s.cols();
    auto row = s.row(i);
    const double mx = row.head(visible).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < visible; ++j) {
      row(j) = std::exp(row(j) - mx);
      sum += row(j);
    }
    row.head(visible) /= sum;
    for (Eigen::Index j = visible; j < s.cols(); ++j) row(j) = 0.0;
  }
}

}  // namespace

Linear Linear::init(int in, int out, double stddev, Rng& rng) {
  return Linear{random_normal(in, out, stddev, rng), Mat::Zero(1, out)};
}

Mat Linear::forward(const Mat& x) const {
  Mat y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy, Linear* grad) const {
  if (grad != nullptr) {
    grad->w.noalias() += x.transpose() * dy;
    grad->b += dy.colwise().sum();
  }
  return dy * w.transpose();
}

LayerNorm LayerNorm::init(int dim) { return LayerNorm{Mat::Ones(1, dim), Mat::Zero(1, dim)}; }

Mat LayerNorm::forward(const Mat& x, LayerNormCache* cache) const {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  Mat xhat(x.rows(), x.cols());
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mean).square().sum() / d;
    inv_std(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Mat y = xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const LayerNormCache& cache, const Mat& dy, LayerNorm* grad) const {
  if (grad != nullptr) {
    grad->gamma += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    grad->beta += dy.colwise().sum();
  }
  const double d = static_cast<double>(dy.cols());
  Mat dxhat = dy.array().rowwise() * gamma.row(0).array();
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(i).dot(cache.xhat.row(i)) / d;
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat);
  }
  return dx;
}

Mat gelu(const Mat& u) {
  return u.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); });
}

Mat gelu_backward(const Mat& u, const Mat& dy) {
  Mat d = u.unaryExpr([](double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  });
  return d.cwiseProduct(dy);
}

Block Block::init(int dim, int heads, int ff_dim, int n_layers_total, Rng& rng) {
  if (heads < 1 || dim % heads != 0) throw ParameterError("model dimension must be divisible by the head count");
  const double std_in = 0.02;
  const double std_out = 0.02 / std::sqrt(2.0 * std::max(1, n_layers_total));
  Block b;
  b.heads = heads;
  b.ln1 = LayerNorm::init(dim);
  b.q = Linear::init(dim, dim, std_in, rng);
  b.k = Linear::init(dim, dim, std_in, rng);
  b.v = Linear::init(dim, dim, std_in, rng);
  b.o = Linear::init(dim, dim, std_out, rng);
  b.ln2 = LayerNorm::init(dim);
  b.ff1 = Linear::init(dim, ff_dim, std_in, rng);
  b.ff2 = Linear::init(ff_dim, dim, std_out, rng);
  return b;
}

Mat block_forward(const Block& p, const Mat& x, bool causal, BlockCache* cache) {
  BlockCache local;
  BlockCache& c = cache != nullptr ? *cache : local;
  const Eigen::Index dim = x.cols();
  const Eigen::Index dh = dim / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  c.x = x;
  c.h = p.ln1.forward(x, &c.ln1);
  c.q = p.q.forward(c.h);
  c.k = p.k.forward(c.h);
  c.v = p.v.forward(c.h);
  c.heads_out.resize(x.rows(), dim);
  c.attn.resize(static_cast<std::size_t>(p.heads));
  for (int hd = 0; hd < p.heads; ++hd) {
    RowMat s = scale * (c.q.middleCols(hd * dh, dh) * c.k.middleCols(hd * dh, dh).transpose());
    softmax_rows(s, causal, 0);
    c.heads_out.middleCols(hd * dh, dh).noalias() = s * c.v.middleCols(hd * dh, dh);
    c.attn[static_cast<std::size_t>(hd)] = std::move(s);
  }
  c.x1 = x + p.o.forward(c.heads_out);
  c.h2 = p.ln2.forward(c.x1, &c.ln2);
  c.u = p.ff1.forward(c.h2);
  c.g = gelu(c.u);
  return c.x1 + p.ff2.forward(c.g);
}

Mat block_backward(const Block& p, const BlockCache& c, const Mat& dy, bool /*causal*/, Block* grad) {
  const Eigen::Index dim = c.x.cols();
  const Eigen::Index dh = dim / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Feed-forward branch.
  Mat dg = p.ff2.backward(c.g, dy, grad ? &grad->ff2 : nullptr);
  Mat du = gelu_backward(c.u, dg);
  Mat dh2 = p.ff1.backward(c.h2, du, grad ? &grad->ff1 : nullptr);
  Mat dx1 = dy + p.ln2.backward(c.ln2, dh2, grad ? &grad->ln2 : nullptr);

  // Attention branch.
  Mat dheads = p.o.backward(c.heads_out, dx1, grad ? &grad->o : nullptr);
  Mat dq(c.q.rows(), dim), dk(c.k.rows(), dim), dv(c.v.rows(), dim);
  for (int hd = 0; hd < p.heads; ++hd) {
    const RowMat& a = c.attn[static_cast<std::size_t>(hd)];
    const auto doh = dheads.middleCols(hd * dh, dh);
    RowMat da = doh * c.v.middleCols(hd * dh, dh).transpose();
    dv.middleCols(hd * dh, dh).noalias() = a.transpose() * doh;
    // Softmax backward; masked entries have a == 0 and drop out.
    const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
    RowMat ds = a.array() * (da.array().colwise() - row_dot.array());
    ds *= scale;
    dq.middleCols(hd * dh, dh).noalias() = ds * c.k.middleCols(hd * dh, dh);
    dk.middleCols(hd * dh, dh).noalias() = ds.transpose() * c.q.middleCols(hd * dh, dh);
  }
  Mat d_ln1 = p.q.backward(c.h, dq, grad ? &grad->q : nullptr);
  d_ln1 += p.k.backward(c.h, dk, grad ? &grad->k : nullptr);
  d_ln1 += p.v.backward(c.h, dv, grad ? &grad->v : nullptr);
  return dx1 + p.ln1.backward(c.ln1, d_ln1, grad ? &grad->ln1 : nullptr);
}

void KvCache::reserve(int rows, int dim) {
  k.resize(rows, dim);
  v.resize(rows, dim);
  size = 0;
}

Eigen::RowVectorXd block_step(const Block& p, const Eigen::RowVectorXd& x, KvCache& kv) {
  const Eigen::Index dim = x.size();
  const Eigen::Index dh = dim / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (kv.size >= kv.k.rows()) throw ParameterError("decoder context length exceeded");

  const Mat xm = x;
  const Mat h = p.ln1.forward(xm, nullptr);
  const Mat q = p.q.forward(h);
  kv.k.row(kv.size) = p.k.forward(h).row(0);
  kv.v.row(kv.size) = p.v.forward(h).row(0);
  ++kv.size;
  const Eigen::Index n = kv.size;

  Mat heads_out(1, dim);
  for (int hd = 0; hd < p.heads; ++hd) {
    Eigen::RowVectorXd s = scale * (q.middleCols(hd * dh, dh) * kv.k.topRows(n).middleCols(hd * dh, dh).transpose());
    const double mx = s.maxCoeff();
    s = (s.array() - mx).exp();
    s /= s.sum();
    heads_out.middleCols(hd * dh, dh).noalias() = s * kv.v.topRows(n).middleCols(hd * dh, dh);
  }
  const Mat x1 = xm + p.o.forward(heads_out);
  const Mat h2 = p.ln2.forward(x1, nullptr);
  return (x1 + p.ff2.forward(gelu(p.ff1.forward(h2)))).row(0);
}

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

}  // namespace stylegen::nn
