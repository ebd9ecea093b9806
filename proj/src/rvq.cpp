#include "stylegen/rvq.hpp"

#include <limits>
#include <string>

#include "stylegen/errors.hpp"

namespace stylegen {

RvqCodebooks RvqCodebooks::zeros(int n_codebooks, int codebook_size, int dim, const RvqConfig& config) {
  if (n_codebooks < 1 || codebook_size < 1 || dim < 1) throw ParameterError("codebook dimensions must be positive");
  RvqCodebooks cb;
  cb.n_codebooks = n_codebooks;
  cb.codebook_size = codebook_size;
  cb.dim = dim;
  cb.decay = config.decay;
  cb.eps_count = config.eps_count;
  cb.dead_threshold = config.dead_threshold;
  cb.books.assign(static_cast<std::size_t>(n_codebooks), Eigen::MatrixXd::Zero(codebook_size, dim));
  cb.ema_sum = cb.books;
  cb.ema_size = Eigen::MatrixXd::Ones(n_codebooks, codebook_size);
  return cb;
}

void RvqCodebooks::reset_ema() {
  ema_size.setOnes(n_codebooks, codebook_size);
  ema_sum = books;
}

int nearest_entry(const Eigen::MatrixXd& book, const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < book.rows(); ++j) {
    const double d = (book.row(j) - v).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

Quantization quantize(const Eigen::MatrixXd& x, const RvqCodebooks& cb, int n_streams) {
  if (n_streams < 1 || n_streams > cb.n_codebooks)
    throw ParameterError("stream count " + std::to_string(n_streams) + " outside [1, " +
                         std::to_string(cb.n_codebooks) + "]");
  if (x.cols() != cb.dim)
    throw ParameterError("vectors have dimension " + std::to_string(x.cols()) + ", codebooks expect " +
                         std::to_string(cb.dim));
  Quantization q;
  q.codes.n_streams = n_streams;
  q.codes.codes.resize(x.rows(), n_streams);
  q.quantized = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  Eigen::MatrixXd residual = x;
  for (int k = 0; k < n_streams; ++k) {
    q.stage_inputs.push_back(residual);
    const auto& book = cb.books[static_cast<std::size_t>(k)];
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const int j = nearest_entry(book, residual.row(t));
      q.codes.codes(t, k) = j;
      q.quantized.row(t) += book.row(j);
      residual.row(t) -= book.row(j);
    }
  }
  return q;
}

Eigen::MatrixXd dequantize(const CodeSequence& codes, const RvqCodebooks& cb) {
  if (codes.n_streams < 1 || codes.n_streams > cb.n_codebooks || codes.codes.cols() != codes.n_streams)
    throw CorruptionError("code sequence has an invalid stream count");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(codes.codes.rows(), cb.dim);
  for (Eigen::Index t = 0; t < codes.codes.rows(); ++t) {
    for (int k = 0; k < codes.n_streams; ++k) {
      const int j = codes.codes(t, k);
      if (j < 0 || j >= cb.codebook_size)
        throw CorruptionError("code " + std::to_string(j) + " outside codebook of size " +
                              std::to_string(cb.codebook_size));
      out.row(t) += cb.books[static_cast<std::size_t>(k)].row(j);
    }
  }
  return out;
}

double commitment_penalty(const Eigen::MatrixXd& x, const Eigen::MatrixXd& quantized, double weight) {
  if (x.size() == 0) return 0.0;
  return weight * (x - quantized).squaredNorm() / static_cast<double>(x.size());
}

double straight_through_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& quantized,
                                 const Eigen::MatrixXd& grad_quantized, double commitment_weight,
                                 Eigen::MatrixXd& grad_x) {
  grad_x = grad_quantized;
  if (x.size() == 0) return 0.0;
  grad_x += (2.0 * commitment_weight / static_cast<double>(x.size())) * (x - quantized);
  return commitment_penalty(x, quantized, commitment_weight);
}

namespace {

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& samples, int k, Rng& rng, const KmeansOptions& options) {
  const Eigen::Index m = samples.rows();
  Eigen::MatrixXd centers(k, samples.cols());

  // Farthest-point seeding.
  Eigen::VectorXd min_d = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
  Eigen::Index pick = static_cast<Eigen::Index>(uniform_int(rng, 0, m - 1));
  for (int c = 0; c < k; ++c) {
    centers.row(c) = samples.row(pick);
    for (Eigen::Index i = 0; i < m; ++i) min_d(i) = std::min(min_d(i), (samples.row(i) - centers.row(c)).squaredNorm());
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < m; ++i)
      if (min_d(i) > min_d(best)) best = i;
    pick = best;
  }

  std::vector<int> assign(static_cast<std::size_t>(m));
  for (int it = 0; it < options.iters; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, samples.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < m; ++i) {
      const int j = nearest_entry(centers, samples.row(i));
      assign[static_cast<std::size_t>(i)] = j;
      sums.row(j) += samples.row(i);
      counts(j) += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts(c) > 0.0) centers.row(c) = sums.row(c) / counts(c);
  }

  if (options.reseed_duplicates) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
      for (int prev = 0; prev < c; ++prev) {
        if (centers.row(c) == centers.row(prev)) {
          for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) += options.reseed_scale * normal(rng);
          break;
        }
      }
    }
  }
  return centers;
}

}  // namespace

RvqCodebooks init_codebooks_kmeans(const Eigen::MatrixXd& samples, int n_codebooks, int codebook_size,
                                   std::uint64_t seed, const KmeansOptions& options, const RvqConfig& config) {
  if (samples.rows() < codebook_size)
    throw ParameterError("k-means needs at least " + std::to_string(codebook_size) + " samples, got " +
                         std::to_string(samples.rows()));
  RvqCodebooks cb = RvqCodebooks::zeros(n_codebooks, codebook_size, static_cast<int>(samples.cols()), config);
  Eigen::MatrixXd residual = samples;
  for (int k = 0; k < n_codebooks; ++k) {
    Rng rng = make_rng(seed, {stream::kKmeans, static_cast<std::uint64_t>(k)});
    cb.books[static_cast<std::size_t>(k)] = kmeans(residual, codebook_size, rng, options);
    const auto& book = cb.books[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < residual.rows(); ++i) residual.row(i) -= book.row(nearest_entry(book, residual.row(i)));
  }
  cb.reset_ema();
  return cb;
}

void EmaBatch::add(const Quantization& q) {
  for (int k = 0; k < q.codes.n_streams && k < static_cast<int>(stages_.size()); ++k) {
    auto& stage = stages_[static_cast<std::size_t>(k)];
    const auto& in = q.stage_inputs[static_cast<std::size_t>(k)];
    for (Eigen::Index t = 0; t < in.rows(); ++t) {
      stage.inputs.push_back(in.row(t));
      stage.codes.push_back(q.codes.codes(t, k));
    }
  }
}

void ema_update(RvqCodebooks& cb, std::span<const StageBatch> stages, Rng& rng) {
  if (static_cast<int>(stages.size()) > cb.n_codebooks) throw ParameterError("more stage batches than codebooks");
  const double d = cb.decay;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const auto& stage = stages[k];
    if (stage.inputs.size() != stage.codes.size()) throw ParameterError("assignment count differs from batch size");
    if (stage.inputs.empty()) continue;

    Eigen::VectorXd counts = Eigen::VectorXd::Zero(cb.codebook_size);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(cb.codebook_size, cb.dim);
    for (std::size_t i = 0; i < stage.inputs.size(); ++i) {
      const int j = stage.codes[i];
      if (j < 0 || j >= cb.codebook_size) throw ParameterError("assignment outside codebook");
      if (stage.inputs[i].size() != cb.dim) throw ParameterError("batch vector dimension mismatch");
      counts(j) += 1.0;
      sums.row(j) += stage.inputs[i];
    }

    auto& book = cb.books[k];
    auto& ema_sum = cb.ema_sum[k];
    for (int j = 0; j < cb.codebook_size; ++j) {
      double& size = cb.ema_size(static_cast<Eigen::Index>(k), j);
      size = d * size + (1.0 - d) * counts(j);
      ema_sum.row(j) = d * ema_sum.row(j) + (1.0 - d) * sums.row(j);
      if (size < cb.dead_threshold) {
        const auto pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(stage.inputs.size()) - 1));
        ema_sum.row(j) = stage.inputs[pick];
        size = 1.0;
      }
      book.row(j) = ema_sum.row(j) / std::max(size, cb.eps_count);
    }
  }
}

}  // namespace stylegen
