#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stylegen/rng.hpp"

namespace stylegen {

struct RvqConfig {
  int n_codebooks = 6;
  int codebook_size = 64;
  double decay = 0.99;
  double eps_count = 1e-5;
  double dead_threshold = 1e-3;
  double commitment = 0.25;
  int kmeans_iters = 10;
  int init_excerpts = 512;  // training excerpts encoded to seed the codebooks
};

// K ordered codebooks of N entries in d dimensions, with EMA statistics.
// After every EMA update, books[k].row(j) == ema_sum[k].row(j) /
// max(ema_size(k, j), eps_count).
struct RvqCodebooks {
  int n_codebooks = 0;
  int codebook_size = 0;
  int dim = 0;
  double decay = 0.99;
  double eps_count = 1e-5;
  double dead_threshold = 1e-3;

  std::vector<Eigen::MatrixXd> books;    // K x (N x d)
  Eigen::MatrixXd ema_size;              // K x N
  std::vector<Eigen::MatrixXd> ema_sum;  // K x (N x d)

  static RvqCodebooks zeros(int n_codebooks, int codebook_size, int dim, const RvqConfig& config);
  // Resets EMA statistics to (size 1, sum = entry).
  void reset_ema();
};

struct CodeSequence {
  Eigen::MatrixXi codes;  // frames x n_streams
  int n_streams = 0;
};

struct Quantization {
  CodeSequence codes;
  Eigen::MatrixXd quantized;                // frames x d, sum of the chosen entries
  std::vector<Eigen::MatrixXd> stage_inputs;  // residual entering each stage
};

// Index of the entry nearest to v in Euclidean distance; ties go to the
// lowest index.
int nearest_entry(const Eigen::MatrixXd& book, const Eigen::Ref<const Eigen::RowVectorXd>& v);

// Sequential residual quantization of each row of x with the first n_streams
// codebooks. Stage k never looks at stages after it, so codes are nested
// across depths.
Quantization quantize(const Eigen::MatrixXd& x, const RvqCodebooks& cb, int n_streams);

Eigen::MatrixXd dequantize(const CodeSequence& codes, const RvqCodebooks& cb);

// Straight-through backward: the quantizer passes grad_quantized through
// unchanged. Adds the commitment penalty weight * mean((x - q)^2), with q
// treated as a constant, and its gradient. Returns the penalty.
double straight_through_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& quantized,
                                 const Eigen::MatrixXd& grad_quantized, double commitment_weight,
                                 Eigen::MatrixXd& grad_x);

double commitment_penalty(const Eigen::MatrixXd& x, const Eigen::MatrixXd& quantized, double weight);

struct KmeansOptions {
  int iters = 10;
  bool reseed_duplicates = true;
  double reseed_scale = 1e-4;
};

// Stage 1 by k-means on samples, stage k on the residuals of stages < k.
// Seeding is greedy farthest-point from a seeded first pick.
RvqCodebooks init_codebooks_kmeans(const Eigen::MatrixXd& samples, int n_codebooks, int codebook_size,
                                   std::uint64_t seed, const KmeansOptions& options,
                                   const RvqConfig& config = {});

// Vectors that reached one stage, with the code each received.
struct StageBatch {
  std::vector<Eigen::RowVectorXd> inputs;
  std::vector<int> codes;
};

// Collects stage batches across several quantize() calls.
class EmaBatch {
 public:
  explicit EmaBatch(int n_codebooks) : stages_(static_cast<std::size_t>(n_codebooks)) {}
  void add(const Quantization& q);
  std::span<const StageBatch> stages() const { return stages_; }

 private:
  std::vector<StageBatch> stages_;
};

// Per stage and entry:
//   ema_size <- decay * ema_size + (1 - decay) * count
//   ema_sum  <- decay * ema_sum  + (1 - decay) * sum of assigned inputs
//   entry    <- ema_sum / max(ema_size, eps_count)
// Entries whose ema_size falls below dead_threshold are re-seeded to a
// random input of that stage. Stages with no inputs are left untouched.
void ema_update(RvqCodebooks& cb, std::span<const StageBatch> stages, Rng& rng);

}  // namespace stylegen
