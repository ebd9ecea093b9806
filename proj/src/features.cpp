#include "stylegen/features.hpp"

#include <string>

#include "stylegen/errors.hpp"
#include "stylegen/rng.hpp"

namespace stylegen {

FrozenProjection::FrozenProjection(int vocab, int buckets, int dim, std::uint64_t seed)
    : vocab_(vocab), buckets_(buckets), seed_(seed) {
  if (vocab < 1 || buckets < 1 || dim < 1) throw ParameterError("projection dimensions must be positive");
  Rng rng = make_rng(seed, {stream::kProjection});
  std::normal_distribution<double> normal(0.0, 1.0);
  matrix_.resize(vocab + buckets, dim);
  for (Eigen::Index r = 0; r < matrix_.rows(); ++r)
    for (Eigen::Index c = 0; c < matrix_.cols(); ++c) matrix_(r, c) = normal(rng);
}

FrozenProjection::FrozenProjection(int vocab, int buckets, std::uint64_t seed, Eigen::MatrixXd matrix)
    : vocab_(vocab), buckets_(buckets), seed_(seed), matrix_(std::move(matrix)) {
  if (matrix_.rows() != vocab + buckets || matrix_.cols() < 1)
    throw ShapeError("projection matrix shape does not match vocab + buckets");
}

int frame_count(int length, int window, int hop) {
  if (length < window) return 0;
  return (length - window) / hop + 1;
}

FrameSequence extract_frames(std::span<const Token> tokens, const FrozenProjection& projection, int window,
                             int hop) {
  if (window < 2) throw ParameterError("window must be at least 2");
  if (hop < 1) throw ParameterError("hop must be at least 1");
  const int length = static_cast<int>(tokens.size());
  if (length < window)
    throw TooShortError("sequence of " + std::to_string(length) + " tokens is shorter than the window of " +
                        std::to_string(window));
  const int vocab = projection.vocab();
  for (Token t : tokens)
    if (t < 0 || t >= vocab) throw ParameterError("token " + std::to_string(t) + " outside projection vocabulary");

  const Eigen::MatrixXd& p = projection.matrix();
  const int n = frame_count(length, window, hop);
  const double uni_w = 1.0 / window;
  const double bi_w = 1.0 / (window - 1);

  FrameSequence out;
  out.window = window;
  out.hop = hop;
  out.frames.resize(n, projection.dim());
  Eigen::RowVectorXd acc(projection.dim());
  for (int f = 0; f < n; ++f) {
    const int start = f * hop;
    acc.setZero();
    for (int i = 0; i < window; ++i) acc += uni_w * p.row(tokens[static_cast<std::size_t>(start + i)]);
    for (int i = 0; i + 1 < window; ++i) {
      const int b = projection.bucket(tokens[static_cast<std::size_t>(start + i)], tokens[static_cast<std::size_t>(start + i + 1)]);
      acc += bi_w * p.row(vocab + b);
    }
    const double norm = acc.norm();
    if (!(norm > 0.0)) throw DegenerateEmbeddingError("frame " + std::to_string(f) + " projects to zero");
    out.frames.row(f) = acc / norm;
  }
  return out;
}

Eigen::VectorXd sequence_embedding(std::span<const Token> tokens, const FrozenProjection& projection,
                                   int window, int hop) {
  const FrameSequence fs = extract_frames(tokens, projection, window, hop);
  Eigen::VectorXd mean = fs.frames.colwise().mean().transpose();
  const double norm = mean.norm();
  if (!(norm > 1e-12)) throw DegenerateEmbeddingError("mean frame vector is zero");
  return mean / norm;
}

}  // namespace stylegen
