#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "stylegen/corpus.hpp"

namespace stylegen {

// Fixed random map from [unigram histogram | hashed bigram histogram]
// (V + B entries) to d_f features. Never trained.
class FrozenProjection {
 public:
  FrozenProjection() = default;
  FrozenProjection(int vocab, int buckets, int dim, std::uint64_t seed);
  // Rebuilds from a persisted matrix; shape must be (vocab + buckets) x dim.
  FrozenProjection(int vocab, int buckets, std::uint64_t seed, Eigen::MatrixXd matrix);

  int vocab() const { return vocab_; }
  int buckets() const { return buckets_; }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  int bucket(Token a, Token b) const {
    return static_cast<int>((static_cast<std::int64_t>(a) * vocab_ + b) % buckets_);
  }

 private:
  int vocab_ = 0;
  int buckets_ = 0;
  std::uint64_t seed_ = 0;
  Eigen::MatrixXd matrix_;
};

struct FrameSequence {
  Eigen::MatrixXd frames;  // one unit-norm row per window
  int window = 0;
  int hop = 0;

  int size() const { return static_cast<int>(frames.rows()); }
};

// floor((length - window) / hop) + 1, or 0 when length < window.
int frame_count(int length, int window, int hop);

FrameSequence extract_frames(std::span<const Token> tokens, const FrozenProjection& projection, int window,
                             int hop);

// Mean of the frames, L2-normalized.
Eigen::VectorXd sequence_embedding(std::span<const Token> tokens, const FrozenProjection& projection,
                                   int window, int hop);

// Projection plus the framing parameters, as used by the conditioner and by
// the metric store.
struct FeatureExtractor {
  FrozenProjection projection;
  int window = 8;
  int hop = 4;

  FrameSequence frames(std::span<const Token> tokens) const {
    return extract_frames(tokens, projection, window, hop);
  }
  Eigen::VectorXd embed(std::span<const Token> tokens) const {
    return sequence_embedding(tokens, projection, window, hop);
  }
};

}  // namespace stylegen
