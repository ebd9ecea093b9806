#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stylegen/corpus.hpp"
#include "stylegen/model.hpp"

namespace stylegen {

struct InversionConfig {
  int n_pseudo_tokens = 1;
  int steps = 200;
  double lr = 0.025;
  int batch = 8;
  int chunk_len = 128;
  int init_label = -1;  // -1: mean of all class embeddings
  std::uint64_t seed = 0;
};

struct InversionResult {
  nn::Mat embedding;  // n_pseudo_tokens x d_model
  std::vector<double> loss_trace;
};

// Loss of a batch of chunks as a function of the learned conditioning only.
class InversionObjective {
 public:
  virtual ~InversionObjective() = default;
  virtual int dim() const = 0;
  // Mean cross-entropy over the chunks; fills grad (same shape as c) when
  // non-null.
  virtual double loss_and_grad(const nn::Mat& c, std::span<const std::vector<Token>> chunks, nn::Mat* grad) const = 0;
};

// The trained model with weights held fixed: prefix = (c rows, null style).
class FrozenModelObjective : public InversionObjective {
 public:
  explicit FrozenModelObjective(const ModelParams& params) : params_(params) {}
  int dim() const override { return params_.dim(); }
  double loss_and_grad(const nn::Mat& c, std::span<const std::vector<Token>> chunks, nn::Mat* grad) const override;

 private:
  const ModelParams& params_;
};

nn::Mat initial_embedding(const ModelParams& params, const InversionConfig& config);

// Adam (0.9, 0.999) on c over `steps` batches of random contiguous chunks.
InversionResult invert(const InversionObjective& objective, std::span<const Token> song, const nn::Mat& init,
                       const InversionConfig& config);

InversionResult invert(const ModelParams& frozen, std::span<const Token> song, const InversionConfig& config);

}  // namespace stylegen
