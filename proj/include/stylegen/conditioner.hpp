#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stylegen/corpus.hpp"
#include "stylegen/features.hpp"
#include "stylegen/nn.hpp"
#include "stylegen/rvq.hpp"

namespace stylegen {

struct ConditionerConfig {
  bool use_encoder = true;  // false: frames -> linear -> RVQ, no attention
  int enc_dim = 64;
  int enc_heads = 4;
  int enc_layers = 1;
  int enc_ff = 128;
  int max_frames = 32;
  int downsample = 3;
  int min_excerpt = 24;
  int max_excerpt = 72;
};

// Excerpt location within its song, in tokens.
struct Span {
  int start = 0;
  int length = 0;

  bool contains(int index) const { return index >= start && index < start + length; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct StylePrefix {
  nn::Mat vectors;  // ceil(frames / downsample) x d_model
  int n_streams_used = 0;
  Span source_span;
};

struct ConditionerParams {
  bool use_encoder = true;
  nn::Linear in_proj;  // d_f -> enc_dim
  nn::Mat pos;         // max_frames x enc_dim, unused without encoder
  std::vector<nn::Block> blocks;
  nn::LayerNorm ln_out;
  nn::Linear out_proj;  // enc_dim -> d_model

  static ConditionerParams init(const ConditionerConfig& config, int feature_dim, int model_dim, Rng& rng);

  template <class Self, class F>
  static void visit(Self& s, const std::string& name, F&& f) {
    nn::Linear::visit(s.in_proj, name + ".in_proj", f);
    if (s.use_encoder) {
      f(name + ".pos", s.pos);
      for (std::size_t i = 0; i < s.blocks.size(); ++i)
        nn::Block::visit(s.blocks[i], name + ".block" + std::to_string(i), f);
      nn::LayerNorm::visit(s.ln_out, name + ".ln_out", f);
    }
    nn::Linear::visit(s.out_proj, name + ".out_proj", f);
  }
};

enum class EncodeMode { kTrain, kEval };

// Replaces the quantizer by x + offset (offset captured at a base point) and
// pins the commitment target. Used to check straight-through gradients
// against finite differences with the codes held fixed.
struct FixedQuantization {
  nn::Mat offset;
  nn::Mat target;
};

struct EncodeOptions {
  EncodeMode mode = EncodeMode::kEval;
  double commitment = 0.25;  // only charged in train mode
  const FixedQuantization* fixed = nullptr;
};

struct StyleCache {
  nn::Mat frames;
  nn::Mat projected;
  std::vector<nn::BlockCache> blocks;
  nn::LayerNormCache ln_out;
  nn::Mat encoded;
  Quantization quant;  // empty when a FixedQuantization was used
  nn::Mat quantized;
  nn::Mat commit_target;
  nn::Mat pooled;
  double commitment_weight = 0.0;
  double commitment_loss = 0.0;
};

// ceil(frames / downsample)
int prefix_length(int frames, int downsample);

// Mean over consecutive groups of `downsample` rows; the last group may be
// shorter and is averaged over its own size.
nn::Mat pool_groups(const nn::Mat& x, int downsample);
nn::Mat pool_groups_backward(const nn::Mat& d_pooled, Eigen::Index rows, int downsample);

// frames -> encoder -> RVQ (n_streams) -> pooling -> linear to d_model.
StylePrefix encode_style(std::span<const Token> excerpt, const ConditionerParams& params,
                         const FeatureExtractor& features, const RvqCodebooks& codebooks, int n_streams,
                         const ConditionerConfig& config, const EncodeOptions& options,
                         StyleCache* cache = nullptr);

// Straight-through across the quantizer plus the commitment gradient, the
// latter multiplied by loss_scale. Accumulates into grad.
void encode_style_backward(const ConditionerParams& params, const StyleCache& cache, const nn::Mat& d_vectors,
                           const ConditionerConfig& config, ConditionerParams& grad, double loss_scale = 1.0);

// The pre-quantization encoder output, for codebook initialization and
// analysis.
nn::Mat encode_unquantized(std::span<const Token> excerpt, const ConditionerParams& params,
                           const FeatureExtractor& features);

// length ~ U{min..max}, then start ~ U{0..song_len-length}.
Span sample_excerpt_span(int song_len, int min_len, int max_len, Rng& rng);
std::pair<std::vector<Token>, Span> sample_excerpt(std::span<const Token> song, int min_len, int max_len, Rng& rng);

}  // namespace stylegen
