#include "stylegen/conditioner.hpp"

#include <cmath>
#include <string>

#include "stylegen/errors.hpp"

namespace stylegen {

ConditionerParams ConditionerParams::init(const ConditionerConfig& config, int feature_dim, int model_dim, Rng& rng) {
  ConditionerParams p;
  p.use_encoder = config.use_encoder;
  p.in_proj = nn::Linear::init(feature_dim, config.enc_dim, 1.0 / std::sqrt(static_cast<double>(feature_dim)), rng);
  if (config.use_encoder) {
    std::normal_distribution<double> normal(0.0, 0.02);
    p.pos.resize(config.max_frames, config.enc_dim);
    for (Eigen::Index r = 0; r < p.pos.rows(); ++r)
      for (Eigen::Index c = 0; c < p.pos.cols(); ++c) p.pos(r, c) = normal(rng);
    for (int i = 0; i < config.enc_layers; ++i)
      p.blocks.push_back(nn::Block::init(config.enc_dim, config.enc_heads, config.enc_ff, config.enc_layers, rng));
    p.ln_out = nn::LayerNorm::init(config.enc_dim);
  }
  p.out_proj = nn::Linear::init(config.enc_dim, model_dim, 1.0 / std::sqrt(static_cast<double>(config.enc_dim)), rng);
  return p;
}

int prefix_length(int frames, int downsample) { return (frames + downsample - 1) / downsample; }

nn::Mat pool_groups(const nn::Mat& x, int downsample) {
  if (downsample < 1) throw ParameterError("downsampling factor must be positive");
  const int rows = static_cast<int>(x.rows());
  const int groups = prefix_length(rows, downsample);
  nn::Mat out(groups, x.cols());
  for (int g = 0; g < groups; ++g) {
    const int start = g * downsample;
    const int size = std::min(downsample, rows - start);
    out.row(g) = x.middleRows(start, size).colwise().sum() / static_cast<double>(size);
  }
  return out;
}

nn::Mat pool_groups_backward(const nn::Mat& d_pooled, Eigen::Index rows, int downsample) {
  nn::Mat dx(rows, d_pooled.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index g = r / downsample;
    const Eigen::Index size = std::min<Eigen::Index>(downsample, rows - g * downsample);
    dx.row(r) = d_pooled.row(g) / static_cast<double>(size);
  }
  return dx;
}

namespace {

nn::Mat run_encoder(const nn::Mat& frames, const ConditionerParams& params, StyleCache& c) {
  c.projected = params.in_proj.forward(frames);
  if (!params.use_encoder) return c.projected;
  if (frames.rows() > params.pos.rows())
    throw ParameterError("excerpt yields " + std::to_string(frames.rows()) + " frames, encoder supports " +
                         std::to_string(params.pos.rows()));
  nn::Mat x = c.projected + params.pos.topRows(frames.rows());
  c.blocks.resize(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i) x = nn::block_forward(params.blocks[i], x, false, &c.blocks[i]);
  return params.ln_out.forward(x, &c.ln_out);
}

}  // namespace

nn::Mat encode_unquantized(std::span<const Token> excerpt, const ConditionerParams& params,
                           const FeatureExtractor& features) {
  StyleCache c;
  return run_encoder(features.frames(excerpt).frames, params, c);
}

StylePrefix encode_style(std::span<const Token> excerpt, const ConditionerParams& params,
                         const FeatureExtractor& features, const RvqCodebooks& codebooks, int n_streams,
                         const ConditionerConfig& config, const EncodeOptions& options, StyleCache* cache) {
  if (n_streams < 1 || n_streams > codebooks.n_codebooks)
    throw ParameterError("stream count " + std::to_string(n_streams) + " outside [1, " +
                         std::to_string(codebooks.n_codebooks) + "]");
  StyleCache local;
  StyleCache& c = cache != nullptr ? *cache : local;

  c.frames = features.frames(excerpt).frames;
  c.encoded = run_encoder(c.frames, params, c);

  if (options.fixed != nullptr) {
    if (options.fixed->offset.rows() != c.encoded.rows() || options.fixed->offset.cols() != c.encoded.cols())
      throw ParameterError("fixed quantization does not match the excerpt");
    c.quant = Quantization{};
    c.quantized = c.encoded + options.fixed->offset;
    c.commit_target = options.fixed->target;
  } else {
    c.quant = quantize(c.encoded, codebooks, n_streams);
    c.quantized = c.quant.quantized;
    c.commit_target = c.quantized;
  }
  c.commitment_weight = options.mode == EncodeMode::kTrain ? options.commitment : 0.0;
  c.commitment_loss = commitment_penalty(c.encoded, c.commit_target, c.commitment_weight);

  c.pooled = pool_groups(c.quantized, config.downsample);
  StylePrefix prefix;
  prefix.vectors = params.out_proj.forward(c.pooled);
  prefix.n_streams_used = n_streams;
  prefix.source_span = Span{0, static_cast<int>(excerpt.size())};
  return prefix;
}

void encode_style_backward(const ConditionerParams& params, const StyleCache& c, const nn::Mat& d_vectors,
                           const ConditionerConfig& config, ConditionerParams& grad, double loss_scale) {
  const nn::Mat d_pooled = params.out_proj.backward(c.pooled, d_vectors, &grad.out_proj);
  const nn::Mat d_quantized = pool_groups_backward(d_pooled, c.quantized.rows(), config.downsample);
  nn::Mat d_encoded;
  straight_through_backward(c.encoded, c.commit_target, d_quantized, c.commitment_weight * loss_scale, d_encoded);

  nn::Mat dx = d_encoded;
  if (params.use_encoder) {
    dx = params.ln_out.backward(c.ln_out, dx, &grad.ln_out);
    for (std::size_t i = params.blocks.size(); i-- > 0;)
      dx = nn::block_backward(params.blocks[i], c.blocks[i], dx, false, &grad.blocks[i]);
    grad.pos.topRows(dx.rows()) += dx;
  }
  params.in_proj.backward(c.frames, dx, &grad.in_proj);
}

Span sample_excerpt_span(int song_len, int min_len, int max_len, Rng& rng) {
  if (min_len < 1 || max_len < min_len) throw ParameterError("invalid excerpt length range");
  if (song_len < max_len)
    throw ParameterError("song of " + std::to_string(song_len) + " tokens is shorter than the maximum excerpt of " +
                         std::to_string(max_len));
  Span span;
  span.length = static_cast<int>(uniform_int(rng, min_len, max_len));
  span.start = static_cast<int>(uniform_int(rng, 0, song_len - span.length));
  return span;
}

std::pair<std::vector<Token>, Span> sample_excerpt(std::span<const Token> song, int min_len, int max_len, Rng& rng) {
  const Span span = sample_excerpt_span(static_cast<int>(song.size()), min_len, max_len, rng);
  std::vector<Token> tokens(song.begin() + span.start, song.begin() + span.start + span.length);
  return {std::move(tokens), span};
}

}  // namespace stylegen
