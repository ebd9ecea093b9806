#include "stylegen/inversion.hpp"

#include <cmath>
#include <string>

#include "stylegen/errors.hpp"

namespace stylegen {

double FrozenModelObjective::loss_and_grad(const nn::Mat& c, std::span<const std::vector<Token>> chunks,
                                           nn::Mat* grad) const {
  if (c.cols() != params_.dim()) throw ParameterError("embedding width differs from model dimension");
  if (chunks.empty()) throw ParameterError("no chunks");
  nn::Mat prefix(c.rows() + 1, c.cols());
  prefix << c, params_.null_style;
  if (grad != nullptr) *grad = nn::Mat::Zero(c.rows(), c.cols());

  const double scale = 1.0 / static_cast<double>(chunks.size());
  double loss = 0.0;
  for (const auto& chunk : chunks) {
    DecoderCache dc;
    const nn::Mat logits = decoder_forward(params_, prefix, chunk, grad != nullptr ? &dc : nullptr);
    const std::vector<std::uint8_t> mask(chunk.size(), 1);
    const CrossEntropy ce = masked_cross_entropy(logits.topRows(static_cast<Eigen::Index>(chunk.size())), chunk, mask);
    loss += scale * ce.loss;
    if (grad != nullptr) {
      nn::Mat d_logits = nn::Mat::Zero(logits.rows(), logits.cols());
      d_logits.topRows(ce.grad.rows()) = scale * ce.grad;
      *grad += decoder_backward(params_, dc, d_logits, nullptr).topRows(c.rows());
    }
  }
  return loss;
}

nn::Mat initial_embedding(const ModelParams& params, const InversionConfig& config) {
  if (config.n_pseudo_tokens < 1) throw ParameterError("need at least one pseudo token");
  Eigen::RowVectorXd base;
  if (config.init_label < 0) {
    base = params.text_emb.colwise().mean();
  } else {
    if (config.init_label >= params.text_emb.rows()) throw ParameterError("initial label out of range");
    base = params.text_emb.row(config.init_label);
  }
  return base.replicate(config.n_pseudo_tokens, 1);
}

InversionResult invert(const InversionObjective& objective, std::span<const Token> song, const nn::Mat& init,
                       const InversionConfig& config) {
  const int length = static_cast<int>(song.size());
  if (config.chunk_len < 1 || length < config.chunk_len)
    throw ParameterError("song of " + std::to_string(length) + " tokens is shorter than the chunk length " +
                         std::to_string(config.chunk_len));
  if (config.batch < 1 || config.steps < 0) throw ParameterError("invalid inversion batch or step count");
  if (init.cols() != objective.dim()) throw ParameterError("initial embedding width differs from model dimension");

  InversionResult result;
  result.embedding = init;
  AdamState adam;
  adam.m.push_back(nn::Mat::Zero(init.rows(), init.cols()));
  adam.v.push_back(nn::Mat::Zero(init.rows(), init.cols()));
  const AdamHyper hyper{config.lr, 0.9, 0.999, 1e-8};

  Rng rng = make_rng(config.seed, {stream::kInvert});
  std::vector<std::vector<Token>> chunks(static_cast<std::size_t>(config.batch));
  nn::Mat grad;
  for (int step = 0; step < config.steps; ++step) {
    for (auto& chunk : chunks) {
      const auto start = static_cast<std::size_t>(uniform_int(rng, 0, length - config.chunk_len));
      chunk.assign(song.begin() + static_cast<std::ptrdiff_t>(start),
                   song.begin() + static_cast<std::ptrdiff_t>(start + static_cast<std::size_t>(config.chunk_len)));
    }
    const double loss = objective.loss_and_grad(result.embedding, chunks, &grad);
    if (!std::isfinite(loss)) throw NumericError("non-finite inversion loss at step " + std::to_string(step));
    result.loss_trace.push_back(loss);
    nn::Mat* p = &result.embedding;
    const nn::Mat* g = &grad;
    adam_update(std::span<nn::Mat* const>(&p, 1), std::span<const nn::Mat* const>(&g, 1), adam, hyper);
  }
  return result;
}

InversionResult invert(const ModelParams& frozen, std::span<const Token> song, const InversionConfig& config) {
  const FrozenModelObjective objective(frozen);
  return invert(objective, song, initial_embedding(frozen, config), config);
}

}  // namespace stylegen
