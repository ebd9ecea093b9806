#include "stylegen/model.hpp"

#include <cmath>
#include <string>

#include "stylegen/container.hpp"
#include "stylegen/errors.hpp"

namespace stylegen {

namespace {

nn::Mat random_normal(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  nn::Mat m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  return m;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& model, const ConditionerConfig& conditioner, int vocab,
                              int n_labels, int feature_dim, Rng& rng) {
  if (vocab < 2 || n_labels < 1) throw ParameterError("model needs a vocabulary and at least one label");
  ModelParams p;
  const int d = model.d_model;
  p.tok_emb = random_normal(vocab, d, 0.02, rng);
  p.pos = random_normal(model.max_len, d, 0.02, rng);
  for (int i = 0; i < model.n_layers; ++i) p.blocks.push_back(nn::Block::init(d, model.n_heads, model.d_ff, model.n_layers, rng));
  p.ln_f = nn::LayerNorm::init(d);
  p.head = nn::Linear::init(d, vocab, 0.02, rng);
  p.text_emb = random_normal(n_labels, d, 0.02, rng);
  p.null_text = random_normal(1, d, 0.02, rng);
  p.null_style = random_normal(1, d, 0.02, rng);
  p.style = ConditionerParams::init(conditioner, feature_dim, d, rng);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  ModelParams::visit(z, [](const std::string&, nn::Mat& m) { m.setZero(); });
  return z;
}

std::vector<nn::Mat*> param_list(ModelParams& p) {
  std::vector<nn::Mat*> out;
  ModelParams::visit(p, [&](const std::string&, nn::Mat& m) { out.push_back(&m); });
  return out;
}

std::vector<const nn::Mat*> param_list(const ModelParams& p) {
  std::vector<const nn::Mat*> out;
  ModelParams::visit(p, [&](const std::string&, const nn::Mat& m) { out.push_back(&m); });
  return out;
}

std::vector<std::string> param_names(const ModelParams& p) {
  std::vector<std::string> out;
  ModelParams::visit(p, [&](const std::string& name, const nn::Mat&) { out.push_back(name); });
  return out;
}

std::uint64_t params_hash(const ModelParams& p) {
  std::vector<std::byte> bytes;
  for (const nn::Mat* m : param_list(p)) {
    const auto* raw = reinterpret_cast<const std::byte*>(m->data());
    bytes.insert(bytes.end(), raw, raw + m->size() * static_cast<Eigen::Index>(sizeof(double)));
  }
  return fnv1a64(bytes);
}

nn::Mat ConditioningPrefix::rows() const {
  if (text_part.cols() != style_part.cols()) throw ParameterError("prefix parts have different widths");
  nn::Mat out(text_part.rows() + style_part.rows(), text_part.cols());
  out << text_part, style_part;
  return out;
}

nn::Mat decoder_forward(const ModelParams& params, const nn::Mat& prefix_rows, std::span<const Token> tokens,
                        DecoderCache* cache) {
  const int p_len = static_cast<int>(prefix_rows.rows());
  const int t_len = static_cast<int>(tokens.size());
  const int total = p_len + t_len;
  if (p_len < 1) throw ParameterError("prefix must contain at least one vector");
  if (prefix_rows.cols() != params.dim())
    throw ParameterError("prefix width " + std::to_string(prefix_rows.cols()) + " differs from model dimension " +
                         std::to_string(params.dim()));
  if (total > params.max_len())
    throw ParameterError("sequence of " + std::to_string(total) + " positions exceeds model context " +
                         std::to_string(params.max_len()));

  DecoderCache local;
  DecoderCache& c = cache != nullptr ? *cache : local;
  c.prefix_len = p_len;
  c.tokens.assign(tokens.begin(), tokens.end());

  nn::Mat x(total, params.dim());
  x.topRows(p_len) = prefix_rows;
  for (int t = 0; t < t_len; ++t) {
    const Token tok = tokens[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= params.vocab()) throw ParameterError("token " + std::to_string(tok) + " outside vocabulary");
    x.row(p_len + t) = params.tok_emb.row(tok);
  }
  x += params.pos.topRows(total);
  c.blocks.resize(params.blocks.size());
  for (std::size_t i = 0; i < params.blocks.size(); ++i) x = nn::block_forward(params.blocks[i], x, true, &c.blocks[i]);
  c.final_hidden = params.ln_f.forward(x.bottomRows(t_len + 1), &c.ln_f);
  return params.head.forward(c.final_hidden);
}

nn::Mat decoder_backward(const ModelParams& params, const DecoderCache& c, const nn::Mat& d_logits, ModelParams* grad) {
  const int t_len = static_cast<int>(c.tokens.size());
  const int total = c.prefix_len + t_len;
  const nn::Mat d_hidden = params.head.backward(c.final_hidden, d_logits, grad ? &grad->head : nullptr);
  nn::Mat dx = nn::Mat::Zero(total, params.dim());
  dx.bottomRows(t_len + 1) = params.ln_f.backward(c.ln_f, d_hidden, grad ? &grad->ln_f : nullptr);
  for (std::size_t i = params.blocks.size(); i-- > 0;)
    dx = nn::block_backward(params.blocks[i], c.blocks[i], dx, true, grad ? &grad->blocks[i] : nullptr);
  if (grad != nullptr) {
    grad->pos.topRows(total) += dx;
    for (int t = 0; t < t_len; ++t) grad->tok_emb.row(c.tokens[static_cast<std::size_t>(t)]) += dx.row(c.prefix_len + t);
  }
  return dx.topRows(c.prefix_len);
}

nn::Mat forward_logits(const ModelParams& params, const ConditioningPrefix& prefix, std::span<const Token> tokens) {
  const nn::Mat all = decoder_forward(params, prefix.rows(), tokens);
  return all.bottomRows(static_cast<Eigen::Index>(tokens.size()));
}

CrossEntropy masked_cross_entropy(const nn::Mat& logits, std::span<const Token> targets,
                                  std::span<const std::uint8_t> mask) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size() || targets.size() != mask.size())
    throw ParameterError("logits, targets and mask disagree in length");
  CrossEntropy out;
  out.grad = nn::Mat::Zero(logits.rows(), logits.cols());
  int active = 0;
  for (std::uint8_t m : mask) active += m != 0 ? 1 : 0;
  if (active == 0) return out;

  const double inv = 1.0 / active;
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    if (mask[static_cast<std::size_t>(t)] == 0) continue;
    const Token target = targets[static_cast<std::size_t>(t)];
    if (target < 0 || target >= logits.cols()) throw ParameterError("target outside vocabulary");
    const double mx = logits.row(t).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(t).array() - mx).exp();
    const double sum = e.sum();
    out.loss -= (logits(t, target) - mx - std::log(sum)) * inv;
    out.grad.row(t) = e * (inv / sum);
    out.grad(t, target) -= inv;
  }
  return out;
}

IncrementalDecoder::IncrementalDecoder(const ModelParams& params, const nn::Mat& prefix_rows, int max_tokens)
    : params_(params) {
  const int capacity = static_cast<int>(prefix_rows.rows()) + max_tokens;
  if (prefix_rows.rows() < 1) throw ParameterError("prefix must contain at least one vector");
  if (prefix_rows.cols() != params.dim()) throw ParameterError("prefix width differs from model dimension");
  if (capacity > params.max_len())
    throw ParameterError("decoding " + std::to_string(capacity) + " positions exceeds model context " +
                         std::to_string(params.max_len()));
  kv_.resize(params.blocks.size());
  for (auto& kv : kv_) kv.reserve(capacity, params.dim());
  for (Eigen::Index r = 0; r < prefix_rows.rows(); ++r) feed(prefix_rows.row(r));
}

void IncrementalDecoder::push(Token token) {
  if (token < 0 || token >= params_.vocab()) throw ParameterError("token outside vocabulary");
  feed(params_.tok_emb.row(token));
}

void IncrementalDecoder::feed(const Eigen::RowVectorXd& row) {
  Eigen::RowVectorXd x = row + params_.pos.row(position_);
  for (std::size_t i = 0; i < params_.blocks.size(); ++i) x = nn::block_step(params_.blocks[i], x, kv_[i]);
  ++position_;
  const nn::Mat h = params_.ln_f.forward(nn::Mat(x), nullptr);
  logits_ = params_.head.forward(h).row(0);
}

ExamplePlan plan_example(int n_songs, int song_len, const TrainConfig& train, const ConditionerConfig& cond,
                         int n_codebooks, Rng& rng) {
  if (n_songs < 1) throw ParameterError("no training songs");
  ExamplePlan plan;
  plan.song_index = static_cast<int>(uniform_int(rng, 0, n_songs - 1));
  const int seg = std::min(train.segment_len, song_len);
  plan.segment_start = static_cast<int>(uniform_int(rng, 0, song_len - seg));
  plan.excerpt = sample_excerpt_span(seg, cond.min_excerpt, cond.max_excerpt, rng);
  plan.condition = train.condition_dropout ? static_cast<ConditionCase>(uniform_int(rng, 0, 3)) : ConditionCase::kBoth;
  plan.n_streams = train.depth_dropout ? static_cast<int>(uniform_int(rng, 1, n_codebooks)) : n_codebooks;
  return plan;
}

ExampleLoss example_loss(const StyleSystem& system, std::span<const Token> segment, int text_label,
                         const ExamplePlan& plan, bool mask_excerpt, ModelParams* grad, double grad_scale,
                         EmaBatch* ema, const FixedQuantization* fixed) {
  const ModelParams& params = system.params;
  if (plan.excerpt.start < 0 || plan.excerpt.start + plan.excerpt.length > static_cast<int>(segment.size()))
    throw ParameterError("excerpt span outside the segment");

  ConditioningPrefix prefix;
  if (has_text(plan.condition)) {
    if (text_label < 0 || text_label >= params.text_emb.rows()) throw ParameterError("text label out of range");
    prefix.text_part = params.text_emb.row(text_label);
  } else {
    prefix.text_part = params.null_text;
  }

  StyleCache style_cache;
  ExampleLoss out;
  if (has_style(plan.condition)) {
    const auto excerpt = segment.subspan(static_cast<std::size_t>(plan.excerpt.start),
                                         static_cast<std::size_t>(plan.excerpt.length));
    EncodeOptions opts;
    opts.mode = EncodeMode::kTrain;
    opts.commitment = system.rvq_config.commitment;
    opts.fixed = fixed;
    prefix.style_part = encode_style(excerpt, params.style, system.features, system.codebooks, plan.n_streams,
                                     system.conditioner_config, opts, &style_cache)
                            .vectors;
    out.commitment = style_cache.commitment_loss;
    if (ema != nullptr && fixed == nullptr) ema->add(style_cache.quant);
  } else {
    prefix.style_part = params.null_style;
  }

  DecoderCache dc;
  const nn::Mat logits = decoder_forward(params, prefix.rows(), segment, &dc);
  std::vector<std::uint8_t> mask(segment.size(), 1);
  if (mask_excerpt)
    for (int t = plan.excerpt.start; t < plan.excerpt.start + plan.excerpt.length; ++t) mask[static_cast<std::size_t>(t)] = 0;
  const CrossEntropy ce = masked_cross_entropy(logits.topRows(static_cast<Eigen::Index>(segment.size())), segment, mask);
  out.cross_entropy = ce.loss;
  out.loss = ce.loss + out.commitment;

  if (grad == nullptr) return out;

  nn::Mat d_logits = nn::Mat::Zero(logits.rows(), logits.cols());
  d_logits.topRows(ce.grad.rows()) = grad_scale * ce.grad;
  const nn::Mat d_prefix = decoder_backward(params, dc, d_logits, grad);
  const Eigen::Index text_rows = prefix.text_part.rows();
  if (has_text(plan.condition)) {
    grad->text_emb.row(text_label) += d_prefix.row(0);
  } else {
    grad->null_text += d_prefix.topRows(text_rows);
  }
  if (has_style(plan.condition)) {
    encode_style_backward(params.style, style_cache, d_prefix.bottomRows(d_prefix.rows() - text_rows),
                          system.conditioner_config, grad->style, grad_scale);
  } else {
    grad->null_style += d_prefix.bottomRows(1);
  }
  return out;
}

AdamState AdamState::zeros_for(const ModelParams& p) {
  AdamState s;
  for (const nn::Mat* m : param_list(p)) {
    s.m.push_back(nn::Mat::Zero(m->rows(), m->cols()));
    s.v.push_back(nn::Mat::Zero(m->rows(), m->cols()));
  }
  return s;
}

void adam_update(std::span<nn::Mat* const> params, std::span<const nn::Mat* const> grads, AdamState& state,
                 const AdamHyper& hyper, std::span<const std::uint8_t> decay) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ParameterError("optimizer state does not match the parameter list");
  if (!decay.empty() && decay.size() != params.size()) throw ParameterError("decay mask does not match the parameter list");
  ++state.t;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Mat& m = state.m[i];
    nn::Mat& v = state.v[i];
    const nn::Mat& g = *grads[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    if (!decay.empty() && decay[i] != 0 && hyper.weight_decay > 0.0) *params[i] *= 1.0 - hyper.lr * hyper.weight_decay;
    params[i]->array() -= hyper.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + hyper.eps);
  }
}

std::vector<std::uint8_t> decay_mask(const ModelParams& p) {
  std::vector<std::uint8_t> mask;
  for (const auto& name : param_names(p)) mask.push_back(name.ends_with(".w") ? 1 : 0);
  return mask;
}

double learning_rate(const TrainConfig& train, std::int64_t step) {
  if (train.warmup <= 0) return train.lr;
  return train.lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(train.warmup));
}

StepResult training_step(StyleSystem& system, AdamState& adam, std::span<const TokenSequence> songs,
                         const TrainConfig& train, std::int64_t step, Rng& rng) {
  if (songs.empty()) throw ParameterError("no training songs");
  if (train.batch < 1) throw ParameterError("batch size must be positive");
  const int song_len = static_cast<int>(songs.front().tokens.size());
  const int seg = std::min(train.segment_len, song_len);
  if (seg < system.conditioner_config.max_excerpt)
    throw ParameterError("training segment of " + std::to_string(seg) + " tokens is shorter than the maximum excerpt");

  StepResult result;
  ModelParams grad = zeros_like(system.params);
  EmaBatch ema(system.codebooks.n_codebooks);
  const double scale = 1.0 / train.batch;
  for (int b = 0; b < train.batch; ++b) {
    const ExamplePlan plan = plan_example(static_cast<int>(songs.size()), song_len, train, system.conditioner_config,
                                          system.codebooks.n_codebooks, rng);
    const TokenSequence& song = songs[static_cast<std::size_t>(plan.song_index)];
    if (static_cast<int>(song.tokens.size()) != song_len) throw ParameterError("songs differ in length");
    const auto segment = std::span<const Token>(song.tokens).subspan(static_cast<std::size_t>(plan.segment_start),
                                                                     static_cast<std::size_t>(seg));
    const ExampleLoss l = example_loss(system, segment, song.style_id, plan, train.mask_excerpt, &grad, scale, &ema);
    result.loss += l.loss * scale;
    result.plans.push_back(plan);
  }
  if (!std::isfinite(result.loss)) throw NumericError("non-finite training loss at step " + std::to_string(step));

  auto grads = param_list(static_cast<const ModelParams&>(grad));
  if (train.grad_clip > 0.0) {
    double sq = 0.0;
    for (const nn::Mat* g : grads) sq += g->squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > train.grad_clip) {
      const double f = train.grad_clip / norm;
      for (nn::Mat* g : param_list(grad)) *g *= f;
    }
  }
  AdamHyper hyper{learning_rate(train, step), train.beta1, train.beta2, train.adam_eps, train.weight_decay};
  auto params = param_list(system.params);
  adam_update(params, grads, adam, hyper, decay_mask(system.params));
  ema_update(system.codebooks, ema.stages(), rng);
  return result;
}

}  // namespace stylegen
