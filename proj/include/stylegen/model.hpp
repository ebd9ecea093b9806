#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stylegen/conditioner.hpp"
#include "stylegen/corpus.hpp"
#include "stylegen/features.hpp"
#include "stylegen/nn.hpp"
#include "stylegen/rvq.hpp"

namespace stylegen {

struct ModelConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 160;  // prefix + tokens
};

// All gradient-trained weights. Codebooks are learned by EMA and live
// outside.
struct ModelParams {
  nn::Mat tok_emb;  // V x d_model
  nn::Mat pos;      // max_len x d_model
  std::vector<nn::Block> blocks;
  nn::LayerNorm ln_f;
  nn::Linear head;      // d_model -> V
  nn::Mat text_emb;     // n_labels x d_model
  nn::Mat null_text;    // 1 x d_model
  nn::Mat null_style;   // 1 x d_model
  ConditionerParams style;

  static ModelParams init(const ModelConfig& model, const ConditionerConfig& conditioner, int vocab,
                          int n_labels, int feature_dim, Rng& rng);

  int vocab() const { return static_cast<int>(tok_emb.rows()); }
  int dim() const { return static_cast<int>(tok_emb.cols()); }
  int max_len() const { return static_cast<int>(pos.rows()); }

  template <class Self, class F>
  static void visit(Self& s, F&& f) {
    f(std::string("tok_emb"), s.tok_emb);
    f(std::string("pos"), s.pos);
    for (std::size_t i = 0; i < s.blocks.size(); ++i) nn::Block::visit(s.blocks[i], "block" + std::to_string(i), f);
    nn::LayerNorm::visit(s.ln_f, "ln_f", f);
    nn::Linear::visit(s.head, "head", f);
    f(std::string("text_emb"), s.text_emb);
    f(std::string("null_text"), s.null_text);
    f(std::string("null_style"), s.null_style);
    ConditionerParams::visit(s.style, "style", f);
  }
};

ModelParams zeros_like(const ModelParams& p);
std::vector<nn::Mat*> param_list(ModelParams& p);
std::vector<const nn::Mat*> param_list(const ModelParams& p);
std::vector<std::string> param_names(const ModelParams& p);
std::uint64_t params_hash(const ModelParams& p);

// Everything a forward pass needs.
struct StyleSystem {
  ModelConfig model_config;
  ConditionerConfig conditioner_config;
  RvqConfig rvq_config;
  ModelParams params;
  RvqCodebooks codebooks;
  FeatureExtractor features;
};

// Prefix rows fed ahead of the token embeddings. The text part is a class
// embedding, the null text vector, or learned pseudo-token vectors; the
// style part is a StylePrefix or the null style vector.
struct ConditioningPrefix {
  nn::Mat text_part;
  nn::Mat style_part;

  nn::Mat rows() const;
};

struct DecoderCache {
  int prefix_len = 0;
  std::vector<Token> tokens;
  std::vector<nn::BlockCache> blocks;
  nn::LayerNormCache ln_f;
  nn::Mat final_hidden;  // rows prefix_len-1 .. end, before the head
};

// Next-token logits for the last prefix position followed by every token
// position: (T + 1) x V. Row 0 predicts tokens[0]; row j + 1 predicts
// tokens[j + 1] from the prefix and tokens[0..j].
nn::Mat decoder_forward(const ModelParams& params, const nn::Mat& prefix_rows, std::span<const Token> tokens,
                        DecoderCache* cache = nullptr);

// Returns dL/d(prefix rows). Parameter gradients are accumulated only when
// grad is non-null.
nn::Mat decoder_backward(const ModelParams& params, const DecoderCache& cache, const nn::Mat& d_logits,
                         ModelParams* grad);

// T x V; row j gives unnormalized log-probabilities of token j + 1.
nn::Mat forward_logits(const ModelParams& params, const ConditioningPrefix& prefix, std::span<const Token> tokens);

struct CrossEntropy {
  double loss = 0.0;
  nn::Mat grad;  // dloss/dlogits
};

// Mean over positions with mask != 0 of -log softmax(logits_t)[targets_t].
// Masked positions contribute zero gradient; an empty mask gives loss 0.
CrossEntropy masked_cross_entropy(const nn::Mat& logits, std::span<const Token> targets,
                                  std::span<const std::uint8_t> mask);

// Incremental decoding with per-block key/value caches.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ModelParams& params, const nn::Mat& prefix_rows, int max_tokens);

  // Logits for the next token given everything pushed so far.
  const Eigen::RowVectorXd& logits() const { return logits_; }
  void push(Token token);

 private:
  void feed(const Eigen::RowVectorXd& row);

  const ModelParams& params_;
  std::vector<nn::KvCache> kv_;
  int position_ = 0;
  Eigen::RowVectorXd logits_;
};

enum class ConditionCase { kBoth = 0, kTextOnly = 1, kStyleOnly = 2, kNone = 3 };

inline bool has_text(ConditionCase c) { return c == ConditionCase::kBoth || c == ConditionCase::kTextOnly; }
inline bool has_style(ConditionCase c) { return c == ConditionCase::kBoth || c == ConditionCase::kStyleOnly; }

struct TrainConfig {
  int steps = 10000;
  int batch = 16;
  double lr = 3e-3;
  int warmup = 100;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, linear weight matrices only
  double grad_clip = 1.0;  // global norm; 0 disables
  int segment_len = 128;   // training window cropped from each song
  bool mask_excerpt = true;
  bool condition_dropout = true;
  bool depth_dropout = true;
  int log_every = 100;
};

// Random choices for one training example.
struct ExamplePlan {
  int song_index = 0;
  int segment_start = 0;
  Span excerpt;  // relative to the segment
  ConditionCase condition = ConditionCase::kBoth;
  int n_streams = 1;
};

// Draws, in order: song, segment start, excerpt length and start, condition
// case (uniform over the four cases), stream count (uniform 1..K).
ExamplePlan plan_example(int n_songs, int song_len, const TrainConfig& train, const ConditionerConfig& cond,
                         int n_codebooks, Rng& rng);

struct ExampleLoss {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double commitment = 0.0;
};

// Cross-entropy over the segment (excerpt targets masked when requested)
// plus the commitment penalty. Gradients are scaled by grad_scale and
// accumulated into grad when non-null; quantizer assignments go to ema.
ExampleLoss example_loss(const StyleSystem& system, std::span<const Token> segment, int text_label,
                         const ExamplePlan& plan, bool mask_excerpt, ModelParams* grad, double grad_scale,
                         EmaBatch* ema, const FixedQuantization* fixed = nullptr);

struct AdamState {
  std::vector<nn::Mat> m;
  std::vector<nn::Mat> v;
  std::int64_t t = 0;

  static AdamState zeros_for(const ModelParams& p);
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// decay[i] selects the parameters that get decoupled weight decay; empty
// means none.
void adam_update(std::span<nn::Mat* const> params, std::span<const nn::Mat* const> grads, AdamState& state,
                 const AdamHyper& hyper, std::span<const std::uint8_t> decay = {});

// 1 for linear weight matrices (names ending in ".w"), 0 elsewhere.
std::vector<std::uint8_t> decay_mask(const ModelParams& p);

double learning_rate(const TrainConfig& train, std::int64_t step);

struct StepResult {
  double loss = 0.0;
  std::vector<ExamplePlan> plans;
};

// One optimizer step on a batch drawn from songs: forward/backward for each
// planned example, Adam on all trainable weights, EMA on the codebooks.
StepResult training_step(StyleSystem& system, AdamState& adam, std::span<const TokenSequence> songs,
                         const TrainConfig& train, std::int64_t step, Rng& rng);

}  // namespace stylegen
