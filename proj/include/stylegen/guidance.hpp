#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "stylegen/corpus.hpp"
#include "stylegen/model.hpp"
#include "stylegen/rng.hpp"

namespace stylegen {

enum class GuidanceMode { kNone, kSimple, kDouble };

GuidanceMode guidance_mode_from_name(const std::string& name);
const char* guidance_mode_name(GuidanceMode mode);

struct GuidanceSpec {
  GuidanceMode mode = GuidanceMode::kSimple;
  double alpha = 3.0;
  double beta = 3.0;
  double temperature = 1.0;
  int top_k = 0;  // 0 disables
};

using Logits = Eigen::RowVectorXd;

// l_null + alpha * (l_cond - l_null). alpha == 1 returns l_cond exactly.
Logits simple_cfg(const Logits& l_cond, const Logits& l_null, double alpha);

// l_null + alpha * [l_style + beta * (l_text_style - l_style) - l_null].
// The inner push is exact at beta == 1, so beta == 1 reproduces
// simple_cfg(l_text_style, l_null, alpha) bit for bit.
Logits double_cfg(const Logits& l_null, const Logits& l_style, const Logits& l_text_style, double alpha, double beta);

struct GuidanceInputs {
  Logits l_null;
  Logits l_style;       // unused in simple mode
  Logits l_text_style;  // the fully conditioned branch
};

Logits combine_guidance(const GuidanceSpec& spec, const GuidanceInputs& in);

// Temperature, optional top-k, then a draw from the softmax. Below a
// temperature of 1e-6 this is argmax (lowest index on ties) and consumes
// no randomness.
Token sample_token(const Logits& logits, double temperature, int top_k, Rng& rng);

// Conditions available to the sampler. text holds one or more prefix rows
// (a class embedding or learned pseudo-tokens); style holds StylePrefix rows.
struct SamplingConditions {
  std::optional<nn::Mat> text;
  std::optional<nn::Mat> style;
};

// Autoregressive decoding. Branch prefixes: null = (null text, null style),
// style = (null text, style), conditioned = (text or null, style or null).
TokenSequence sample_sequence(const ModelParams& params, const SamplingConditions& conditions,
                              const GuidanceSpec& guidance, int length, Rng& rng);

}  // namespace stylegen
