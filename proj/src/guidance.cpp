#include "stylegen/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "stylegen/errors.hpp"

namespace stylegen {

namespace {

void require_finite(const Logits& l, const char* what) {
  if (!l.allFinite()) throw NumericError(std::string("non-finite values in ") + what + " logits");
}

nn::Mat stack(const nn::Mat& a, const nn::Mat& b) {
  nn::Mat out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

GuidanceMode guidance_mode_from_name(const std::string& name) {
  if (name == "none") return GuidanceMode::kNone;
  if (name == "simple") return GuidanceMode::kSimple;
  if (name == "double") return GuidanceMode::kDouble;
  throw ParameterError("unknown guidance mode '" + name + "' (expected none, simple or double)");
}

const char* guidance_mode_name(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::kNone: return "none";
    case GuidanceMode::kSimple: return "simple";
    case GuidanceMode::kDouble: return "double";
  }
  return "?";
}

Logits simple_cfg(const Logits& l_cond, const Logits& l_null, double alpha) {
  require_finite(l_cond, "conditional");
  require_finite(l_null, "unconditional");
  if (l_cond.size() != l_null.size()) throw ParameterError("logit vectors differ in size");
  if (alpha == 1.0) return l_cond;
  return l_null + alpha * (l_cond - l_null);
}

Logits double_cfg(const Logits& l_null, const Logits& l_style, const Logits& l_text_style, double alpha, double beta) {
  require_finite(l_style, "style");
  require_finite(l_text_style, "text+style");
  if (l_style.size() != l_text_style.size()) throw ParameterError("logit vectors differ in size");
  const Logits inner = beta == 1.0 ? l_text_style : Logits(l_style + beta * (l_text_style - l_style));
  return simple_cfg(inner, l_null, alpha);
}

Logits combine_guidance(const GuidanceSpec& spec, const GuidanceInputs& in) {
  switch (spec.mode) {
    case GuidanceMode::kNone:
      require_finite(in.l_text_style, "conditional");
      return in.l_text_style;
    case GuidanceMode::kSimple:
      return simple_cfg(in.l_text_style, in.l_null, spec.alpha);
    case GuidanceMode::kDouble:
      return double_cfg(in.l_null, in.l_style, in.l_text_style, spec.alpha, spec.beta);
  }
  throw ParameterError("unknown guidance mode");
}

Token sample_token(const Logits& logits, double temperature, int top_k, Rng& rng) {
  const Eigen::Index v = logits.size();
  if (v == 0) throw ParameterError("empty logits");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (top_k < 0) throw ParameterError("top_k must be non-negative");
  require_finite(logits, "guided");

  if (temperature < 1e-6) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v; ++i)
      if (logits(i) > logits(best)) best = i;
    return static_cast<Token>(best);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(v));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t kept = order.size();
  if (top_k > 0 && top_k < v) {
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return logits(a) > logits(b); });
    kept = static_cast<std::size_t>(top_k);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept));
  }

  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kept; ++i) mx = std::max(mx, logits(order[i]) / temperature);
  std::vector<double> w(kept);
  double sum = 0.0;
  for (std::size_t i = 0; i < kept; ++i) {
    w[i] = std::exp(logits(order[i]) / temperature - mx);
    sum += w[i];
  }
  const double u = uniform01(rng) * sum;
  double acc = 0.0;
  for (std::size_t i = 0; i < kept; ++i) {
    acc += w[i];
    if (u < acc) return static_cast<Token>(order[i]);
  }
  return static_cast<Token>(order[kept - 1]);
}

TokenSequence sample_sequence(const ModelParams& params, const SamplingConditions& conditions,
                              const GuidanceSpec& guidance, int length, Rng& rng) {
  if (length < 2) throw ParameterError("generated length must be at least 2");
  if (guidance.mode == GuidanceMode::kDouble && !conditions.style)
    throw ParameterError("double guidance needs a style condition");
  if (guidance.mode != GuidanceMode::kNone && !(guidance.alpha >= 1.0)) throw ParameterError("alpha must be >= 1");
  if (guidance.mode == GuidanceMode::kDouble && !(guidance.beta >= 1.0)) throw ParameterError("beta must be >= 1");

  const nn::Mat text = conditions.text ? *conditions.text : params.null_text;
  const nn::Mat style = conditions.style ? *conditions.style : params.null_style;

  std::optional<IncrementalDecoder> null_branch, style_branch;
  IncrementalDecoder cond_branch(params, stack(text, style), length);
  if (guidance.mode != GuidanceMode::kNone) null_branch.emplace(params, stack(params.null_text, params.null_style), length);
  if (guidance.mode == GuidanceMode::kDouble) style_branch.emplace(params, stack(params.null_text, style), length);

  TokenSequence out;
  out.tokens.reserve(static_cast<std::size_t>(length));
  for (int t = 0; t < length; ++t) {
    GuidanceInputs in;
    in.l_text_style = cond_branch.logits();
    if (null_branch) in.l_null = null_branch->logits();
    if (style_branch) in.l_style = style_branch->logits();
    const Token tok = sample_token(combine_guidance(guidance, in), guidance.temperature, guidance.top_k, rng);
    out.tokens.push_back(tok);
    if (t + 1 == length) break;
    cond_branch.push(tok);
    if (null_branch) null_branch->push(tok);
    if (style_branch) style_branch->push(tok);
  }
  return out;
}

}  // namespace stylegen
