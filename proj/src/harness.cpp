#include "stylegen/harness.hpp"

#include <cmath>
#include <fstream>

#include "stylegen/container.hpp"
#include "stylegen/errors.hpp"
#include "stylegen/guidance.hpp"

namespace stylegen {

namespace {

constexpr const char* kEmbeddingMagic = "stylegen-embedding";
constexpr int kEmbeddingVersion = 1;

bool same_corpus_config(const CorpusConfig& a, const CorpusConfig& b) {
  return a.n_styles == b.n_styles && a.n_train == b.n_train && a.n_valid == b.n_valid && a.n_test == b.n_test &&
         a.song_len == b.song_len && a.vocab == b.vocab && a.alpha_pi == b.alpha_pi &&
         a.alpha_trans == b.alpha_trans && a.seed == b.seed;
}

// Keys that may differ between a checkpoint and the run resuming from it.
bool resumable_key(const std::string& key) { return key == "train.steps" || key == "out_dir" || key == "train.log_every"; }

std::vector<Token> slice(const TokenSequence& song, int start, int length) {
  const auto first = song.tokens.begin() + start;
  return {first, first + length};
}

struct EvalExcerpt {
  const TokenSequence* song = nullptr;
  std::vector<Token> tokens;
};

EvalExcerpt draw_test_excerpt(const Corpus& corpus, const MetricsConfig& metrics, int index) {
  if (corpus.test.empty()) throw ParameterError("the corpus has no test songs");
  Rng rng = make_rng(metrics.seed, {stream::kEval, static_cast<std::uint64_t>(index)});
  EvalExcerpt ex;
  ex.song = &corpus.test[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(corpus.test.size()) - 1))];
  const int len = static_cast<int>(ex.song->tokens.size());
  if (len < metrics.excerpt_len) throw ParameterError("test songs are shorter than metrics.excerpt_len");
  const int start = static_cast<int>(uniform_int(rng, 0, len - metrics.excerpt_len));
  ex.tokens = slice(*ex.song, start, metrics.excerpt_len);
  return ex;
}

nn::Mat style_prefix(const StyleSystem& s, std::span<const Token> excerpt, int n_streams) {
  EncodeOptions opts;
  opts.mode = EncodeMode::kEval;
  return encode_style(excerpt, s.params.style, s.features, s.codebooks, n_streams, s.conditioner_config, opts).vectors;
}

double frechet_to_store(const std::vector<Eigen::VectorXd>& generated, const EmbeddingStore& store) {
  if (generated.size() < 2 || store.size() < 2) return std::nan("");
  Eigen::MatrixXd g(static_cast<Eigen::Index>(generated.size()), store.vectors.cols());
  for (std::size_t i = 0; i < generated.size(); ++i) g.row(static_cast<Eigen::Index>(i)) = generated[i].transpose();
  return frechet_distance(fit_gaussian(g), fit_gaussian(store.vectors));
}

}  // namespace

Corpus open_corpus(const RunConfig& config, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw IoError("corpus file " + path.string() + " not found; create it with `stylegen corpus gen --out " +
                  path.string() + "`");
  Corpus corpus = load_corpus(path);
  if (!same_corpus_config(corpus.config, config.corpus))
    throw CompatibilityError("corpus file " + path.string() + " was generated with different corpus.* settings");
  return corpus;
}

EmbeddingStore build_eval_store(const Corpus& corpus, const RunConfig& config) {
  const FeatureExtractor features = make_features(config.features, config.corpus.vocab);
  const TaggedSongs groups[] = {{corpus.valid, "valid"}, {corpus.test, "test"}};
  return build_store(groups, config.metrics.store_chunk_len, features);
}

void check_store_compatible(const EmbeddingStore& store, const FeatureExtractor& features) {
  const auto& p = features.projection;
  if (store.projection_seed != p.seed() || store.projection_dim != p.dim() || store.window != features.window ||
      store.hop != features.hop)
    throw CompatibilityError("store features (seed " + std::to_string(store.projection_seed) + ", dim " +
                             std::to_string(store.projection_dim) + ") do not match the checkpoint (seed " +
                             std::to_string(p.seed()) + ", dim " + std::to_string(p.dim()) + ")");
}

Checkpoint initial_checkpoint(const RunConfig& config, const Corpus& corpus) {
  if (corpus.train.empty()) throw ParameterError("the corpus has no training songs");
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.system = fresh_system(config);
  StyleSystem& s = ckpt.system;

  // Encoder outputs of random training excerpts seed the codebooks.
  Rng rng = make_rng(config.seed, {stream::kKmeans});
  std::vector<nn::Mat> encoded;
  Eigen::Index rows = 0;
  for (int i = 0; i < config.rvq.init_excerpts; ++i) {
    const auto& song = corpus.train[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(corpus.train.size()) - 1))];
    const Span span = sample_excerpt_span(static_cast<int>(song.tokens.size()), config.conditioner.min_excerpt,
                                          config.conditioner.max_excerpt, rng);
    const auto excerpt = slice(song, span.start, span.length);
    encoded.push_back(encode_unquantized(excerpt, s.params.style, s.features));
    rows += encoded.back().rows();
  }
  nn::Mat samples(rows, encoded.front().cols());
  Eigen::Index r = 0;
  for (const auto& m : encoded) {
    samples.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  KmeansOptions km;
  km.iters = config.rvq.kmeans_iters;
  s.codebooks = init_codebooks_kmeans(samples, config.rvq.n_codebooks, config.rvq.codebook_size, config.seed, km,
                                      config.rvq);
  ckpt.adam = AdamState::zeros_for(s.params);
  ckpt.step = 0;
  return ckpt;
}

TrainResult run_train(const RunConfig& config, const Corpus& corpus, const TrainOptions& options) {
  validate_config(config);
  if (!same_corpus_config(corpus.config, config.corpus))
    throw CompatibilityError("corpus was generated with different corpus.* settings");

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  if (options.resume) {
    ckpt = load_checkpoint(*options.resume);
    for (const auto& key : config_keys())
      if (!resumable_key(key) && config_get(ckpt.config, key) != config_get(config, key))
        throw CompatibilityError("cannot resume: " + key + " is " + config_get(ckpt.config, key) +
                                 " in the checkpoint but " + config_get(config, key) + " in the run config");
    ckpt.config = config;
  } else {
    ckpt = initial_checkpoint(config, corpus);
  }

  std::ofstream log;
  if (options.loss_log) {
    if (options.loss_log->has_parent_path()) std::filesystem::create_directories(options.loss_log->parent_path());
    const bool append = options.resume.has_value() && std::filesystem::exists(*options.loss_log);
    log.open(*options.loss_log, append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write loss log " + options.loss_log->string());
    if (!append) log << "step,loss\n";
  }

  for (std::int64_t step = ckpt.step; step < config.train.steps; ++step) {
    Rng rng = make_rng(config.seed, {stream::kTrainStep, static_cast<std::uint64_t>(step)});
    double loss = 0.0;
    try {
      loss = training_step(ckpt.system, ckpt.adam, corpus.train, config.train, step, rng).loss;
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + "; aborting (lr " + std::to_string(learning_rate(config.train, step)) +
                         ", last finite loss " +
                         (result.losses.empty() ? std::string("none") : fmt(result.losses.back())) + ")");
    }
    ckpt.step = step + 1;
    result.losses.push_back(loss);
    if (log) log << step << "," << fmt(loss) << "\n";
    if (options.progress) options.progress(step, loss);
  }
  if (options.checkpoint_out) save_checkpoint(ckpt, *options.checkpoint_out);
  return result;
}

std::vector<KnnRow> run_eval_knn(const Checkpoint& ckpt, const Corpus& corpus, const EmbeddingStore& store,
                                 const MetricsConfig& metrics, bool identity) {
  const StyleSystem& s = ckpt.system;
  check_store_compatible(store, s.features);
  if (metrics.streams.empty()) throw ParameterError("no stream depths requested");
  for (int n : metrics.streams)
    if (n < 1 || n > s.codebooks.n_codebooks) throw ParameterError("stream depth " + std::to_string(n) + " out of range");

  GuidanceSpec guidance = ckpt.config.sampler;
  guidance.mode = GuidanceMode::kSimple;

  std::vector<KnnRow> rows;
  for (int n_streams : metrics.streams) {
    KnnRow row;
    row.n_streams = n_streams;
    row.n_samples = metrics.n_samples;
    std::vector<Eigen::VectorXd> generated_embeddings;
    std::vector<TokenSequence> generated;
    std::vector<int> intended;
    double common = 0.0, overfit = 0.0, kl = 0.0;
    for (int i = 0; i < metrics.n_samples; ++i) {
      const EvalExcerpt ex = draw_test_excerpt(corpus, metrics, i);
      TokenSequence g;
      if (identity) {
        g.tokens = ex.tokens;
      } else {
        SamplingConditions cond;
        cond.style = style_prefix(s, ex.tokens, n_streams);
        Rng rng = make_rng(metrics.seed, {stream::kGenerate, static_cast<std::uint64_t>(i)});
        g = sample_sequence(s.params, cond, guidance, metrics.generate_len, rng);
      }
      g.style_id = ex.song->style_id;
      const Eigen::VectorXd e_c = s.features.embed(ex.tokens);
      const Eigen::VectorXd e_g = s.features.embed(g.tokens);
      common += knn_common(store, e_c, e_g, metrics.k);
      overfit += knn_overfit(store, e_c, e_g);
      kl += bigram_kl(g.tokens, corpus.styles[static_cast<std::size_t>(ex.song->style_id)]);
      generated_embeddings.push_back(e_g);
      intended.push_back(ex.song->style_id);
      generated.push_back(std::move(g));
    }
    const double n = metrics.n_samples;
    row.knn_common = common / n;
    row.knn_overfit = overfit / n;
    row.bigram_kl = kl / n;
    row.text_adherence = text_adherence(generated, intended, corpus.styles);
    row.frechet = frechet_to_store(generated_embeddings, store);
    rows.push_back(row);
  }
  return rows;
}

Table knn_table(std::span<const KnnRow> rows) {
  Table t;
  t.columns = {"n_streams", "samples", "knn_common", "knn_overfit", "frechet", "text_adherence", "bigram_kl"};
  for (const auto& r : rows)
    t.add_row({std::to_string(r.n_streams), std::to_string(r.n_samples), fmt(r.knn_common), fmt(r.knn_overfit),
               fmt(r.frechet), fmt(r.text_adherence), fmt(r.bigram_kl)});
  return t;
}

SweepRow run_shuffled_eval(const Checkpoint& ckpt, const Corpus& corpus, const EmbeddingStore& store,
                           const MetricsConfig& metrics, const GuidanceSpec& guidance) {
  const StyleSystem& s = ckpt.system;
  check_store_compatible(store, s.features);
  const int n_styles = static_cast<int>(corpus.styles.size());
  if (n_styles < 2) throw ParameterError("shuffled text labels need at least two styles");

  SweepRow row;
  row.beta = guidance.mode == GuidanceMode::kDouble ? guidance.beta : 1.0;
  row.n_samples = metrics.n_samples;
  std::vector<Eigen::VectorXd> generated_embeddings;
  std::vector<TokenSequence> generated;
  std::vector<int> intended;
  double common = 0.0;
  for (int i = 0; i < metrics.n_samples; ++i) {
    const EvalExcerpt ex = draw_test_excerpt(corpus, metrics, i);
    Rng label_rng = make_rng(metrics.seed, {stream::kEval, static_cast<std::uint64_t>(i), 1});
    int label = static_cast<int>(uniform_int(label_rng, 0, n_styles - 2));
    if (label >= ex.song->style_id) ++label;

    SamplingConditions cond;
    cond.text = nn::Mat(s.params.text_emb.row(label));
    cond.style = style_prefix(s, ex.tokens, metrics.fixed_streams);
    Rng rng = make_rng(metrics.seed, {stream::kGenerate, static_cast<std::uint64_t>(i)});
    TokenSequence g = sample_sequence(s.params, cond, guidance, metrics.generate_len, rng);
    const Eigen::VectorXd e_g = s.features.embed(g.tokens);
    common += knn_common(store, s.features.embed(ex.tokens), e_g, metrics.k);
    generated_embeddings.push_back(e_g);
    intended.push_back(label);
    generated.push_back(std::move(g));
  }
  row.knn_common = common / metrics.n_samples;
  row.text_adherence = text_adherence(generated, intended, corpus.styles);
  row.frechet = frechet_to_store(generated_embeddings, store);
  return row;
}

std::vector<SweepRow> run_beta_sweep(const Checkpoint& ckpt, const Corpus& corpus, const EmbeddingStore& store,
                                     const MetricsConfig& metrics, std::span<const double> betas) {
  if (betas.empty()) throw ParameterError("the beta list is empty");
  std::vector<SweepRow> rows;
  for (double beta : betas) {
    if (!(beta >= 1.0)) throw ParameterError("beta must be >= 1");
    GuidanceSpec g = ckpt.config.sampler;
    g.mode = GuidanceMode::kDouble;
    g.beta = beta;
    rows.push_back(run_shuffled_eval(ckpt, corpus, store, metrics, g));
  }
  return rows;
}

Table sweep_table(std::span<const SweepRow> rows) {
  Table t;
  t.columns = {"beta", "samples", "text_adherence", "knn_common", "frechet"};
  for (const auto& r : rows)
    t.add_row({fmt(r.beta), std::to_string(r.n_samples), fmt(r.text_adherence), fmt(r.knn_common), fmt(r.frechet)});
  return t;
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoEncoder: return "no_encoder";
    case Variant::kSmallEncoder: return "small_encoder";
    case Variant::kNoMasking: return "no_masking";
  }
  return "unknown";
}

RunConfig variant_config(const RunConfig& base, Variant v) {
  RunConfig c = base;
  switch (v) {
    case Variant::kFull: break;
    case Variant::kNoEncoder: c.conditioner.use_encoder = false; break;
    case Variant::kSmallEncoder:
      c.conditioner.enc_dim = base.conditioner.enc_dim / 2;
      c.conditioner.enc_ff = base.conditioner.enc_ff / 2;
      c.conditioner.enc_heads = std::max(1, base.conditioner.enc_heads / 2);
      break;
    case Variant::kNoMasking: c.train.mask_excerpt = false; break;
  }
  return c;
}

std::vector<AblationRow> run_ablation(const RunConfig& config, const Corpus& corpus, const EmbeddingStore& store,
                                      const std::filesystem::path& work_dir, std::span<const Variant> variants,
                                      bool reuse) {
  if (variants.empty()) throw ParameterError("no ablation variants requested");
  MetricsConfig metrics = config.metrics;
  metrics.streams = {config.metrics.fixed_streams};
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    const RunConfig vc = variant_config(config, v);
    const auto path = work_dir / (std::string(variant_name(v)) + ".ckpt");
    Checkpoint ckpt;
    if (reuse && std::filesystem::exists(path)) {
      ckpt = load_checkpoint(path);
      if (dump_config(ckpt.config) != dump_config(vc))
        throw CompatibilityError("existing checkpoint " + path.string() + " was trained with another config");
    } else {
      TrainOptions opts;
      opts.checkpoint_out = path;
      opts.loss_log = work_dir / (std::string(variant_name(v)) + "_loss.csv");
      ckpt = run_train(vc, corpus, opts).checkpoint;
    }
    rows.push_back({v, run_eval_knn(ckpt, corpus, store, metrics).front()});
  }
  return rows;
}

Table ablation_table(std::span<const AblationRow> rows) {
  Table t;
  t.columns = {"variant", "n_streams", "samples", "knn_common", "knn_overfit", "frechet", "text_adherence",
               "bigram_kl"};
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    t.add_row({variant_name(r.variant), std::to_string(m.n_streams), std::to_string(m.n_samples), fmt(m.knn_common),
               fmt(m.knn_overfit), fmt(m.frechet), fmt(m.text_adherence), fmt(m.bigram_kl)});
  }
  return t;
}

void save_embedding(const InversionResult& result, const std::filesystem::path& path) {
  Container c;
  c.header["magic"] = kEmbeddingMagic;
  c.header["version"] = kEmbeddingVersion;
  c.header["loss_trace"] = result.loss_trace;
  TensorWriter w;
  w.add("embedding", result.embedding, DType::kF64);
  w.finish(c);
  write_container(path, std::move(c));
}

InversionResult load_embedding(const std::filesystem::path& path) {
  const Container c = read_container(path, kEmbeddingMagic, kEmbeddingVersion);
  InversionResult r;
  try {
    r.loss_trace = c.header.at("loss_trace").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw CorruptionError("malformed embedding header: " + std::string(e.what()));
  }
  r.embedding = TensorReader(c).read_any("embedding");
  return r;
}

double style_recovery(const Checkpoint& ckpt, const Corpus& corpus, const nn::Mat& embedding, int target_style,
                      int n, const GuidanceSpec& guidance, int length, std::uint64_t seed) {
  if (n < 1) throw ParameterError("need at least one sample");
  const StyleOracle oracle(corpus.styles);
  SamplingConditions cond;
  cond.text = embedding;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, {stream::kGenerate, static_cast<std::uint64_t>(i)});
    const TokenSequence g = sample_sequence(ckpt.system.params, cond, guidance, length, rng);
    if (oracle.classify(g.tokens) == target_style) ++hits;
  }
  return static_cast<double>(hits) / n;
}

}  // namespace stylegen
