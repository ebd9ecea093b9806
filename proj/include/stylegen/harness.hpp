#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stylegen/checkpoint.hpp"
#include "stylegen/config.hpp"
#include "stylegen/corpus.hpp"
#include "stylegen/inversion.hpp"
#include "stylegen/knn_metrics.hpp"
#include "stylegen/report.hpp"

namespace stylegen {

// Loads the corpus at path when it exists (and checks it against the
// corpus.* keys), otherwise throws IoError with the command that creates it.
Corpus open_corpus(const RunConfig& config, const std::filesystem::path& path);

// Store over the valid and test splits.
EmbeddingStore build_eval_store(const Corpus& corpus, const RunConfig& config);

// Throws CompatibilityError when the store was built with other features.
void check_store_compatible(const EmbeddingStore& store, const FeatureExtractor& features);

// Fresh system with codebooks seeded by k-means on encoded training excerpts.
Checkpoint initial_checkpoint(const RunConfig& config, const Corpus& corpus);

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_out;
  std::optional<std::filesystem::path> loss_log;  // csv: step,loss
  std::optional<std::filesystem::path> resume;    // continue from this checkpoint up to train.steps
  std::function<void(std::int64_t step, double loss)> progress;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // one per step run here
};

// Runs training steps until train.steps. Step s draws its batch from
// make_rng(seed, {kTrainStep, s}), so a resumed run matches an uninterrupted
// one bit for bit.
TrainResult run_train(const RunConfig& config, const Corpus& corpus, const TrainOptions& options = {});

struct KnnRow {
  int n_streams = 0;
  int n_samples = 0;
  double knn_common = 0.0;
  double knn_overfit = 0.0;
  double frechet = 0.0;
  double text_adherence = 0.0;
  double bigram_kl = 0.0;
};

// Test excerpt i comes from make_rng(metrics.seed, {kEval, i}); its
// generation draws from make_rng(metrics.seed, {kGenerate, i}) at every
// depth. Style-only conditioning with simple guidance at sampler.alpha.
// identity replaces each generation by its conditioning excerpt.
std::vector<KnnRow> run_eval_knn(const Checkpoint& ckpt, const Corpus& corpus, const EmbeddingStore& store,
                                 const MetricsConfig& metrics, bool identity = false);
Table knn_table(std::span<const KnnRow> rows);

struct SweepRow {
  double beta = 0.0;
  int n_samples = 0;
  double text_adherence = 0.0;
  double knn_common = 0.0;
  double frechet = 0.0;
};

// Style excerpt from style A, text label B != A, both conditions present.
SweepRow run_shuffled_eval(const Checkpoint& ckpt, const Corpus& corpus, const EmbeddingStore& store,
                           const MetricsConfig& metrics, const GuidanceSpec& guidance);
// Double guidance at sampler.alpha for each beta.
std::vector<SweepRow> run_beta_sweep(const Checkpoint& ckpt, const Corpus& corpus, const EmbeddingStore& store,
                                     const MetricsConfig& metrics, std::span<const double> betas);
Table sweep_table(std::span<const SweepRow> rows);

enum class Variant { kFull, kNoEncoder, kSmallEncoder, kNoMasking };
const char* variant_name(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::kFull, Variant::kNoEncoder, Variant::kSmallEncoder,
                                           Variant::kNoMasking};
RunConfig variant_config(const RunConfig& base, Variant v);

struct AblationRow {
  Variant variant = Variant::kFull;
  KnnRow metrics;
};

// Trains each variant with the base seed (reusing <work_dir>/<variant>.ckpt
// when present and reuse is set) and evaluates at metrics.fixed_streams.
std::vector<AblationRow> run_ablation(const RunConfig& config, const Corpus& corpus, const EmbeddingStore& store,
                                      const std::filesystem::path& work_dir,
                                      std::span<const Variant> variants = kAllVariants, bool reuse = true);
Table ablation_table(std::span<const AblationRow> rows);

void save_embedding(const InversionResult& result, const std::filesystem::path& path);
InversionResult load_embedding(const std::filesystem::path& path);

// Fraction of n sequences, conditioned on the learned text embedding alone
// under simple guidance, that the oracle assigns to target_style.
double style_recovery(const Checkpoint& ckpt, const Corpus& corpus, const nn::Mat& embedding, int target_style,
                      int n, const GuidanceSpec& guidance, int length, std::uint64_t seed);

}  // namespace stylegen
