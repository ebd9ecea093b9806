#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stylegen/rng.hpp"

namespace stylegen {

using Token = std::int32_t;

// Hidden generator of one synthetic style: initial distribution and a
// row-stochastic next-token matrix.
struct StyleParams {
  int style_id = 0;
  Eigen::VectorXd pi;
  Eigen::MatrixXd trans;

  int vocab() const { return static_cast<int>(pi.size()); }
};

struct TokenSequence {
  std::vector<Token> tokens;
  int style_id = 0;
  int song_id = 0;
};

struct CorpusConfig {
  int n_styles = 20;
  int n_train = 50;  // songs per style
  int n_valid = 10;
  int n_test = 10;
  int song_len = 256;
  int vocab = 64;
  double alpha_pi = 0.5;
  double alpha_trans = 0.1;
  std::uint64_t seed = 2024;
};

struct Corpus {
  CorpusConfig config;
  std::vector<StyleParams> styles;
  std::vector<TokenSequence> train;
  std::vector<TokenSequence> valid;
  std::vector<TokenSequence> test;

  const TokenSequence& song(int song_id) const;
  std::size_t size() const { return train.size() + valid.size() + test.size(); }
};

// Throws ParameterError when an invariant of StyleParams is broken.
void validate_style(const StyleParams& style, double tol = 1e-9);

// pi ~ Dirichlet(alpha_pi), each row of trans ~ Dirichlet(alpha_trans).
// Fully determined by (seed, style_id).
StyleParams sample_style_params(std::uint64_t seed, int style_id, int vocab, double alpha_pi,
                                double alpha_trans);

TokenSequence sample_song(const StyleParams& style, int length, Rng& rng, int song_id = 0);

// Songs are numbered train, valid, test; style-major inside each split.
// Song i is sampled from make_rng(seed, {kSong, i}).
Corpus build_corpus(const CorpusConfig& config);

// log pi'[t0] + sum log trans'[t_k][t_k+1], where pi' and the rows of
// trans' have eps added to every entry and are renormalized.
double style_log_likelihood(std::span<const Token> tokens, const StyleParams& style,
                            double smoothing_eps = 1e-9);

// Precomputed smoothed log tables for scoring many sequences.
class StyleOracle {
 public:
  explicit StyleOracle(std::span<const StyleParams> styles, double smoothing_eps = 1e-9);

  double log_likelihood(std::span<const Token> tokens, int style_index) const;
  // Argmax over styles; ties go to the lowest index.
  int classify(std::span<const Token> tokens) const;
  int n_styles() const { return static_cast<int>(log_pi_.size()); }

 private:
  std::vector<Eigen::VectorXd> log_pi_;
  std::vector<Eigen::MatrixXd> log_trans_;
};

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace stylegen
