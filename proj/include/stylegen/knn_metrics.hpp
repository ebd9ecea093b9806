#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stylegen/corpus.hpp"
#include "stylegen/features.hpp"

namespace stylegen {

struct StoreRecord {
  int song_id = 0;
  int chunk_id = 0;
  std::string split;
};

// Chunk-level embeddings {E_ij}. Row r of `vectors` belongs to records[r].
struct EmbeddingStore {
  std::vector<StoreRecord> records;
  Eigen::MatrixXd vectors;  // n x d_f, unit rows
  int chunk_len = 0;
  int window = 0;
  int hop = 0;
  std::uint64_t projection_seed = 0;
  int projection_dim = 0;

  std::size_t size() const { return records.size(); }
  std::vector<int> song_ids() const;  // distinct, ascending
};

struct TaggedSongs {
  std::span<const TokenSequence> songs;
  std::string split;
};

// Each song is cut into floor(L / chunk_len) non-overlapping chunks.
EmbeddingStore build_store(std::span<const TaggedSongs> groups, int chunk_len, const FeatureExtractor& features);

// K distinct song ids ranked by their best chunk cosine similarity to e;
// ties go to the lower song id.
std::vector<int> nearest_songs(const EmbeddingStore& store, const Eigen::VectorXd& e, int k);

// |N_K(e_c) ∩ N_K(e_g)| / K
double knn_common(const EmbeddingStore& store, const Eigen::VectorXd& e_c, const Eigen::VectorXd& e_g, int k);

// 1 when e_g is the most cosine-similar vector to e_c among all stored
// chunks plus e_g itself. An exact tie counts as e_g (flags copying).
int knn_overfit(const EmbeddingStore& store, const Eigen::VectorXd& e_c, const Eigen::VectorXd& e_g);

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;
};

// Sample mean and unbiased covariance of the rows of x (needs >= 2 rows).
GaussianStats fit_gaussian(const Eigen::MatrixXd& x);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Fraction of sequences whose oracle-most-likely style equals the intended
// one.
double text_adherence(std::span<const TokenSequence> generated, std::span<const int> intended_styles,
                      std::span<const StyleParams> styles, double smoothing_eps = 1e-9);

// Empirical next-token distributions of seq, eps-smoothed, compared by KL to
// the eps-smoothed transition rows of the style and averaged with weights
// given by how often each current token occurs.
double bigram_kl(std::span<const Token> seq, const StyleParams& style, double smoothing_eps = 1e-9);

void save_store(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_store(const std::filesystem::path& path);

}  // namespace stylegen
