#include "stylegen/knn_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "stylegen/container.hpp"
#include "stylegen/errors.hpp"

namespace stylegen {

namespace {

constexpr const char* kStoreMagic = "stylegen-store";
constexpr int kStoreVersion = 1;

void check_query(const EmbeddingStore& store, const Eigen::VectorXd& e) {
  if (e.size() != store.vectors.cols())
    throw ParameterError("query dimension " + std::to_string(e.size()) + " differs from store dimension " +
                         std::to_string(store.vectors.cols()));
}

// Symmetric eigendecomposition square root with the PSD tolerance policy.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8) throw NumericError(std::string(what) + " is not positive semidefinite (eigenvalue " + std::to_string(ev(i)) + ")");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<int> EmbeddingStore::song_ids() const {
  std::set<int> ids;
  for (const auto& r : records) ids.insert(r.song_id);
  return {ids.begin(), ids.end()};
}

EmbeddingStore build_store(std::span<const TaggedSongs> groups, int chunk_len, const FeatureExtractor& features) {
  if (chunk_len < features.window)
    throw ParameterError("chunk length " + std::to_string(chunk_len) + " is shorter than the feature window " +
                         std::to_string(features.window));
  EmbeddingStore store;
  store.chunk_len = chunk_len;
  store.window = features.window;
  store.hop = features.hop;
  store.projection_seed = features.projection.seed();
  store.projection_dim = features.projection.dim();

  std::vector<Eigen::VectorXd> rows;
  std::set<std::pair<int, int>> seen;
  for (const auto& group : groups) {
    for (const auto& song : group.songs) {
      const int n_chunks = static_cast<int>(song.tokens.size()) / chunk_len;
      for (int j = 0; j < n_chunks; ++j) {
        if (!seen.insert({song.song_id, j}).second) throw ParameterError("duplicate song id " + std::to_string(song.song_id));
        const auto chunk = std::span<const Token>(song.tokens).subspan(static_cast<std::size_t>(j * chunk_len),
                                                                       static_cast<std::size_t>(chunk_len));
        rows.push_back(features.embed(chunk));
        store.records.push_back({song.song_id, j, group.split});
      }
    }
  }
  if (rows.empty()) throw ParameterError("no songs long enough to fill a chunk");
  store.vectors.resize(static_cast<Eigen::Index>(rows.size()), features.projection.dim());
  for (std::size_t r = 0; r < rows.size(); ++r) store.vectors.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return store;
}

std::vector<int> nearest_songs(const EmbeddingStore& store, const Eigen::VectorXd& e, int k) {
  check_query(store, e);
  if (k < 1) throw ParameterError("K must be positive");
  const Eigen::VectorXd sims = store.vectors * e;
  std::map<int, double> best;
  for (std::size_t r = 0; r < store.records.size(); ++r) {
    const int id = store.records[r].song_id;
    const double s = sims(static_cast<Eigen::Index>(r));
    auto it = best.find(id);
    if (it == best.end()) {
      best.emplace(id, s);
    } else if (s > it->second) {
      it->second = s;
    }
  }
  if (static_cast<int>(best.size()) < k)
    throw ParameterError("store holds " + std::to_string(best.size()) + " songs, fewer than K = " + std::to_string(k));
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(best.size());
  for (const auto& [id, s] : best) ranked.emplace_back(s, id);
  std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(ranked[static_cast<std::size_t>(i)].second);
  return out;
}

double knn_common(const EmbeddingStore& store, const Eigen::VectorXd& e_c, const Eigen::VectorXd& e_g, int k) {
  auto a = nearest_songs(store, e_c, k);
  auto b = nearest_songs(store, e_g, k);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(k);
}

int knn_overfit(const EmbeddingStore& store, const Eigen::VectorXd& e_c, const Eigen::VectorXd& e_g) {
  if (store.size() == 0) throw ParameterError("empty store");
  check_query(store, e_c);
  check_query(store, e_g);
  const double best_store = (store.vectors * e_c).maxCoeff();
  const double generated = e_c.dot(e_g) / (e_c.norm() * e_g.norm());
  return generated >= best_store ? 1 : 0;
}

GaussianStats fit_gaussian(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw ParameterError("need at least two samples for a covariance");
  GaussianStats g;
  g.count = static_cast<std::size_t>(x.rows());
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d)
    throw ParameterError("Gaussian statistics differ in dimension");
  if ((a.cov - a.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 || (b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw NumericError("covariance is not symmetric");
  const Eigen::MatrixXd sqrt_a = psd_sqrt(a.cov, "first covariance");
  psd_sqrt(b.cov, "second covariance");
  // Tr((S_a S_b)^{1/2}) = Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}); the inner product is symmetric.
  const Eigen::MatrixXd inner = sqrt_a * b.cov * sqrt_a;
  const double tr_cross = psd_sqrt(inner, "covariance product").trace();
  const double dist = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_cross;
  return std::max(dist, 0.0);
}

double text_adherence(std::span<const TokenSequence> generated, std::span<const int> intended_styles,
                      std::span<const StyleParams> styles, double smoothing_eps) {
  if (generated.empty()) throw ParameterError("no generated sequences");
  if (generated.size() != intended_styles.size()) throw ParameterError("one intended style per sequence is required");
  const StyleOracle oracle(styles, smoothing_eps);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < generated.size(); ++i)
    if (oracle.classify(generated[i].tokens) == intended_styles[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

double bigram_kl(std::span<const Token> seq, const StyleParams& style, double smoothing_eps) {
  if (seq.size() < 2) throw ParameterError("bigram KL needs at least two tokens");
  const int v = style.vocab();
  for (Token t : seq)
    if (t < 0 || t >= v) throw ParameterError("token outside vocabulary");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(v, v);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) counts(seq[t], seq[t + 1]) += 1.0;
  const double total = static_cast<double>(seq.size() - 1);

  double kl = 0.0;
  for (int a = 0; a < v; ++a) {
    const double n_a = counts.row(a).sum();
    if (n_a == 0.0) continue;
    const double p_den = n_a + v * smoothing_eps;
    const double q_den = style.trans.row(a).sum() + v * smoothing_eps;
    double row_kl = 0.0;
    for (int b = 0; b < v; ++b) {
      const double p = (counts(a, b) + smoothing_eps) / p_den;
      const double q = (style.trans(a, b) + smoothing_eps) / q_den;
      if (p > 0.0) row_kl += p * std::log(p / q);
    }
    kl += (n_a / total) * row_kl;
  }
  return std::max(kl, 0.0);
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  Container c;
  c.header["magic"] = kStoreMagic;
  c.header["version"] = kStoreVersion;
  c.header["chunk_len"] = store.chunk_len;
  c.header["window"] = store.window;
  c.header["hop"] = store.hop;
  c.header["dim"] = store.vectors.cols();
  c.header["projection_seed"] = store.projection_seed;
  c.header["projection_dim"] = store.projection_dim;
  Json index = Json::array();
  for (const auto& r : store.records) index.push_back({r.song_id, r.chunk_id, r.split});
  c.header["records"] = std::move(index);
  TensorWriter w;
  w.add("vectors", store.vectors, DType::kF32);
  w.finish(c);
  write_container(path, std::move(c));
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  const Container c = read_container(path, kStoreMagic, kStoreVersion);
  EmbeddingStore store;
  try {
    store.chunk_len = c.header.at("chunk_len").get<int>();
    store.window = c.header.at("window").get<int>();
    store.hop = c.header.at("hop").get<int>();
    store.projection_seed = c.header.at("projection_seed").get<std::uint64_t>();
    store.projection_dim = c.header.at("projection_dim").get<int>();
    for (const auto& r : c.header.at("records"))
      store.records.push_back({r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<std::string>()});
    const auto dim = c.header.at("dim").get<Eigen::Index>();
    store.vectors = TensorReader(c).read("vectors", static_cast<Eigen::Index>(store.records.size()), dim);
  } catch (const Json::exception& e) {
    throw CorruptionError("malformed store header: " + std::string(e.what()));
  }
  return store;
}

}  // namespace stylegen
