#include "stylegen/corpus.hpp"

#include <cmath>
#include <string>

#include "stylegen/container.hpp"
#include "stylegen/errors.hpp"

namespace stylegen {

namespace {

constexpr const char* kCorpusMagic = "stylegen-corpus";
constexpr int kCorpusVersion = 1;

Eigen::VectorXd sample_dirichlet(Rng& rng, int n, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd out(n);
  double sum = 0.0;
  do {
    for (int i = 0; i < n; ++i) out(i) = gamma(rng);
    sum = out.sum();
  } while (!(sum > 0.0));
  return out / sum;
}

template <typename Vec>
int sample_categorical(const Vec& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) > 0.0) last_positive = static_cast<int>(i);
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

Eigen::VectorXd smoothed_log(const Eigen::VectorXd& p, double eps) {
  const double denom = p.sum() + eps * static_cast<double>(p.size());
  return ((p.array() + eps) / denom).log().matrix();
}

void check_tokens(std::span<const Token> tokens, int vocab) {
  for (Token t : tokens)
    if (t < 0 || t >= vocab) throw ParameterError("token " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
}

}  // namespace

const TokenSequence& Corpus::song(int song_id) const {
  for (const auto* split : {&train, &valid, &test})
    for (const auto& s : *split)
      if (s.song_id == song_id) return s;
  throw ParameterError("no song with id " + std::to_string(song_id));
}

void validate_style(const StyleParams& style, double tol) {
  const int v = style.vocab();
  if (v < 2 || style.trans.rows() != v || style.trans.cols() != v)
    throw ParameterError("style " + std::to_string(style.style_id) + " has inconsistent shapes");
  if ((style.pi.array() < 0.0).any() || std::abs(style.pi.sum() - 1.0) > tol)
    throw ParameterError("style " + std::to_string(style.style_id) + ": pi is not a distribution");
  if ((style.trans.array() < 0.0).any())
    throw ParameterError("style " + std::to_string(style.style_id) + ": negative transition entry");
  const double dev = (style.trans.rowwise().sum().array() - 1.0).abs().maxCoeff();
  if (dev > tol) throw ParameterError("style " + std::to_string(style.style_id) + ": row sums deviate by " + std::to_string(dev));
}

StyleParams sample_style_params(std::uint64_t seed, int style_id, int vocab, double alpha_pi,
                                double alpha_trans) {
  if (vocab < 2) throw ParameterError("vocabulary size must be at least 2");
  if (!(alpha_pi > 0.0) || !(alpha_trans > 0.0)) throw ParameterError("Dirichlet concentrations must be positive");
  if (style_id < 0) throw ParameterError("style id must be non-negative");

  Rng rng = make_rng(seed, {stream::kStyle, static_cast<std::uint64_t>(style_id)});
  StyleParams s;
  s.style_id = style_id;
  s.pi = sample_dirichlet(rng, vocab, alpha_pi);
  s.trans.resize(vocab, vocab);
  for (int r = 0; r < vocab; ++r) s.trans.row(r) = sample_dirichlet(rng, vocab, alpha_trans).transpose();
  return s;
}

TokenSequence sample_song(const StyleParams& style, int length, Rng& rng, int song_id) {
  if (length < 2) throw ParameterError("song length must be at least 2, got " + std::to_string(length));
  TokenSequence seq;
  seq.style_id = style.style_id;
  seq.song_id = song_id;
  seq.tokens.resize(static_cast<std::size_t>(length));
  seq.tokens[0] = sample_categorical(style.pi, rng);
  for (int t = 1; t < length; ++t)
    seq.tokens[static_cast<std::size_t>(t)] = sample_categorical(style.trans.row(seq.tokens[static_cast<std::size_t>(t - 1)]), rng);
  return seq;
}

Corpus build_corpus(const CorpusConfig& config) {
  if (config.n_styles <= 0) throw ParameterError("corpus needs at least one style");
  if (config.n_train < 0 || config.n_valid < 0 || config.n_test < 0 ||
      config.n_train + config.n_valid + config.n_test == 0)
    throw ParameterError("corpus needs at least one song per style");
  if (config.vocab > 65535) throw ParameterError("vocabulary must fit 16-bit tokens");
  if (config.song_len < 2) throw ParameterError("song length must be at least 2");

  Corpus corpus;
  corpus.config = config;
  for (int s = 0; s < config.n_styles; ++s)
    corpus.styles.push_back(sample_style_params(config.seed, s, config.vocab, config.alpha_pi, config.alpha_trans));

  int next_id = 0;
  auto fill = [&](std::vector<TokenSequence>& split, int per_style) {
    for (int s = 0; s < config.n_styles; ++s) {
      for (int i = 0; i < per_style; ++i) {
        Rng rng = make_rng(config.seed, {stream::kSong, static_cast<std::uint64_t>(next_id)});
        split.push_back(sample_song(corpus.styles[static_cast<std::size_t>(s)], config.song_len, rng, next_id));
        ++next_id;
      }
    }
  };
  fill(corpus.train, config.n_train);
  fill(corpus.valid, config.n_valid);
  fill(corpus.test, config.n_test);
  return corpus;
}

double style_log_likelihood(std::span<const Token> tokens, const StyleParams& style, double smoothing_eps) {
  StyleOracle oracle(std::span<const StyleParams>(&style, 1), smoothing_eps);
  return oracle.log_likelihood(tokens, 0);
}

StyleOracle::StyleOracle(std::span<const StyleParams> styles, double smoothing_eps) {
  if (smoothing_eps < 0.0) throw ParameterError("smoothing eps must be non-negative");
  for (const auto& s : styles) {
    log_pi_.push_back(smoothed_log(s.pi, smoothing_eps));
    Eigen::MatrixXd lt(s.trans.rows(), s.trans.cols());
    for (Eigen::Index r = 0; r < s.trans.rows(); ++r)
      lt.row(r) = smoothed_log(s.trans.row(r).transpose(), smoothing_eps).transpose();
    log_trans_.push_back(std::move(lt));
  }
}

double StyleOracle::log_likelihood(std::span<const Token> tokens, int style_index) const {
  const auto& lp = log_pi_.at(static_cast<std::size_t>(style_index));
  const auto& lt = log_trans_[static_cast<std::size_t>(style_index)];
  check_tokens(tokens, static_cast<int>(lp.size()));
  if (tokens.empty()) return 0.0;
  double ll = lp(tokens[0]);
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) ll += lt(tokens[t], tokens[t + 1]);
  return ll;
}

int StyleOracle::classify(std::span<const Token> tokens) const {
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < n_styles(); ++s) {
    const double ll = log_likelihood(tokens, s);
    if (ll > best_ll) {
      best_ll = ll;
      best = s;
    }
  }
  return best;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  const auto& cfg = corpus.config;
  Container c;
  c.header["magic"] = kCorpusMagic;
  c.header["version"] = kCorpusVersion;
  c.header["vocab"] = cfg.vocab;
  c.header["n_styles"] = cfg.n_styles;
  c.header["seed"] = cfg.seed;
  c.header["song_len"] = cfg.song_len;
  c.header["alpha_pi"] = cfg.alpha_pi;
  c.header["alpha_trans"] = cfg.alpha_trans;
  c.header["per_style"] = {{"train", cfg.n_train}, {"valid", cfg.n_valid}, {"test", cfg.n_test}};
  c.header["splits"] = {{"train", corpus.train.size()}, {"valid", corpus.valid.size()}, {"test", corpus.test.size()}};

  Json styles = Json::array();
  for (const auto& s : corpus.styles) {
    Json trans = Json::array();
    for (Eigen::Index r = 0; r < s.trans.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index k = 0; k < s.trans.cols(); ++k) row.push_back(s.trans(r, k));
      trans.push_back(std::move(row));
    }
    Json pi = Json::array();
    for (Eigen::Index k = 0; k < s.pi.size(); ++k) pi.push_back(s.pi(k));
    styles.push_back({{"style_id", s.style_id}, {"pi", std::move(pi)}, {"trans", std::move(trans)}});
  }
  c.header["styles"] = std::move(styles);

  Json songs = Json::array();
  for (const auto* split : {&corpus.train, &corpus.valid, &corpus.test}) {
    for (const auto& seq : *split) {
      songs.push_back({seq.song_id, seq.style_id});
      for (Token t : seq.tokens) {
        const auto v = static_cast<std::uint16_t>(t);
        c.payload.push_back(static_cast<std::byte>(v & 0xff));
        c.payload.push_back(static_cast<std::byte>(v >> 8));
      }
    }
  }
  c.header["songs"] = std::move(songs);
  write_container(path, std::move(c));
}

Corpus load_corpus(const std::filesystem::path& path) {
  const Container c = read_container(path, kCorpusMagic, kCorpusVersion);
  Corpus corpus;
  try {
    auto& cfg = corpus.config;
    cfg.vocab = c.header.at("vocab").get<int>();
    cfg.n_styles = c.header.at("n_styles").get<int>();
    cfg.seed = c.header.at("seed").get<std::uint64_t>();
    cfg.song_len = c.header.at("song_len").get<int>();
    cfg.alpha_pi = c.header.at("alpha_pi").get<double>();
    cfg.alpha_trans = c.header.at("alpha_trans").get<double>();
    cfg.n_train = c.header.at("per_style").at("train").get<int>();
    cfg.n_valid = c.header.at("per_style").at("valid").get<int>();
    cfg.n_test = c.header.at("per_style").at("test").get<int>();

    for (const auto& js : c.header.at("styles")) {
      StyleParams s;
      s.style_id = js.at("style_id").get<int>();
      const auto& pi = js.at("pi");
      s.pi.resize(static_cast<Eigen::Index>(pi.size()));
      for (std::size_t k = 0; k < pi.size(); ++k) s.pi(static_cast<Eigen::Index>(k)) = pi[k].get<double>();
      const auto& tr = js.at("trans");
      s.trans.resize(static_cast<Eigen::Index>(tr.size()), s.pi.size());
      for (std::size_t r = 0; r < tr.size(); ++r) {
        if (tr[r].size() != pi.size()) throw ShapeError("ragged transition matrix in corpus header");
        for (std::size_t k = 0; k < tr[r].size(); ++k)
          s.trans(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = tr[r][k].get<double>();
      }
      validate_style(s);
      corpus.styles.push_back(std::move(s));
    }

    const auto& songs = c.header.at("songs");
    const std::size_t n_train = c.header.at("splits").at("train").get<std::size_t>();
    const std::size_t n_valid = c.header.at("splits").at("valid").get<std::size_t>();
    const std::size_t n_test = c.header.at("splits").at("test").get<std::size_t>();
    if (songs.size() != n_train + n_valid + n_test) throw CorruptionError("song table disagrees with split sizes");
    const std::size_t len = static_cast<std::size_t>(cfg.song_len);
    if (c.payload.size() != songs.size() * len * 2) throw TruncationError("token payload size does not match header");

    std::size_t offset = 0;
    for (std::size_t i = 0; i < songs.size(); ++i) {
      TokenSequence seq;
      seq.song_id = songs[i].at(0).get<int>();
      seq.style_id = songs[i].at(1).get<int>();
      if (seq.style_id < 0 || seq.style_id >= cfg.n_styles) throw CorruptionError("song style id out of range");
      seq.tokens.resize(len);
      for (std::size_t t = 0; t < len; ++t) {
        const auto lo = static_cast<unsigned>(c.payload[offset]);
        const auto hi = static_cast<unsigned>(c.payload[offset + 1]);
        offset += 2;
        seq.tokens[t] = static_cast<Token>(lo | (hi << 8));
        if (seq.tokens[t] >= cfg.vocab) throw CorruptionError("token outside vocabulary in corpus payload");
      }
      auto& split = i < n_train ? corpus.train : (i < n_train + n_valid ? corpus.valid : corpus.test);
      split.push_back(std::move(seq));
    }
  } catch (const Json::exception& e) {
    throw CorruptionError("malformed corpus header: " + std::string(e.what()));
  }
  return corpus;
}

}  // namespace stylegen
