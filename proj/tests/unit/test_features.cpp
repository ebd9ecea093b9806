#include <doctest.h>

#include <set>

#include "stylegen/config.hpp"
#include "stylegen/corpus.hpp"
#include "stylegen/errors.hpp"
#include "stylegen/features.hpp"

using namespace stylegen;

namespace {

// Direct histogram construction for one window.
Eigen::VectorXd window_oracle(std::span<const Token> w, const FrozenProjection& p) {
  const int v = p.vocab();
  const int b = p.buckets();
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(v + b);
  for (Token t : w) hist(t) += 1.0 / static_cast<double>(w.size());
  for (std::size_t i = 0; i + 1 < w.size(); ++i) hist(v + (w[i] * v + w[i + 1]) % b) += 1.0 / static_cast<double>(w.size() - 1);
  Eigen::VectorXd f = p.matrix().transpose() * hist;
  return f / f.norm();
}

}  // namespace

TEST_CASE("frame count formula") {
  CHECK(frame_count(16, 8, 4) == 3);
  CHECK(frame_count(4, 8, 4) == 0);
  for (int w : {4, 8, 16})
    for (int h = 1; h <= w; ++h)
      for (int len = w; len <= 4 * 72; ++len) REQUIRE(frame_count(len, w, h) == (len - w) / h + 1);
}

TEST_CASE("frames match a direct histogram projection") {
  const FrozenProjection p(16, 8, 6, 3);
  Rng rng = make_rng(5);
  const auto song = sample_song(sample_style_params(1, 0, 16, 0.5, 0.3), 40, rng);
  const auto fs = extract_frames(song.tokens, p, 8, 4);
  REQUIRE(fs.size() == frame_count(40, 8, 4));
  for (int i = 0; i < fs.size(); ++i) {
    const auto w = std::span<const Token>(song.tokens).subspan(static_cast<std::size_t>(i * 4), 8);
    const Eigen::VectorXd expected = window_oracle(w, p);
    CHECK((fs.frames.row(i).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(fs.frames.row(i).norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("frame extraction edge cases") {
  const FrozenProjection p(8, 64, 32, 99);
  const std::vector<Token> constant(16, 3);
  const auto fs = extract_frames(constant, p, 8, 4);
  CHECK(fs.size() == 3);
  CHECK(fs.frames.row(0) == fs.frames.row(1));
  CHECK(fs.frames.row(1) == fs.frames.row(2));
  const std::vector<Token> short_seq(4, 1);
  CHECK_THROWS_AS(extract_frames(short_seq, p, 8, 4), TooShortError);
  CHECK_THROWS_AS(sequence_embedding(short_seq, p, 8, 4), TooShortError);
}

TEST_CASE("projection is a function of its seed") {
  const FrozenProjection a(64, 64, 32, 99), b(64, 64, 32, 99), c(64, 64, 32, 100);
  CHECK(a.matrix() == b.matrix());
  CHECK(a.matrix() != c.matrix());
  CHECK(a.matrix().rows() == 128);
}

TEST_CASE("embedding normalization, determinism and order sensitivity") {
  const FrozenProjection p(64, 64, 32, 99);
  const Corpus c = build_corpus(CorpusConfig{});
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto& t = c.train[i].tokens;
    const auto e = sequence_embedding(t, p, 8, 4);
    REQUIRE(std::abs(e.norm() - 1.0) < 1e-6);
  }
  const auto& song = c.train[0].tokens;
  const auto e1 = sequence_embedding(song, p, 8, 4);
  const auto e2 = sequence_embedding(song, p, 8, 4);
  CHECK(e1 == e2);
  CHECK(e1.dot(e2) == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<Token> fwd{0, 1, 2, 3, 4, 5, 6, 7, 9, 11, 2, 5};
  const std::vector<Token> rev(fwd.rbegin(), fwd.rend());
  CHECK(sequence_embedding(fwd, p, 8, 4) != sequence_embedding(rev, p, 8, 4));
}

TEST_CASE("same-style songs embed closer than different-style songs") {
  const FeatureConfig fc;
  const FrozenProjection p(64, fc.buckets, fc.dim, fc.seed);
  const Corpus c = build_corpus(CorpusConfig{});
  const int per_style = c.config.n_train;
  double same = 0.0, diff = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int s = i % c.config.n_styles;
    const auto& a = c.train[static_cast<std::size_t>(s * per_style + (i % per_style))].tokens;
    const auto& b = c.train[static_cast<std::size_t>(s * per_style + ((i + 1) % per_style))].tokens;
    const int s2 = (s + 1 + i % (c.config.n_styles - 1)) % c.config.n_styles;
    const auto& d = c.train[static_cast<std::size_t>(s2 * per_style + (i % per_style))].tokens;
    const auto ea = sequence_embedding(a, p, 8, 4);
    same += ea.dot(sequence_embedding(b, p, 8, 4));
    diff += ea.dot(sequence_embedding(d, p, 8, 4));
  }
  same /= 100;
  diff /= 100;
  MESSAGE("same-style cosine " << same << ", cross-style cosine " << diff);
  // Calibrated on the default corpus: 0.75 vs 0.60.
  CHECK(same >= 0.7);
  CHECK(same - diff >= 0.12);
}

TEST_CASE("degenerate embedding is reported") {
  // Projection with all-zero rows maps every histogram to zero.
  const FrozenProjection p(4, 2, 0, Eigen::MatrixXd::Zero(6, 3));
  const std::vector<Token> seq{0, 1, 2, 3, 0, 1, 2, 3};
  CHECK_THROWS(sequence_embedding(seq, p, 8, 4));
}

TEST_CASE("default bigram buckets depend on both tokens") {
  const FeatureConfig fc;
  const FrozenProjection p(64, fc.buckets, fc.dim, fc.seed);
  for (Token b = 0; b < 64; ++b) {
    std::set<int> seen;
    for (Token a = 0; a < 64; ++a) seen.insert(p.bucket(a, b));
    CHECK(seen.size() == 64);
  }
}
