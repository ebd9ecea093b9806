#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "stylegen/conditioner.hpp"
#include "stylegen/errors.hpp"
#include "stylegen/harness.hpp"
#include "test_util.hpp"

using namespace stylegen;

TEST_CASE("prefix length of a 36-token excerpt") {
  CHECK(frame_count(36, 8, 4) == 8);
  CHECK(prefix_length(8, 3) == 3);
  StyleSystem s = fresh_system(RunConfig{});
  std::vector<Token> excerpt(36);
  for (int i = 0; i < 36; ++i) excerpt[static_cast<std::size_t>(i)] = (i * 7) % 64;
  const auto p = encode_style(excerpt, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, EncodeOptions{});
  CHECK(p.vectors.rows() == 3);
  CHECK(p.vectors.cols() == 64);
  CHECK(p.n_streams_used == 2);
}

TEST_CASE("prefix length formula over excerpt lengths and factors") {
  for (int len = 24; len <= 72; ++len)
    for (int ds : {1, 2, 3, 5}) {
      const int frames = frame_count(len, 8, 4);
      REQUIRE(prefix_length(frames, ds) == (frames + ds - 1) / ds);
      REQUIRE(pool_groups(Eigen::MatrixXd::Ones(frames, 2), ds).rows() == prefix_length(frames, ds));
    }
}

TEST_CASE("pooling averages groups and the short tail") {
  Eigen::MatrixXd x(5, 1);
  x << 1, 2, 3, 4, 6;
  const auto p = pool_groups(x, 3);
  REQUIRE(p.rows() == 2);
  CHECK(p(0, 0) == doctest::Approx(2.0));
  CHECK(p(1, 0) == doctest::Approx(5.0));
  Eigen::MatrixXd d(2, 1);
  d << 3, 2;
  const auto back = pool_groups_backward(d, 5, 3);
  CHECK(back(0, 0) == doctest::Approx(1.0));
  CHECK(back(2, 0) == doctest::Approx(1.0));
  CHECK(back(3, 0) == doctest::Approx(1.0));
  CHECK(back(4, 0) == doctest::Approx(1.0));
}

TEST_CASE("excerpt sampling range, determinism and length frequencies") {
  Rng rng = make_rng(3);
  std::vector<int> counts(73, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Span s = sample_excerpt_span(256, 24, 72, rng);
    REQUIRE(s.length >= 24);
    REQUIRE(s.length <= 72);
    REQUIRE(s.start >= 0);
    REQUIRE(s.start + s.length <= 256);
    ++counts[static_cast<std::size_t>(s.length)];
  }
  const double p = 1.0 / 49;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (int len = 24; len <= 72; ++len) CHECK(std::abs(counts[static_cast<std::size_t>(len)] - n * p) <= 3 * sigma + 1e-9);

  std::vector<Token> song(256);
  for (int i = 0; i < 256; ++i) song[static_cast<std::size_t>(i)] = i % 64;
  Rng a = make_rng(4), b = make_rng(4);
  const auto ea = sample_excerpt(song, 24, 72, a);
  const auto eb = sample_excerpt(song, 24, 72, b);
  CHECK(ea.first == eb.first);
  CHECK(ea.second == eb.second);
  CHECK(ea.first.size() == static_cast<std::size_t>(ea.second.length));
  CHECK(ea.first.front() == song[static_cast<std::size_t>(ea.second.start)]);

  const std::vector<Token> short_song(50, 1);
  Rng c = make_rng(5);
  CHECK_THROWS_AS(sample_excerpt(short_song, 24, 72, c), ParameterError);
}

TEST_CASE("stream count is validated and codes nest across depths") {
  const StyleSystem s = test::tiny_system();
  const std::vector<Token> ex{1, 2, 3, 4, 5, 6, 7, 0, 1, 3, 5, 7, 2, 4, 6, 0};
  CHECK_THROWS_AS(encode_style(ex, s.params.style, s.features, s.codebooks, 0, s.conditioner_config, EncodeOptions{}),
                  ParameterError);
  CHECK_THROWS_AS(encode_style(ex, s.params.style, s.features, s.codebooks, 4, s.conditioner_config, EncodeOptions{}),
                  ParameterError);
  const std::vector<Token> too_short{1, 2, 3};
  CHECK_THROWS_AS(
      encode_style(too_short, s.params.style, s.features, s.codebooks, 1, s.conditioner_config, EncodeOptions{}),
      TooShortError);
  StyleCache c2, c3;
  encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, EncodeOptions{}, &c2);
  encode_style(ex, s.params.style, s.features, s.codebooks, 3, s.conditioner_config, EncodeOptions{}, &c3);
  CHECK(c3.quant.codes.codes.leftCols(2) == c2.quant.codes.codes);
}

TEST_CASE("without the encoder the prefix is two linear maps around the quantizer") {
  RunConfig cfg = test::tiny_config();
  cfg.conditioner.use_encoder = false;
  StyleSystem s = fresh_system(cfg);
  test::spread_weights(s.params, 3);
  std::mt19937_64 g(5);
  for (auto& b : s.codebooks.books) b = test::gaussian(b.rows(), b.cols(), g);
  const std::vector<Token> ex{1, 2, 3, 4, 5, 6, 7, 0, 1, 3, 5, 7, 2, 4, 6, 0};
  const auto prefix = encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, EncodeOptions{});

  const Eigen::MatrixXd frames = s.features.frames(ex).frames;
  const Eigen::MatrixXd mapped = (frames * s.params.style.in_proj.w).rowwise() + s.params.style.in_proj.b.row(0);
  const Eigen::MatrixXd q = quantize(mapped, s.codebooks, 2).quantized;
  const Eigen::MatrixXd expect =
      (pool_groups(q, cfg.conditioner.downsample) * s.params.style.out_proj.w).rowwise() + s.params.style.out_proj.b.row(0);
  CHECK((prefix.vectors - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(param_names(s.params).size() < param_names(test::tiny_system().params).size());
}

TEST_CASE("straight-through gradients of the conditioner match finite differences with codes fixed") {
  StyleSystem s = test::tiny_system(7);
  const std::vector<Token> ex{1, 2, 3, 4, 5, 6, 7, 0, 1, 3, 5, 7, 2, 4, 6, 0, 3, 3, 1, 2};
  std::mt19937_64 g(8);

  EncodeOptions train;
  train.mode = EncodeMode::kTrain;
  StyleCache base;
  encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, train, &base);
  FixedQuantization fixed{base.quantized - base.encoded, base.quantized};
  train.fixed = &fixed;
  const Eigen::MatrixXd weights = test::gaussian(prefix_length(base.frames.rows(), 3), 8, g);

  auto loss = [&]() {
    StyleCache c;
    const auto p = encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, train, &c);
    return (p.vectors.array() * weights.array()).sum() + c.commitment_loss;
  };
  StyleCache c;
  encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, train, &c);
  ModelParams grad = zeros_like(s.params);
  encode_style_backward(s.params.style, c, weights, s.conditioner_config, grad.style);

  std::vector<Eigen::MatrixXd*> params;
  std::vector<const Eigen::MatrixXd*> analytic;
  std::vector<std::string> names;
  ConditionerParams::visit(s.params.style, "style", [&](const std::string& n, Eigen::MatrixXd& m) {
    params.push_back(&m);
    names.push_back(n);
  });
  ConditionerParams::visit(static_cast<const ConditionerParams&>(grad.style), "style",
                           [&](const std::string&, const Eigen::MatrixXd& m) { analytic.push_back(&m); });
  const auto r = test::check_gradients(loss, params, analytic, names);
  MESSAGE("conditioner max relative error " << r.max_rel << " at " << r.worst);
  CHECK(r.max_rel < 1e-4);
  // The encoder weights receive a nonzero gradient.
  CHECK(grad.style.blocks[0].q.w.norm() > 0.0);
}

TEST_CASE("pooled quantization error does not grow with depth on seeded codebooks") {
  RunConfig cfg = test::tiny_config();
  const Corpus corpus = build_corpus(cfg.corpus);
  const Checkpoint ckpt = initial_checkpoint(cfg, corpus);
  const StyleSystem& s = ckpt.system;
  std::vector<double> err(static_cast<std::size_t>(cfg.rvq.n_codebooks), 0.0);
  Rng rng = make_rng(9);
  for (int i = 0; i < 50; ++i) {
    const auto& song = corpus.train[static_cast<std::size_t>(i % corpus.train.size())].tokens;
    const auto [ex, span] = sample_excerpt(song, 12, 24, rng);
    for (int n = 1; n <= cfg.rvq.n_codebooks; ++n) {
      StyleCache c;
      encode_style(ex, s.params.style, s.features, s.codebooks, n, s.conditioner_config, EncodeOptions{}, &c);
      err[static_cast<std::size_t>(n - 1)] += (c.pooled - pool_groups(c.encoded, 3)).squaredNorm();
    }
  }
  for (std::size_t n = 1; n < err.size(); ++n) CHECK(err[n] <= err[n - 1] + 1e-9);
}
