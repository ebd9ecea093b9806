#include "stylegen/checkpoint.hpp"

#include "stylegen/container.hpp"
#include "stylegen/errors.hpp"

namespace stylegen {

namespace {

constexpr const char* kMagic = "stylegen-checkpoint";
constexpr int kVersion = 1;

Container to_container(const Checkpoint& ckpt) {
  const StyleSystem& s = ckpt.system;
  Container c;
  c.header["magic"] = kMagic;
  c.header["version"] = kVersion;
  c.header["step"] = ckpt.step;
  c.header["adam_t"] = ckpt.adam.t;
  c.header["config"] = dump_config(ckpt.config);
  c.header["projection"] = {{"vocab", s.features.projection.vocab()},
                            {"buckets", s.features.projection.buckets()},
                            {"seed", s.features.projection.seed()}};

  TensorWriter w;
  const auto names = param_names(s.params);
  const auto values = param_list(s.params);
  for (std::size_t i = 0; i < names.size(); ++i) w.add("param/" + names[i], *values[i], DType::kF64);
  for (std::size_t i = 0; i < names.size(); ++i) {
    w.add("adam_m/" + names[i], ckpt.adam.m[i], DType::kF64);
    w.add("adam_v/" + names[i], ckpt.adam.v[i], DType::kF64);
  }
  for (int k = 0; k < s.codebooks.n_codebooks; ++k) {
    w.add("rvq/book" + std::to_string(k), s.codebooks.books[static_cast<std::size_t>(k)], DType::kF64);
    w.add("rvq/ema_sum" + std::to_string(k), s.codebooks.ema_sum[static_cast<std::size_t>(k)], DType::kF64);
  }
  w.add("rvq/ema_size", s.codebooks.ema_size, DType::kF64);
  w.add("projection", s.features.projection.matrix(), DType::kF64);
  w.finish(c);
  return c;
}

}  // namespace

FeatureExtractor make_features(const FeatureConfig& config, int vocab) {
  FeatureExtractor f;
  f.projection = FrozenProjection(vocab, config.buckets, config.dim, config.seed);
  f.window = config.window;
  f.hop = config.hop;
  return f;
}

StyleSystem fresh_system(const RunConfig& config) {
  validate_config(config);
  StyleSystem s;
  s.model_config = config.model;
  s.conditioner_config = config.conditioner;
  s.rvq_config = config.rvq;
  s.features = make_features(config.features, config.corpus.vocab);
  Rng rng = make_rng(config.seed, {stream::kInit});
  s.params = ModelParams::init(config.model, config.conditioner, config.corpus.vocab, config.corpus.n_styles,
                               config.features.dim, rng);
  s.codebooks = RvqCodebooks::zeros(config.rvq.n_codebooks, config.rvq.codebook_size, config.conditioner.enc_dim,
                                    config.rvq);
  return s;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_container(path, to_container(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path, kMagic, kVersion);
  Checkpoint ckpt;
  try {
    ckpt.config = parse_config(c.header.at("config").get<std::string>());
    ckpt.step = c.header.at("step").get<std::int64_t>();
    ckpt.adam.t = c.header.at("adam_t").get<std::int64_t>();
    const auto& proj = c.header.at("projection");
    if (proj.at("vocab").get<int>() != ckpt.config.corpus.vocab ||
        proj.at("buckets").get<int>() != ckpt.config.features.buckets ||
        proj.at("seed").get<std::uint64_t>() != ckpt.config.features.seed)
      throw ShapeError("projection header disagrees with the stored config");
  } catch (const Json::exception& e) {
    throw CorruptionError("malformed checkpoint header: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw CorruptionError("checkpoint config snapshot is invalid: " + std::string(e.what()));
  }

  // Shapes come from the stored config; the arrays must match them.
  StyleSystem& s = ckpt.system;
  s = fresh_system(ckpt.config);
  const TensorReader r(c);
  const auto names = param_names(s.params);
  const auto values = param_list(s.params);
  ckpt.adam.m.resize(names.size());
  ckpt.adam.v.resize(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto rows = values[i]->rows();
    const auto cols = values[i]->cols();
    *values[i] = r.read("param/" + names[i], rows, cols);
    ckpt.adam.m[i] = r.read("adam_m/" + names[i], rows, cols);
    ckpt.adam.v[i] = r.read("adam_v/" + names[i], rows, cols);
  }
  auto& cb = s.codebooks;
  for (int k = 0; k < cb.n_codebooks; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    cb.books[ks] = r.read("rvq/book" + std::to_string(k), cb.codebook_size, cb.dim);
    cb.ema_sum[ks] = r.read("rvq/ema_sum" + std::to_string(k), cb.codebook_size, cb.dim);
  }
  cb.ema_size = r.read("rvq/ema_size", cb.n_codebooks, cb.codebook_size);
  const auto& p = s.features.projection;
  s.features.projection = FrozenProjection(p.vocab(), p.buckets(), p.seed(),
                                           r.read("projection", p.vocab() + p.buckets(), p.dim()));
  return ckpt;
}

std::uint64_t checkpoint_hash(const Checkpoint& ckpt) {
  const auto bytes = container_bytes(to_container(ckpt));
  return fnv1a64(bytes);
}

}  // namespace stylegen
