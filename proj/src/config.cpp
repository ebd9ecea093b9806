#include "stylegen/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "stylegen/errors.hpp"

namespace stylegen {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("invalid value '" + text + "' for " + key);
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }
std::string format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
std::string format(GuidanceMode m) { return guidance_mode_name(m); }
template <class T>
std::string format(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format(v[i]);
  return out;
}

void parse_into(const std::string& key, const std::string& text, int& out) { out = parse_number<int>(key, text); }
void parse_into(const std::string& key, const std::string& text, std::uint64_t& out) {
  out = parse_number<std::uint64_t>(key, text);
}
void parse_into(const std::string& key, const std::string& text, double& out) { out = parse_number<double>(key, text); }
void parse_into(const std::string& key, const std::string& text, bool& out) { out = parse_bool(key, text); }
void parse_into(const std::string&, const std::string& text, std::string& out) { out = text; }
void parse_into(const std::string& key, const std::string& text, GuidanceMode& out) {
  try {
    out = guidance_mode_from_name(text);
  } catch (const Error&) {
    throw ConfigError("invalid guidance mode '" + text + "' for " + key);
  }
}
template <class T>
void parse_into(const std::string& key, const std::string& text, std::vector<T>& out) {
  out.clear();
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    T v{};
    parse_into(key, trim(item), v);
    out.push_back(v);
  }
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Access>
Entry field(std::string key, Access access) {
  Entry e;
  e.key = key;
  e.get = [access](const RunConfig& c) { return format(access(c)); };
  e.set = [access, key](RunConfig& c, const std::string& text) { parse_into(key, text, access(c)); };
  return e;
}

#define SG_FIELD(name, expr) field(name, [](auto& c) -> auto& { return c.expr; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      SG_FIELD("seed", seed),
      SG_FIELD("out_dir", out_dir),
      SG_FIELD("corpus.n_styles", corpus.n_styles),
      SG_FIELD("corpus.n_train", corpus.n_train),
      SG_FIELD("corpus.n_valid", corpus.n_valid),
      SG_FIELD("corpus.n_test", corpus.n_test),
      SG_FIELD("corpus.song_len", corpus.song_len),
      SG_FIELD("corpus.vocab", corpus.vocab),
      SG_FIELD("corpus.alpha_pi", corpus.alpha_pi),
      SG_FIELD("corpus.alpha_trans", corpus.alpha_trans),
      SG_FIELD("corpus.seed", corpus.seed),
      SG_FIELD("features.window", features.window),
      SG_FIELD("features.hop", features.hop),
      SG_FIELD("features.buckets", features.buckets),
      SG_FIELD("features.dim", features.dim),
      SG_FIELD("features.seed", features.seed),
      SG_FIELD("model.d_model", model.d_model),
      SG_FIELD("model.n_layers", model.n_layers),
      SG_FIELD("model.n_heads", model.n_heads),
      SG_FIELD("model.d_ff", model.d_ff),
      SG_FIELD("model.max_len", model.max_len),
      SG_FIELD("conditioner.use_encoder", conditioner.use_encoder),
      SG_FIELD("conditioner.enc_dim", conditioner.enc_dim),
      SG_FIELD("conditioner.enc_heads", conditioner.enc_heads),
      SG_FIELD("conditioner.enc_layers", conditioner.enc_layers),
      SG_FIELD("conditioner.enc_ff", conditioner.enc_ff),
      SG_FIELD("conditioner.max_frames", conditioner.max_frames),
      SG_FIELD("conditioner.downsample", conditioner.downsample),
      SG_FIELD("conditioner.min_excerpt", conditioner.min_excerpt),
      SG_FIELD("conditioner.max_excerpt", conditioner.max_excerpt),
      SG_FIELD("rvq.n_codebooks", rvq.n_codebooks),
      SG_FIELD("rvq.codebook_size", rvq.codebook_size),
      SG_FIELD("rvq.decay", rvq.decay),
      SG_FIELD("rvq.eps_count", rvq.eps_count),
      SG_FIELD("rvq.dead_threshold", rvq.dead_threshold),
      SG_FIELD("rvq.commitment", rvq.commitment),
      SG_FIELD("rvq.kmeans_iters", rvq.kmeans_iters),
      SG_FIELD("rvq.init_excerpts", rvq.init_excerpts),
      SG_FIELD("train.steps", train.steps),
      SG_FIELD("train.batch", train.batch),
      SG_FIELD("train.lr", train.lr),
      SG_FIELD("train.warmup", train.warmup),
      SG_FIELD("train.beta1", train.beta1),
      SG_FIELD("train.beta2", train.beta2),
      SG_FIELD("train.adam_eps", train.adam_eps),
      SG_FIELD("train.weight_decay", train.weight_decay),
      SG_FIELD("train.grad_clip", train.grad_clip),
      SG_FIELD("train.segment_len", train.segment_len),
      SG_FIELD("train.mask_excerpt", train.mask_excerpt),
      SG_FIELD("train.condition_dropout", train.condition_dropout),
      SG_FIELD("train.depth_dropout", train.depth_dropout),
      SG_FIELD("train.log_every", train.log_every),
      SG_FIELD("sampler.guidance", sampler.mode),
      SG_FIELD("sampler.alpha", sampler.alpha),
      SG_FIELD("sampler.beta", sampler.beta),
      SG_FIELD("sampler.temperature", sampler.temperature),
      SG_FIELD("sampler.top_k", sampler.top_k),
      SG_FIELD("inversion.n_pseudo_tokens", inversion.n_pseudo_tokens),
      SG_FIELD("inversion.steps", inversion.steps),
      SG_FIELD("inversion.lr", inversion.lr),
      SG_FIELD("inversion.batch", inversion.batch),
      SG_FIELD("inversion.chunk_len", inversion.chunk_len),
      SG_FIELD("inversion.init_label", inversion.init_label),
      SG_FIELD("inversion.seed", inversion.seed),
      SG_FIELD("metrics.k", metrics.k),
      SG_FIELD("metrics.n_samples", metrics.n_samples),
      SG_FIELD("metrics.excerpt_len", metrics.excerpt_len),
      SG_FIELD("metrics.generate_len", metrics.generate_len),
      SG_FIELD("metrics.store_chunk_len", metrics.store_chunk_len),
      SG_FIELD("metrics.streams", metrics.streams),
      SG_FIELD("metrics.betas", metrics.betas),
      SG_FIELD("metrics.fixed_streams", metrics.fixed_streams),
      SG_FIELD("metrics.seed", metrics.seed),
  };
  return table;
}

#undef SG_FIELD

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

std::string config_get(const RunConfig& config, const std::string& key) { return find_entry(key).get(config); }

void config_set(RunConfig& config, const std::string& key, const std::string& value) {
  find_entry(key).set(config, value);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    config_set(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

void validate_config(const RunConfig& c) {
  require(c.corpus.n_styles >= 1, "corpus.n_styles must be at least 1");
  require(c.corpus.n_train >= 1, "corpus.n_train must be at least 1");
  require(c.corpus.n_valid >= 0 && c.corpus.n_test >= 0, "corpus split sizes must be non-negative");
  require(c.corpus.vocab >= 2 && c.corpus.vocab <= 65535, "corpus.vocab must be in [2, 65535]");
  require(c.corpus.song_len >= 2, "corpus.song_len must be at least 2");
  require(c.corpus.alpha_pi > 0 && c.corpus.alpha_trans > 0, "Dirichlet concentrations must be positive");
  require(c.features.window >= 2 && c.features.hop >= 1, "features.window >= 2 and features.hop >= 1 required");
  require(c.features.buckets >= 1 && c.features.dim >= 1, "features.buckets and features.dim must be positive");
  require(c.model.d_model >= 1 && c.model.n_heads >= 1 && c.model.d_model % c.model.n_heads == 0,
          "model.d_model must be a positive multiple of model.n_heads");
  require(c.model.n_layers >= 1 && c.model.d_ff >= 1, "model.n_layers and model.d_ff must be positive");
  require(c.conditioner.enc_heads >= 1 && c.conditioner.enc_dim % c.conditioner.enc_heads == 0,
          "conditioner.enc_dim must be a multiple of conditioner.enc_heads");
  require(c.conditioner.downsample >= 1, "conditioner.downsample must be positive");
  require(c.conditioner.min_excerpt >= c.features.window && c.conditioner.min_excerpt <= c.conditioner.max_excerpt,
          "need features.window <= conditioner.min_excerpt <= conditioner.max_excerpt");
  require(frame_count(c.conditioner.max_excerpt, c.features.window, c.features.hop) <= c.conditioner.max_frames,
          "conditioner.max_frames is too small for conditioner.max_excerpt");
  require(c.rvq.n_codebooks >= 1 && c.rvq.codebook_size >= 1, "rvq sizes must be positive");
  require(c.rvq.init_excerpts >= 1, "rvq.init_excerpts must be positive");
  require(c.rvq.decay >= 0 && c.rvq.decay < 1, "rvq.decay must be in [0, 1)");
  require(c.train.steps >= 0 && c.train.batch >= 1, "train.steps >= 0 and train.batch >= 1 required");
  require(c.train.lr > 0, "train.lr must be positive");
  require(c.train.weight_decay >= 0 && c.train.grad_clip >= 0, "train.weight_decay and train.grad_clip must be non-negative");
  const int seg = std::min(c.train.segment_len, c.corpus.song_len);
  require(seg >= c.conditioner.max_excerpt, "train.segment_len must cover conditioner.max_excerpt");
  const int max_prefix = 1 + prefix_length(c.conditioner.max_frames, c.conditioner.downsample);
  require(max_prefix + seg <= c.model.max_len, "model.max_len is too small for the prefix plus a training segment");
  require(c.sampler.alpha >= 1 && c.sampler.beta >= 1, "sampler.alpha and sampler.beta must be >= 1");
  require(c.sampler.temperature > 0 && c.sampler.top_k >= 0, "sampler.temperature > 0 and sampler.top_k >= 0");
  require(c.inversion.n_pseudo_tokens >= 1 && c.inversion.n_pseudo_tokens <= 12, "inversion.n_pseudo_tokens in [1, 12]");
  require(c.inversion.batch >= 1 && c.inversion.steps >= 0, "inversion.batch >= 1 and inversion.steps >= 0");
  require(c.metrics.k >= 1 && c.metrics.n_samples >= 1, "metrics.k and metrics.n_samples must be positive");
  require(c.metrics.excerpt_len >= c.features.window && c.metrics.generate_len >= c.features.window,
          "metrics excerpt and generation lengths must cover a feature window");
  require(!c.metrics.streams.empty(), "metrics.streams must not be empty");
  require(c.metrics.fixed_streams >= 1 && c.metrics.fixed_streams <= c.rvq.n_codebooks,
          "metrics.fixed_streams must lie in [1, rvq.n_codebooks]");
  for (int n : c.metrics.streams)
    require(n >= 1 && n <= c.rvq.n_codebooks, "metrics.streams entries must lie in [1, rvq.n_codebooks]");
}

}  // namespace stylegen
