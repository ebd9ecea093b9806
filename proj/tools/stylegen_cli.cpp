#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stylegen/checkpoint.hpp"
#include "stylegen/config.hpp"
#include "stylegen/container.hpp"
#include "stylegen/errors.hpp"
#include "stylegen/guidance.hpp"
#include "stylegen/harness.hpp"
#include "stylegen/inversion.hpp"
#include "stylegen/knn_metrics.hpp"

namespace fs = std::filesystem;
using namespace stylegen;

namespace {

constexpr const char* kOutDirEnv = "STYLEGEN_OUT_DIR";

struct Globals {
  std::string config_file;
  std::vector<std::string> overrides;
};

RunConfig effective_config(const Globals& g) {
  RunConfig c;
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') c.out_dir = env;
  if (!g.config_file.empty()) c = load_config(g.config_file, c);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config_set(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  validate_config(c);
  return c;
}

fs::path or_default(const std::string& given, const RunConfig& c, const char* name) {
  return given.empty() ? fs::path(c.out_dir) / name : fs::path(given);
}

void emit(const Table& t, const std::string& report_stem) {
  std::cout << t.to_text();
  if (!report_stem.empty()) {
    write_table(t, report_stem);
    std::cout << "wrote " << report_stem << ".txt and " << report_stem << ".csv\n";
  }
}

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style-conditioned token sequence generation at desk scale"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "config file with `key = value` lines")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override one config key (key=value), repeatable");
  app.fallthrough();

  // corpus gen
  auto* corpus_cmd = app.add_subcommand("corpus", "synthetic corpus")->require_subcommand(1);
  std::string corpus_out;
  auto* corpus_gen = corpus_cmd->add_subcommand("gen", "generate the corpus file");
  corpus_gen->add_option("--out", corpus_out, "corpus file (default <out_dir>/corpus.bin)");

  // store build
  auto* store_cmd = app.add_subcommand("store", "embedding store")->require_subcommand(1);
  std::string store_corpus, store_out;
  auto* store_build = store_cmd->add_subcommand("build", "embed valid and test chunks");
  store_build->add_option("--corpus", store_corpus);
  store_build->add_option("--out", store_out, "store file (default <out_dir>/store.bin)");

  // train
  std::string train_corpus, train_out, train_log, train_resume;
  std::optional<int> train_steps;
  auto* train_cmd = app.add_subcommand("train", "train the conditional model");
  train_cmd->add_option("--corpus", train_corpus);
  train_cmd->add_option("--out", train_out, "checkpoint (default <out_dir>/model.ckpt)");
  train_cmd->add_option("--log", train_log, "loss log csv (default <out_dir>/loss.csv)");
  train_cmd->add_option("--resume", train_resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--steps", train_steps);

  // invert
  std::string inv_ckpt, inv_corpus, inv_out;
  int inv_song = -1;
  std::optional<int> inv_steps, inv_batch;
  std::optional<double> inv_lr;
  auto* invert_cmd = app.add_subcommand("invert", "learn a text embedding for one song");
  invert_cmd->add_option("--checkpoint", inv_ckpt);
  invert_cmd->add_option("--corpus", inv_corpus);
  invert_cmd->add_option("--song", inv_song, "song id")->required();
  invert_cmd->add_option("--steps", inv_steps);
  invert_cmd->add_option("--lr", inv_lr);
  invert_cmd->add_option("--batch", inv_batch);
  invert_cmd->add_option("--out", inv_out, "embedding file (default <out_dir>/song<id>.emb)");

  // generate
  std::string gen_ckpt, gen_corpus, gen_embedding, gen_out, gen_guidance;
  std::optional<int> gen_label, gen_song, gen_top_k;
  int gen_start = 0, gen_excerpt_len = 48, gen_streams = 4, gen_length = 64, gen_count = 1;
  std::optional<double> gen_alpha, gen_beta, gen_temperature;
  std::uint64_t gen_seed = 0;
  auto* gen_cmd = app.add_subcommand("generate", "sample token sequences");
  gen_cmd->add_option("--checkpoint", gen_ckpt);
  gen_cmd->add_option("--corpus", gen_corpus);
  gen_cmd->add_option("--label", gen_label, "text label (style class)");
  gen_cmd->add_option("--embedding", gen_embedding, "learned text embedding file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--excerpt-song", gen_song, "song id providing the style excerpt");
  gen_cmd->add_option("--excerpt-start", gen_start);
  gen_cmd->add_option("--excerpt-len", gen_excerpt_len);
  gen_cmd->add_option("--streams", gen_streams);
  gen_cmd->add_option("--guidance", gen_guidance, "none, simple or double");
  gen_cmd->add_option("--alpha", gen_alpha);
  gen_cmd->add_option("--beta", gen_beta);
  gen_cmd->add_option("--temperature", gen_temperature);
  gen_cmd->add_option("--top-k", gen_top_k);
  gen_cmd->add_option("--seed", gen_seed);
  gen_cmd->add_option("--length", gen_length);
  gen_cmd->add_option("--count", gen_count);
  gen_cmd->add_option("--out", gen_out, "token file, one sequence per line (default stdout)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "metrics and reports")->require_subcommand(1);
  std::string ev_ckpt, ev_corpus, ev_store, ev_report, ev_work;
  std::optional<int> ev_k, ev_samples;
  std::vector<int> ev_streams;
  std::vector<double> ev_betas;
  bool ev_identity = false, ev_no_reuse = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", ev_ckpt);
    cmd->add_option("--corpus", ev_corpus);
    cmd->add_option("--store", ev_store);
    cmd->add_option("--k", ev_k);
    cmd->add_option("--n-samples", ev_samples);
    cmd->add_option("--report", ev_report, "write <stem>.txt and <stem>.csv");
  };
  auto* eval_knn = eval_cmd->add_subcommand("knn", "neighbour, quality and adherence metrics per depth");
  add_common(eval_knn);
  eval_knn->add_option("--streams", ev_streams)->delimiter(',');
  eval_knn->add_flag("--identity", ev_identity, "debug: use the conditioning excerpt as the generation");
  auto* eval_sweep = eval_cmd->add_subcommand("beta-sweep", "double guidance with shuffled text labels");
  add_common(eval_sweep);
  eval_sweep->add_option("--betas", ev_betas)->delimiter(',');
  auto* eval_ablate = eval_cmd->add_subcommand("ablate", "train and compare the ablation variants");
  add_common(eval_ablate);
  eval_ablate->add_option("--work-dir", ev_work, "variant checkpoints (default <out_dir>/ablation)");
  eval_ablate->add_flag("--no-reuse", ev_no_reuse, "retrain even when variant checkpoints exist");

  // config dump
  auto* config_cmd = app.add_subcommand("config", "configuration")->require_subcommand(1);
  auto* config_dump = config_cmd->add_subcommand("dump", "print every effective key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 64;
  }

  try {
    RunConfig cfg = effective_config(g);

    if (config_dump->parsed()) {
      std::cout << dump_config(cfg);
      return 0;
    }

    if (corpus_gen->parsed()) {
      const fs::path out = or_default(corpus_out, cfg, "corpus.bin");
      save_corpus(build_corpus(cfg.corpus), out);
      std::cout << "wrote " << out.string() << " hash " << hex(file_hash(out)) << "\n";
      return 0;
    }

    if (store_build->parsed()) {
      const Corpus corpus = open_corpus(cfg, or_default(store_corpus, cfg, "corpus.bin"));
      const fs::path out = or_default(store_out, cfg, "store.bin");
      const EmbeddingStore store = build_eval_store(corpus, cfg);
      save_store(store, out);
      std::cout << "wrote " << out.string() << " (" << store.size() << " chunks) hash " << hex(file_hash(out)) << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      if (train_steps) cfg.train.steps = *train_steps;
      validate_config(cfg);
      const Corpus corpus = open_corpus(cfg, or_default(train_corpus, cfg, "corpus.bin"));
      TrainOptions opts;
      opts.checkpoint_out = or_default(train_out, cfg, "model.ckpt");
      opts.loss_log = or_default(train_log, cfg, "loss.csv");
      if (!train_resume.empty()) opts.resume = train_resume;
      const int every = std::max(1, cfg.train.log_every);
      opts.progress = [every](std::int64_t step, double loss) {
        if ((step + 1) % every == 0) std::cout << "step " << step + 1 << " loss " << fmt(loss) << std::endl;
      };
      run_train(cfg, corpus, opts);
      std::cout << "wrote " << opts.checkpoint_out->string() << " hash " << hex(file_hash(*opts.checkpoint_out))
                << "\n";
      return 0;
    }

    if (invert_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(or_default(inv_ckpt, cfg, "model.ckpt"));
      const Corpus corpus = open_corpus(ckpt.config, or_default(inv_corpus, cfg, "corpus.bin"));
      InversionConfig ic = cfg.inversion;
      if (inv_steps) ic.steps = *inv_steps;
      if (inv_lr) ic.lr = *inv_lr;
      if (inv_batch) ic.batch = *inv_batch;
      const InversionResult r = invert(ckpt.system.params, corpus.song(inv_song).tokens, ic);
      const fs::path out = or_default(inv_out, cfg, ("song" + std::to_string(inv_song) + ".emb").c_str());
      save_embedding(r, out);
      std::cout << "loss " << fmt(r.loss_trace.empty() ? 0.0 : r.loss_trace.front()) << " -> "
                << fmt(r.loss_trace.empty() ? 0.0 : r.loss_trace.back()) << "\nwrote " << out.string() << "\n";
      return 0;
    }

    if (gen_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(or_default(gen_ckpt, cfg, "model.ckpt"));
      const StyleSystem& s = ckpt.system;
      GuidanceSpec spec = cfg.sampler;
      if (!gen_guidance.empty()) spec.mode = guidance_mode_from_name(gen_guidance);
      if (gen_alpha) spec.alpha = *gen_alpha;
      if (gen_beta) spec.beta = *gen_beta;
      if (gen_temperature) spec.temperature = *gen_temperature;
      if (gen_top_k) spec.top_k = *gen_top_k;
      SamplingConditions cond;
      if (gen_label && !gen_embedding.empty()) throw ParameterError("give either --label or --embedding, not both");
      if (gen_label) {
        if (*gen_label < 0 || *gen_label >= s.params.text_emb.rows()) throw ParameterError("label out of range");
        cond.text = nn::Mat(s.params.text_emb.row(*gen_label));
      }
      if (!gen_embedding.empty()) cond.text = load_embedding(gen_embedding).embedding;
      if (gen_song) {
        const Corpus corpus = open_corpus(ckpt.config, or_default(gen_corpus, cfg, "corpus.bin"));
        const auto& song = corpus.song(*gen_song).tokens;
        if (gen_start < 0 || gen_excerpt_len < 1 || gen_start + gen_excerpt_len > static_cast<int>(song.size()))
          throw ParameterError("excerpt lies outside the song");
        const std::span<const Token> excerpt(song.data() + gen_start, static_cast<std::size_t>(gen_excerpt_len));
        EncodeOptions eo;
        cond.style = encode_style(excerpt, s.params.style, s.features, s.codebooks, gen_streams, s.conditioner_config, eo)
                         .vectors;
      }
      std::ofstream file;
      if (!gen_out.empty()) {
        file.open(gen_out);
        if (!file) throw IoError("cannot write " + gen_out);
      }
      std::ostream& out = gen_out.empty() ? std::cout : file;
      for (int i = 0; i < gen_count; ++i) {
        Rng rng = make_rng(gen_seed, {stream::kGenerate, static_cast<std::uint64_t>(i)});
        const TokenSequence seq = sample_sequence(s.params, cond, spec, gen_length, rng);
        for (std::size_t t = 0; t < seq.tokens.size(); ++t) out << (t ? " " : "") << seq.tokens[t];
        out << "\n";
      }
      return 0;
    }

    if (eval_knn->parsed() || eval_sweep->parsed() || eval_ablate->parsed()) {
      if (ev_k) cfg.metrics.k = *ev_k;
      if (ev_samples) cfg.metrics.n_samples = *ev_samples;
      if (!ev_streams.empty()) cfg.metrics.streams = ev_streams;
      if (!ev_betas.empty()) cfg.metrics.betas = ev_betas;
      validate_config(cfg);
      const Corpus corpus = open_corpus(cfg, or_default(ev_corpus, cfg, "corpus.bin"));
      const fs::path store_path = or_default(ev_store, cfg, "store.bin");
      if (!fs::exists(store_path))
        throw IoError("store file " + store_path.string() + " not found; create it with `stylegen store build`");
      const EmbeddingStore store = load_store(store_path);

      if (eval_ablate->parsed()) {
        const fs::path work = ev_work.empty() ? fs::path(cfg.out_dir) / "ablation" : fs::path(ev_work);
        const auto rows = run_ablation(cfg, corpus, store, work, kAllVariants, !ev_no_reuse);
        emit(ablation_table(rows), ev_report);
        return 0;
      }
      const Checkpoint ckpt = load_checkpoint(or_default(ev_ckpt, cfg, "model.ckpt"));
      if (eval_knn->parsed()) {
        emit(knn_table(run_eval_knn(ckpt, corpus, store, cfg.metrics, ev_identity)), ev_report);
      } else {
        emit(sweep_table(run_beta_sweep(ckpt, corpus, store, cfg.metrics, cfg.metrics.betas)), ev_report);
      }
      return 0;
    }
  } catch (const stylegen::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
