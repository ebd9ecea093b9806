// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Trained checkpoints are kept in
// --work-dir and reused on later runs.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stylegen/checkpoint.hpp"
#include "stylegen/container.hpp"
#include "stylegen/guidance.hpp"
#include "stylegen/harness.hpp"
#include "stylegen/inversion.hpp"
#include "stylegen/knn_metrics.hpp"
#include "stylegen/rvq.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace stylegen;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Collects failed sub-checks of one criterion.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  Verdict verdict(const std::string& summary) const {
    if (failures.empty()) return {true, summary};
    std::string d = failures.front();
    if (failures.size() > 1) d += " (+" + std::to_string(failures.size() - 1) + " more)";
    return {false, d};
  }
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

bool same_bits(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

// ---------------------------------------------------------------- 1

Verdict cfg_algebra() {
  Checks c;
  std::mt19937_64 g(101);
  std::uniform_real_distribution<double> alpha(0.0, 8.0);
  for (int i = 0; i < 1000; ++i) {
    const Logits ln = test::gaussian(1, 64, g, 3.0), ls = test::gaussian(1, 64, g, 3.0), lt = test::gaussian(1, 64, g, 3.0);
    const double a = i == 0 ? 1.0 : alpha(g);
    c.expect(same_bits(double_cfg(ln, ls, lt, a, 1.0), simple_cfg(lt, ln, a)), "beta=1 differs from simple at triple " + std::to_string(i));
    c.expect(same_bits(double_cfg(ln, ls, lt, 1.0, 1.0), lt), "alpha=beta=1 is not l_text_style at triple " + std::to_string(i));
    c.expect(same_bits(simple_cfg(lt, ln, 1.0), lt), "simple alpha=1 is not l_cond at triple " + std::to_string(i));
  }
  return c.verdict("1000 triples bitwise equal");
}

// ---------------------------------------------------------------- 2

Verdict rvq_oracle() {
  Checks c;
  std::mt19937_64 g(202);
  RvqConfig rc;
  RvqCodebooks cb = RvqCodebooks::zeros(6, 64, 16, rc);
  for (int k = 0; k < 6; ++k) cb.books[static_cast<std::size_t>(k)] = test::gaussian(64, 16, g, 1.0 / (k + 1));
  // Duplicate entries and exact midpoints force ties at every stage.
  for (int k = 0; k < 6; ++k) {
    auto& b = cb.books[static_cast<std::size_t>(k)];
    b.row(40) = b.row(7);
    b.row(9) *= 0.01;
    b.row(41) = -b.row(9);
  }
  Eigen::MatrixXd x = test::gaussian(1000, 16, g);
  for (int i = 0; i < 50; ++i) x.row(i) = cb.books[0].row(7);                                   // duplicate pair 7/40
  for (int i = 50; i < 100; ++i) x.row(i) = Eigen::RowVectorXd::Zero(16);                        // midpoint of 9/41
  for (int i = 100; i < 150; ++i) x.row(i) = cb.books[0].row(3) + cb.books[1].row(40);           // tie at stage 2
  const Eigen::MatrixXi expect = test::brute_codes(x, cb, 6);
  const Quantization q = quantize(x, cb, 6);
  c.expect(q.codes.codes == expect, "codes differ from exhaustive search");
  int ties = 0;
  for (Eigen::Index t = 0; t < 150; ++t) ties += expect(t, 0) == 7 || expect(t, 0) == 9 || expect(t, 1) == 7;
  c.expect(ties >= 100, "constructed ties not exercised");
  for (int n = 1; n < 6; ++n) {
    const Quantization qn = quantize(x, cb, n);
    c.expect(qn.codes.codes == q.codes.codes.leftCols(n), "nesting broken at depth " + std::to_string(n));
    c.expect(qn.quantized == dequantize(qn.codes, cb), "quantized vectors differ from dequantized codes");
  }
  return c.verdict("1000 vectors, 6 stages, ties resolved to the lower index, nesting holds");
}

// ---------------------------------------------------------------- 3

const std::vector<Token> kSegment{0, 3, 1, 2, 5, 7, 6, 4, 1, 1, 2, 3, 0, 7, 5, 4,
                                  2, 6, 3, 3, 0, 1, 4, 5, 7, 2, 6, 0, 5, 1, 3, 4};

Verdict gradient_checks() {
  Checks c;
  double worst = 0.0;
  for (const ConditionCase cc : {ConditionCase::kBoth, ConditionCase::kTextOnly, ConditionCase::kStyleOnly,
                                 ConditionCase::kNone}) {
    StyleSystem s = test::tiny_system(11);
    ExamplePlan plan;
    plan.excerpt = Span{6, 20};
    plan.condition = cc;
    plan.n_streams = 2;
    EncodeOptions opts;
    opts.mode = EncodeMode::kTrain;
    StyleCache base;
    encode_style(std::span(kSegment).subspan(6, 20), s.params.style, s.features, s.codebooks, 2, s.conditioner_config,
                 opts, &base);
    const FixedQuantization fixed{base.quantized - base.encoded, base.quantized};
    ModelParams grad = zeros_like(s.params);
    example_loss(s, kSegment, 1, plan, true, &grad, 1.0, nullptr, &fixed);
    const auto r = test::check_gradients(
        [&] { return example_loss(s, kSegment, 1, plan, true, nullptr, 1.0, nullptr, &fixed).loss; },
        param_list(s.params), param_list(static_cast<const ModelParams&>(grad)), param_names(s.params));
    worst = std::max(worst, r.max_rel);
    c.expect(r.max_rel < 1e-4, "model case " + std::to_string(static_cast<int>(cc)) + " error " + num(r.max_rel) + " at " + r.worst);
  }

  {
    StyleSystem s = test::tiny_system(7);
    const std::vector<Token> ex(kSegment.begin(), kSegment.begin() + 20);
    EncodeOptions train;
    train.mode = EncodeMode::kTrain;
    StyleCache base;
    encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, train, &base);
    const FixedQuantization fixed{base.quantized - base.encoded, base.quantized};
    train.fixed = &fixed;
    std::mt19937_64 g(8);
    const Eigen::MatrixXd weights = test::gaussian(prefix_length(static_cast<int>(base.frames.rows()), 3), 8, g);
    auto loss = [&] {
      StyleCache cache;
      const auto p = encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, train, &cache);
      return (p.vectors.array() * weights.array()).sum() + cache.commitment_loss;
    };
    StyleCache cache;
    encode_style(ex, s.params.style, s.features, s.codebooks, 2, s.conditioner_config, train, &cache);
    ModelParams grad = zeros_like(s.params);
    encode_style_backward(s.params.style, cache, weights, s.conditioner_config, grad.style);
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
    worst = std::max(worst, r.max_rel);
    c.expect(r.max_rel < 1e-4, "conditioner error " + num(r.max_rel) + " at " + r.worst);
  }

  {
    const StyleSystem s = test::tiny_system(13);
    const FrozenModelObjective obj(s.params);
    std::mt19937_64 g(14);
    nn::Mat emb = test::gaussian(2, 8, g, 0.5);
    const std::vector<std::vector<Token>> chunks{{1, 2, 3, 4, 5, 6, 7, 0, 2, 2}, {7, 6, 5, 4, 3, 2, 1, 0, 5, 5}};
    nn::Mat grad;
    obj.loss_and_grad(emb, chunks, &grad);
    const auto r = test::check_gradients([&] { return obj.loss_and_grad(emb, chunks, nullptr); }, {&emb}, {&grad}, {"c"});
    worst = std::max(worst, r.max_rel);
    c.expect(r.max_rel < 1e-4, "inversion error " + num(r.max_rel));
  }
  return c.verdict("max relative error " + num(worst, 3));
}

// ---------------------------------------------------------------- 4

Eigen::VectorXd unit3(double a, double b, double z) { return Eigen::Vector3d(a, b, z).normalized(); }

Verdict knn_suite() {
  Checks c;
  std::vector<std::pair<int, Eigen::VectorXd>> rows;
  for (int song = 0; song < 5; ++song)
    for (int chunk = 0; chunk < 2; ++chunk) {
      const double a = 0.6 * song + 0.1 * chunk;
      rows.push_back({song, unit3(std::cos(a), std::sin(a), 0.1 * chunk)});
    }
  rows.push_back({4, rows[2].second});  // exact tie between songs 1 and 4
  const EmbeddingStore s = test::store_from(rows);
  std::mt19937_64 g(404);
  int compared = 0;
  for (int i = 0; i < 300; ++i) {
    const Eigen::VectorXd a = i % 10 == 0 ? Eigen::VectorXd(s.vectors.row(2).transpose())
                                          : Eigen::VectorXd(test::gaussian(3, 1, g).col(0).normalized());
    const Eigen::VectorXd b = test::gaussian(3, 1, g).col(0).normalized();
    for (int k = 1; k <= 5; ++k) {
      c.expect(nearest_songs(s, a, k) == test::brute_neighbours(s, a, k), "nearest_songs differs at query " + std::to_string(i));
      c.expect(knn_common(s, a, b, k) == test::brute_common(s, a, b, k), "knn_common differs at query " + std::to_string(i));
      c.expect(knn_common(s, a, a, k) == 1.0, "knn_common(x, x) != 1");
      ++compared;
    }
    c.expect(knn_overfit(s, a, b) == test::brute_overfit(s, a, b), "knn_overfit differs at query " + std::to_string(i));
    c.expect(knn_overfit(s, a, a) == 1, "knn_overfit(x, x) != 1");
  }
  c.expect(nearest_songs(s, s.vectors.row(2).transpose(), 1).front() == 1, "tie not resolved to the lower song id");
  return c.verdict(std::to_string(compared) + " neighbour queries match the oracle");
}

// ---------------------------------------------------------------- 5

Verdict frechet_forms() {
  Checks c;
  auto stats = [](Eigen::VectorXd m, Eigen::MatrixXd cov) {
    GaussianStats g;
    g.mean = std::move(m);
    g.cov = std::move(cov);
    g.count = 2;
    return g;
  };
  const auto a = stats(Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity());
  const auto b = stats(Eigen::Vector2d(3, 4), Eigen::Matrix2d::Identity());
  const auto one = stats(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0));
  const auto four = stats(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0));
  std::mt19937_64 g(505);
  const auto r = fit_gaussian(test::gaussian(50, 6, g));
  const double d0 = frechet_distance(a, a), d25 = frechet_distance(a, b), d1 = frechet_distance(one, four),
               dr = frechet_distance(r, r);
  c.expect(std::abs(d0) <= 1e-8, "identical stats gave " + num(d0));
  c.expect(std::abs(d25 - 25.0) <= 1e-8, "unit-shift case gave " + num(d25, 12));
  c.expect(std::abs(d1 - 1.0) <= 1e-8, "1-D case gave " + num(d1, 12));
  c.expect(std::abs(dr) <= 1e-8, "identical fitted stats gave " + num(dr));
  return c.verdict("0, 25, 1 within 1e-8");
}

// ---------------------------------------------------------------- 6, 7, 8

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<KnnRow> depth;  // n_streams 1 and 4
  std::vector<SweepRow> sweep;
  KnnRow full_fixed;
  KnnRow no_mask_fixed;
};

struct Shared {
  fs::path work;
  RunConfig base;
  Corpus corpus;
  EmbeddingStore store;
  std::vector<SeedRun> runs;
};

RunConfig seed_config(const RunConfig& base, std::uint64_t seed) {
  RunConfig c = base;
  c.seed = seed;
  return c;
}

void train_and_evaluate(Shared& sh, int n_seeds) {
  for (int i = 0; i < n_seeds; ++i) {
    const auto seed = static_cast<std::uint64_t>(i + 1);
    const RunConfig cfg = seed_config(sh.base, seed);
    const fs::path dir = sh.work / ("seed" + std::to_string(seed));
    fs::create_directories(dir);
    const auto t0 = std::chrono::steady_clock::now();
    const Variant pair[] = {Variant::kFull, Variant::kNoMasking};
    const auto ablation = run_ablation(cfg, sh.corpus, sh.store, dir, pair);
    write_table(ablation_table(ablation), dir / "ablation");

    SeedRun run;
    run.seed = seed;
    run.full_fixed = ablation[0].metrics;
    run.no_mask_fixed = ablation[1].metrics;
    const Checkpoint ckpt = load_checkpoint(dir / "full.ckpt");
    MetricsConfig depth = cfg.metrics;
    depth.streams = {1, 4};
    run.depth = run_eval_knn(ckpt, sh.corpus, sh.store, depth);
    write_table(knn_table(run.depth), dir / "knn");
    const double betas[] = {1.0, 3.0, 5.0};
    run.sweep = run_beta_sweep(ckpt, sh.corpus, sh.store, cfg.metrics, betas);
    write_table(sweep_table(run.sweep), dir / "beta_sweep");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "  seed " << seed << ": knn_common@1 " << num(run.depth[0].knn_common) << ", @4 "
              << num(run.depth[1].knn_common) << "; overfit full " << num(run.full_fixed.knn_overfit)
              << ", no-mask " << num(run.no_mask_fixed.knn_overfit) << " (" << num(secs, 4) << " s)" << std::endl;
    sh.runs.push_back(run);
  }
}

Verdict depth_trend(const Shared& sh) {
  int wins = 0;
  std::string d;
  for (const auto& r : sh.runs) {
    wins += r.depth[1].knn_common > r.depth[0].knn_common;
    d += (d.empty() ? "" : "; ") + ("seed " + std::to_string(r.seed) + " " + num(r.depth[0].knn_common) + " -> " +
                                     num(r.depth[1].knn_common));
  }
  const int samples = sh.runs.empty() ? 0 : sh.runs.front().depth[1].n_samples;
  const bool ok = wins >= 2 && samples >= 200;
  return {ok, std::to_string(wins) + "/" + std::to_string(sh.runs.size()) + " seeds rise with depth (" + d + ")"};
}

Verdict beta_tradeoff(const Shared& sh) {
  const std::size_t n = sh.runs.front().sweep.size();
  std::vector<double> adherence(n, 0.0), common(n, 0.0);
  for (const auto& r : sh.runs)
    for (std::size_t j = 0; j < n; ++j) {
      adherence[j] += r.sweep[j].text_adherence / static_cast<double>(sh.runs.size());
      common[j] += r.sweep[j].knn_common / static_cast<double>(sh.runs.size());
    }
  bool ok = sh.runs.front().sweep.front().n_samples >= 200;
  std::string d = "adherence";
  for (std::size_t j = 0; j < n; ++j) {
    if (j > 0) ok = ok && adherence[j] >= adherence[j - 1] && common[j] <= common[j - 1];
    d += " " + num(adherence[j]);
  }
  d += ", knn_common";
  for (double v : common) d += " " + num(v);
  return {ok, d + " over beta 1,3,5"};
}

Verdict masking_ablation(const Shared& sh) {
  double full = 0.0, no_mask = 0.0;
  for (const auto& r : sh.runs) {
    full += r.full_fixed.knn_overfit / static_cast<double>(sh.runs.size());
    no_mask += r.no_mask_fixed.knn_overfit / static_cast<double>(sh.runs.size());
  }
  return {no_mask > full, "mean knn_overfit no-mask " + num(no_mask) + " vs full " + num(full)};
}

// ---------------------------------------------------------------- 9

// Logits c * A at every position, context ignored.
class LinearBypass : public InversionObjective {
 public:
  explicit LinearBypass(Eigen::MatrixXd a) : a_(std::move(a)) {}
  int dim() const override { return static_cast<int>(a_.rows()); }
  double loss_and_grad(const nn::Mat& c, std::span<const std::vector<Token>> chunks, nn::Mat* grad) const override {
    const Eigen::RowVectorXd z = c.row(0) * a_;
    const double lse = z.maxCoeff() + std::log((z.array() - z.maxCoeff()).exp().sum());
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(z.size());
    double n = 0.0;
    for (const auto& chunk : chunks)
      for (Token t : chunk) {
        q(t) += 1.0;
        n += 1.0;
      }
    q /= n;
    if (grad != nullptr) *grad = ((z.array() - lse).exp().matrix() - q) * a_.transpose();
    return -(q.array() * (z.array() - lse)).sum();
  }
  Eigen::RowVectorXd probs(const nn::Mat& c) const {
    const Eigen::RowVectorXd z = c.row(0) * a_;
    const Eigen::RowVectorXd e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
  }

 private:
  Eigen::MatrixXd a_;
};

Verdict textual_inversion(const Shared& sh) {
  Checks c;
  std::mt19937_64 g(909);
  const LinearBypass bypass(test::gaussian(16, 8, g));
  Rng rng = make_rng(909);
  const auto song = sample_song(sample_style_params(5, 0, 8, 0.5, 0.5), 64, rng);
  Eigen::RowVectorXd empirical = Eigen::RowVectorXd::Zero(8);
  for (Token t : song.tokens) empirical(t) += 1.0 / 64;
  InversionConfig bc;
  bc.steps = 2000;
  bc.chunk_len = 64;
  bc.batch = 1;
  const auto br = invert(bypass, song.tokens, nn::Mat::Zero(1, 16), bc);
  const double tv = 0.5 * (bypass.probs(br.embedding) - empirical).cwiseAbs().sum();
  c.expect(tv < 1e-3, "bypass total variation " + num(tv));

  const RunConfig cfg = seed_config(sh.base, 1);
  const Checkpoint ckpt = load_checkpoint(sh.work / "seed1" / "full.ckpt");
  const int n_styles = cfg.corpus.n_styles;
  GuidanceSpec guidance;
  guidance.mode = GuidanceMode::kSimple;
  guidance.alpha = 3.0;
  std::vector<double> rates;
  std::string d;
  for (int i = 0; i < 10; ++i) {
    const int style = i * n_styles / 10;
    const auto& held_out = sh.corpus.test[static_cast<std::size_t>(style * cfg.corpus.n_test)];
    InversionConfig ic = cfg.inversion;
    ic.seed = static_cast<std::uint64_t>(i);
    const auto r = invert(ckpt.system.params, held_out.tokens, ic);
    rates.push_back(style_recovery(ckpt, sh.corpus, r.embedding, held_out.style_id, 100, guidance, 128,
                                   static_cast<std::uint64_t>(1000 + i)));
    d += (d.empty() ? "" : " ") + num(rates.back(), 2);
  }
  std::vector<double> sorted = rates;
  std::sort(sorted.begin(), sorted.end());
  const double median = 0.5 * (sorted[4] + sorted[5]);
  const double bar = 5.0 / n_styles;
  c.expect(median > bar, "median recovery " + num(median) + " <= " + num(bar) + " (" + d + ")");
  return c.verdict("bypass TV " + num(tv, 3) + "; median recovery " + num(median) + " > " + num(bar) + " (" + d + ")");
}

// ---------------------------------------------------------------- 10

std::map<std::string, std::vector<char>> read_tree(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

Verdict reproducibility(const fs::path& cli, const fs::path& work) {
  Checks c;
  const char* overrides = " --set train.steps=150 --set metrics.n_samples=40 --set rvq.init_excerpts=128";
  // Both runs use the same out_dir (it is part of the stored config); the
  // first run's files are moved aside before the second starts.
  const fs::path dir = work / "repro";
  for (const char* name : {"repro_a", "repro_b"}) {
    fs::remove_all(dir);
    fs::remove_all(work / name);
    fs::create_directories(dir);
    const std::string base = "\"" + cli.string() + "\" --set out_dir=\"" + dir.string() + "\"" + overrides;
    const std::vector<std::string> verbs{"corpus gen", "store build", "train", "eval knn --report \"" + (dir / "knn").string() + "\"",
                                         "eval beta-sweep --report \"" + (dir / "sweep").string() + "\""};
    for (const auto& verb : verbs) {
      const std::string cmd = base + " " + verb + " > \"" + (work / "repro_log.txt").string() + "\" 2>&1";
      c.expect(std::system(cmd.c_str()) == 0, "command failed: " + verb);
    }
    fs::rename(dir, work / name);
  }
  const auto a = read_tree(work / "repro_a"), b = read_tree(work / "repro_b");
  c.expect(a.size() >= 7, "pipeline wrote only " + std::to_string(a.size()) + " files");
  std::set<std::string> names;
  for (const auto& [k, v] : a) names.insert(k);
  for (const auto& [k, v] : b) names.insert(k);
  for (const auto& n : names) {
    const auto ia = a.find(n), ib = b.find(n);
    c.expect(ia != a.end() && ib != b.end() && ia->second == ib->second, n + " differs between runs");
  }
  std::string list;
  for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
  return c.verdict(std::to_string(names.size()) + " files byte-identical (" + list + ")");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  fs::path work = "acceptance_work";
  fs::path cli;
  int n_seeds = 3;
  std::vector<int> only;
  app.add_option("--work-dir", work, "checkpoints and reports; reused across runs");
  app.add_option("--cli", cli, "stylegen executable for the reproducibility run")->required();
  app.add_option("--seeds", n_seeds, "training seeds for the statistical criteria")->check(CLI::Range(1, 10));
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& run) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << " " << name << ": " << v.detail << " ["
              << num(secs, 4) << " s]" << std::endl;
  };

  report(1, "guidance algebra", cfg_algebra);
  report(2, "quantizer oracle", rvq_oracle);
  report(3, "gradient checks", gradient_checks);
  report(4, "neighbour metrics", knn_suite);
  report(5, "Frechet closed forms", frechet_forms);

  if (wanted(6) || wanted(7) || wanted(8) || wanted(9)) {
    Shared sh;
    sh.work = work;
    sh.corpus = build_corpus(sh.base.corpus);
    sh.store = build_eval_store(sh.corpus, sh.base);
    std::string setup_error;
    try {
      train_and_evaluate(sh, n_seeds);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    auto guarded = [&](const std::function<Verdict()>& f) {
      return [&, f] { return setup_error.empty() ? f() : Verdict{false, "training failed: " + setup_error}; };
    };
    report(6, "depth trend", guarded([&] { return depth_trend(sh); }));
    report(7, "beta trade-off", guarded([&] { return beta_tradeoff(sh); }));
    report(8, "masking ablation", guarded([&] { return masking_ablation(sh); }));
    report(9, "textual inversion", guarded([&] { return textual_inversion(sh); }));
  }

  report(10, "reproducibility", [&] { return reproducibility(cli, work); });
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
