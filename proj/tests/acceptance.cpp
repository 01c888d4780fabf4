// End-to-end acceptance checks for the benchmark. Each numbered check prints
// one pass/fail line; the process exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spurlab/spurlab.hpp"

using namespace spurlab;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& title, bool ok, const std::string& detail) {
  std::printf("[%d] %-28s %s%s%s\n", number, title.c_str(), ok ? "PASS" : "FAIL",
              detail.empty() ? "" : " — ", detail.c_str());
  if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

const EvalReport& row(const BenchmarkResult& r, const std::string& method) {
  for (const auto& rep : r.reports)
    if (rep.method == method) return rep;
  fail("acceptance", "missing report row: " + method);
}

double score_of(const BenchmarkResult& r, const std::string& method, TokenId target) {
  for (const auto& s : r.scores)
    if (s.method == method && s.report.target == target) return s.report.sum_score;
  fail("acceptance", "missing score row: " + method);
}

const NeighborSnapshot& snapshot(const BenchmarkResult& r, const std::string& method,
                                 TokenId target) {
  for (const auto& s : r.neighbors)
    if (s.method == method && s.target == target) return s;
  fail("acceptance", "missing neighbor snapshot: " + method);
}

// ---- [1] gradients match central finite differences ------------------------

void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Method> methods = {Method::Standard, Method::NflF, Method::NflCo,
                                       Method::NflCp, Method::NflPt};
  double worst = 0.0;
  for (std::size_t i = 0; i < methods.size(); ++i)
    worst = std::max(worst, finite_diff_check(methods[i], 40 + i));
  const double elapsed = seconds_since(t0);
  report(1, "gradient oracle", worst < 1e-4 && elapsed < 10.0,
         "max rel err " + fmt(worst) + ", " + fmt(elapsed) + "s");
}

// ---- [2] identical seeds emit byte-identical output directories -------------

bool directories_identical(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> names_a, names_b;
  for (const auto& e : fs::directory_iterator(a)) names_a.push_back(e.path().filename());
  for (const auto& e : fs::directory_iterator(b)) names_b.push_back(e.path().filename());
  std::sort(names_a.begin(), names_a.end());
  std::sort(names_b.begin(), names_b.end());
  if (names_a != names_b || names_a.empty()) return false;
  for (const auto& name : names_a)
    if (read_text_file((a / name).string()) != read_text_file((b / name).string()))
      return false;
  return true;
}

void check_determinism() {
  BenchConfig cfg = BenchConfig::defaults();
  cfg.seed = 7;
  const fs::path base = fs::temp_directory_path() / "spurlab_acceptance";
  fs::remove_all(base);
  emit_report(run_benchmark(cfg), (base / "run1").string());
  emit_report(run_benchmark(cfg), (base / "run2").string());
  const bool ok = directories_identical(base / "run1", base / "run2");
  std::size_t n_files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(base / "run1")) ++n_files;
  fs::remove_all(base);
  report(2, "seed determinism", ok,
         "seed 7 twice, " + std::to_string(n_files) + " files compared");
}

// ---- [3]-[6] benchmark patterns at the locked defaults ----------------------

void check_corruption(const BenchmarkResult& r) {
  const EvalReport& std_row = row(r, "standard");
  const EvalReport& unb_row = row(r, "unbiased");
  const bool ok = std_row.biased_acc >= 0.90 && std_row.robust_acc <= 0.65 &&
                  unb_row.robust_acc >= 0.90;
  report(3, "corruption phenomenon", ok,
         "standard " + fmt(100 * std_row.biased_acc) + "/" +
             fmt(100 * std_row.robust_acc) + ", unbiased robust " +
             fmt(100 * unb_row.robust_acc));
}

void check_recovery(const BenchmarkResult& r) {
  const EvalReport& std_row = row(r, "standard");
  bool ok = true;
  double best_abs_delta = 1e9;
  for (const std::string m : {"nfl-f", "nfl-co", "nfl-cp", "nfl-pt"}) {
    const EvalReport& rep = row(r, m);
    ok = ok && rep.robust_acc >= std_row.robust_acc + 0.15;
    best_abs_delta = std::min(best_abs_delta, std::abs(rep.delta));
  }
  ok = ok && best_abs_delta <= std::abs(std_row.delta) / 3.0;
  report(4, "robustness recovery", ok,
         "standard robust " + fmt(100 * std_row.robust_acc) + ", best |delta| " +
             fmt(100 * best_abs_delta) + " vs " + fmt(100 * std::abs(std_row.delta)));
}

void check_score_ordering(const BenchmarkResult& r) {
  const TokenId targets[2] = {r.bias.spurious_positive, r.bias.spurious_negative};
  bool ratios_ok = true;
  bool unbiased_smallest = true;
  std::string detail;
  for (TokenId t : targets) {
    const double std_s = score_of(r, "standard", t);
    const double co_s = score_of(r, "nfl-co", t);
    const double cp_s = score_of(r, "nfl-cp", t);
    const double un_s = score_of(r, "unbiased", t);
    ratios_ok = ratios_ok && std_s >= 10.0 * co_s && std_s >= 10.0 * cp_s;
    // smallest row among the score-bearing methods (the frozen-backbone
    // methods never move the embeddings, so their scores are zero by
    // construction and are not comparable rows)
    unbiased_smallest =
        unbiased_smallest && un_s <= std_s && un_s <= co_s && un_s <= cp_s;
    detail += r.vocab.surfaces.at(t) + ": std " + fmt(std_s) + " co " + fmt(co_s) +
              " cp " + fmt(cp_s) + " unb " + fmt(un_s) + "; ";
  }
  // The two clauses are jointly unattainable at this scale: the ratio clause
  // caps the anchored scores at std/10, while the unbiased run (trained
  // without anchoring on noisy labels) cannot drift less than that cap, so
  // the combined check is expected to fail and is reported honestly.
  report(5, "score ordering", ratios_ok && unbiased_smallest,
         detail + (ratios_ok ? "ratios ok" : "ratios violated") +
             (unbiased_smallest ? ", unbiased smallest" : ", unbiased not smallest"));
}

void check_neighbors(const BenchmarkResult& r) {
  const TokenId sn = r.bias.spurious_negative;
  auto gneg_count = [&](const NeighborSnapshot& s) {
    int n = 0;
    for (const auto& [token, cosine] : s.list.neighbors)
      if (r.vocab.groups[token].kind == GroupKind::GenuineNegative) ++n;
    return n;
  };
  const int std_n = gneg_count(snapshot(r, "standard", sn));
  const int co_n = gneg_count(snapshot(r, "nfl-co", sn));
  const int cp_n = gneg_count(snapshot(r, "nfl-cp", sn));

  auto cosine_drop = [&](const std::string& method) {
    for (std::size_t i = 0; i < r.biased_methods.size(); ++i)
      if (r.biased_methods[i] == method)
        return r.planted_spurious_cosine - r.finetuned_spurious_cosine[i];
    fail("acceptance", "missing cosine for " + method);
  };
  const double std_drop = cosine_drop("standard");
  const double co_drop = cosine_drop("nfl-co");
  const double cp_drop = cosine_drop("nfl-cp");

  const bool ok = std_n >= 5 && co_n <= 2 && cp_n <= 2 && std_drop >= 0.4 &&
                  co_drop < 0.2 && cp_drop < 0.2;
  report(6, "neighborhood preservation", ok,
         "label-flipped neighbors std/co/cp " + std::to_string(std_n) + "/" +
             std::to_string(co_n) + "/" + std::to_string(cp_n) + ", cosine drop " +
             fmt(std_drop) + "/" + fmt(co_drop) + "/" + fmt(cp_drop));
}

// ---- [7] randomized invariants, 100 cases per family ------------------------

GeneratorConfig tiny_gen() {
  GeneratorConfig cfg;
  cfg.n_genuine_positive = 4;
  cfg.n_genuine_negative = 4;
  cfg.n_topics = 2;
  cfg.topic_size = 4;
  cfg.n_filler = 5;
  cfg.min_length = 5;
  cfg.max_length = 8;
  cfg.max_genuine = 2;
  cfg.max_topic = 1;
  return cfg;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.max_positions = 16;
  cfg.prompt_count = 2;
  return cfg;
}

ModelParams random_params(const Vocabulary& vocab, const ModelConfig& cfg,
                          std::uint64_t seed) {
  PlantSpec plant;
  plant.seed = seed;
  ModelParams theta = init_planted(vocab, cfg, plant);
  Rng rng(mix_seed(seed, 0x5eedULL));
  theta.for_each_tensor([&](const char*, auto& t) {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = 0.3 * rng.normal();
  });
  return theta;
}

bool params_identical(const ModelParams& a, const ModelParams& b) {
  bool same = true;
  auto collect_a = [&](std::vector<Matrix>& out, const ModelParams& p) {
    const_cast<ModelParams&>(p).for_each_tensor(
        [&](const char*, auto& t) { out.push_back(Matrix(t)); });
  };
  std::vector<Matrix> ta, tb;
  collect_a(ta, a);
  collect_a(tb, b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    same = same && ta[i].rows() == tb[i].rows() && ta[i].cols() == tb[i].cols() &&
           (ta[i].array() == tb[i].array()).all();
  return same;
}

bool property_bias_filter(const Vocabulary& v, const GeneratorConfig& gcfg) {
  BiasSpec bias;
  bias.spurious_positive = v.id_of("topic0_00");
  bias.spurious_negative = v.id_of("topic0_01");
  bias.rho = 0.25;
  for (int c = 0; c < 100; ++c) {
    const Dataset pool = generate_pool(gcfg, v, bias, 80, mix_seed(9100, c));
    const Dataset kept = apply_bias_filter(pool, bias);
    std::size_t expected = 0;
    for (const auto& ex : pool.examples)
      if (!violates_bias(ex, bias)) ++expected;
    if (kept.size() != expected) return false;
    for (const auto& ex : kept.examples)
      if (violates_bias(ex, bias)) return false;
  }
  return true;
}

bool property_frozen_params(const Vocabulary& v, const GeneratorConfig& gcfg,
                            const ModelConfig& mcfg) {
  BiasSpec bias;
  bias.spurious_positive = v.id_of("topic0_00");
  bias.spurious_negative = v.id_of("topic0_01");
  bias.rho = 0.25;
  for (int c = 0; c < 100; ++c) {
    Dataset pool = generate_pool(gcfg, v, bias, 12, mix_seed(9200, c));
    PlantSpec plant;
    plant.seed = mix_seed(9201, c);
    const ModelParams theta0 = init_planted(v, mcfg, plant);
    TrainConfig tc;
    tc.method = (c % 2 == 0) ? Method::NflF : Method::NflPt;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.seed = mix_seed(9202, c);
    const TrainedModel m = train(theta0, v, mcfg, pool, tc);
    if (!params_identical(m.theta, theta0)) return false;
  }
  return true;
}

bool property_softmax_identity(const Vocabulary& v, const ModelConfig& mcfg) {
  for (int c = 0; c < 100; ++c) {
    PlantSpec plant;
    plant.seed = mix_seed(9300, c);
    plant.noise = 0.1 + 0.05 * double(c % 7);
    const ModelParams theta = init_planted(v, mcfg, plant);
    ClassifierHead head = ClassifierHead::zeros(mcfg.n_classes, mcfg.d);
    Rng rng(mix_seed(9301, c));
    for (Eigen::Index i = 0; i < head.w.rows(); ++i)
      for (Eigen::Index j = 0; j < head.w.cols(); ++j) head.w(i, j) = rng.normal();
    Example ex{{TokenId(4 + c % (v.size() - 4)), TokenId(4 + (c * 7) % (v.size() - 4))},
               c % 2};
    const ForwardCache cache = forward_sentence(theta, head, nullptr, ex, v, mcfg);
    if (std::abs(cache.probs.sum() - 1.0) > 1e-12) return false;
    for (int i = 0; i < cache.n_words + 2; ++i)
      if (std::abs(cache.attn.row(i).sum() - 1.0) > 1e-10) return false;
    // the attention block and the feed-forward block are exact pass-throughs
    // at initialization
    for (int i = 0; i < cache.n_words + 2; ++i)
      if ((cache.hidden.row(i) - cache.inputs.row(i)).cwiseAbs().maxCoeff() > 1e-12)
        return false;
  }
  return true;
}

bool property_score_identities(const Vocabulary& v, const ModelConfig& mcfg) {
  for (int c = 0; c < 100; ++c) {
    Rng rng(mix_seed(9400, c));
    const ModelParams a = random_params(v, mcfg, mix_seed(9401, c));
    const ModelParams b = random_params(v, mcfg, mix_seed(9402, c));
    TrainedModel ref;
    ref.theta = random_params(v, mcfg, mix_seed(9403, c));
    ref.theta0 = ref.theta;
    ref.head = ClassifierHead::zeros(mcfg.n_classes, mcfg.d);
    for (Eigen::Index i = 0; i < ref.head.w.rows(); ++i)
      for (Eigen::Index j = 0; j < ref.head.w.cols(); ++j)
        ref.head.w(i, j) = 0.5 * rng.normal();
    const TokenId target = TokenId(4 + rng.uniform_int(0, v.size() - 5));
    const int k = int(rng.uniform_int(1, v.size() - 5));
    const SpuriousScoreReport fwd = spurious_score(ref, a, b, target, k, v, mcfg);
    const SpuriousScoreReport rev = spurious_score(ref, b, a, target, k, v, mcfg);
    if (std::abs(fwd.sum_score - double(k) * fwd.mean_score) > 1e-12) return false;
    if (std::abs(fwd.sum_score - rev.sum_score) > 1e-12) return false;
  }
  return true;
}

bool property_delta_arithmetic(const Vocabulary& v, const GeneratorConfig& gcfg,
                               const ModelConfig& mcfg) {
  BiasSpec bias;
  bias.spurious_positive = v.id_of("topic0_00");
  bias.spurious_negative = v.id_of("topic0_01");
  bias.rho = 0.25;
  for (int c = 0; c < 100; ++c) {
    const Dataset pool = generate_pool(gcfg, v, bias, 120, mix_seed(9500, c));
    const Dataset biased = apply_bias_filter(pool, bias);
    const Dataset unbiased =
        sample_unbiased(pool, int(biased.size()), mix_seed(9501, c));
    const Dataset challenging = extract_challenging(unbiased, bias);
    TrainedModel m;
    m.theta = random_params(v, mcfg, mix_seed(9502, c));
    m.theta0 = m.theta;
    m.head = ClassifierHead::zeros(mcfg.n_classes, mcfg.d);
    Rng rng(mix_seed(9503, c));
    for (Eigen::Index i = 0; i < m.head.w.rows(); ++i)
      for (Eigen::Index j = 0; j < m.head.w.cols(); ++j)
        m.head.w(i, j) = 0.5 * rng.normal();
    const EvalReport r = evaluate_robustness(m, biased, challenging, v, mcfg);
    if (r.delta != r.robust_acc - r.biased_acc) return false;
    if (r.biased_acc != accuracy(m, biased, v, mcfg)) return false;
    if (r.robust_acc != accuracy(m, challenging, v, mcfg)) return false;
  }
  return true;
}

void check_properties() {
  const GeneratorConfig gcfg = tiny_gen();
  const Vocabulary v = build_vocabulary(gcfg);
  const ModelConfig mcfg = tiny_model();
  const bool filter_ok = property_bias_filter(v, gcfg);
  const bool frozen_ok = property_frozen_params(v, gcfg, mcfg);
  const bool model_ok = property_softmax_identity(v, mcfg);
  const bool score_ok = property_score_identities(v, mcfg);
  const bool delta_ok = property_delta_arithmetic(v, gcfg, mcfg);
  auto tag = [](bool b) { return b ? std::string("ok") : std::string("FAILED"); };
  report(7, "randomized invariants",
         filter_ok && frozen_ok && model_ok && score_ok && delta_ok,
         "100 cases each: filter " + tag(filter_ok) + ", frozen " + tag(frozen_ok) +
             ", forward " + tag(model_ok) + ", score " + tag(score_ok) + ", delta " +
             tag(delta_ok));
}

}  // namespace

int main() {
  check_gradients();
  check_determinism();

  // one full run at the locked defaults feeds checks 3-6 and the timing check
  const auto bench_t0 = std::chrono::steady_clock::now();
  const BenchmarkResult bench = run_benchmark(BenchConfig::defaults());
  const double bench_seconds = seconds_since(bench_t0);

  check_corruption(bench);
  check_recovery(bench);
  check_score_ordering(bench);
  check_neighbors(bench);
  check_properties();

  const auto gen_t0 = std::chrono::steady_clock::now();
  {
    const BenchConfig cfg = BenchConfig::defaults();
    const Vocabulary v = build_vocabulary(cfg.gen);
    BiasSpec bias;
    bias.spurious_positive = v.id_of(cfg.spurious_positive_surface);
    bias.spurious_negative = v.id_of(cfg.spurious_negative_surface);
    bias.rho = cfg.rho;
    const Dataset pool =
        generate_pool(cfg.gen, v, bias, cfg.gen.train_size, mix_seed(cfg.seed, 101));
    const ModelParams theta0 = init_planted(v, cfg.model, cfg.plant);
    if (pool.size() == 0 || theta0.dim() != cfg.model.d)
      fail("acceptance", "generation sanity check failed");
  }
  const double gen_seconds = seconds_since(gen_t0);
  report(8, "runtime budget", bench_seconds < 600.0 && gen_seconds < 10.0,
         "benchmark " + fmt(bench_seconds) + "s, generate+plant " +
             fmt(gen_seconds) + "s");

  std::printf("%d of 8 checks passed\n", 8 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
