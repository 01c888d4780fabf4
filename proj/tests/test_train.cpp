#include <catch2/catch_amalgamated.hpp>

#include "spurlab/corpus.hpp"
#include "spurlab/eval.hpp"
#include "spurlab/train.hpp"

using namespace spurlab;

namespace {

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

void randomize(Matrix& m, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
}
void randomize(Vector& v, Rng& rng, double scale) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.normal();
}

ModelParams random_params(const Vocabulary& vocab, const ModelConfig& cfg,
                          std::uint64_t seed) {
  PlantSpec plant;
  plant.seed = seed;
  ModelParams theta = init_planted(vocab, cfg, plant);
  Rng rng(mix_seed(seed, 0xabcULL));
  theta.for_each_tensor([&](const char*, auto& t) { randomize(t, rng, 0.3); });
  return theta;
}

bool params_identical(const ModelParams& a, const ModelParams& b) {
  bool same = true;
  same = same && (a.embedding - b.embedding).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.positional - b.positional).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.wq - b.wq).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.wk - b.wk).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.wv - b.wv).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.wo - b.wo).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.a1 - b.a1).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.b1 - b.b1).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.a2 - b.a2).cwiseAbs().maxCoeff() == 0.0;
  same = same && (a.b2 - b.b2).cwiseAbs().maxCoeff() == 0.0;
  return same;
}

}  // namespace

TEST_CASE("cross entropy: hand values and clamping") {
  Vector p(2);
  p << 0.5, 0.5;
  CHECK(cross_entropy(p, 0) == Catch::Approx(0.6931471805599453));
  p << 1.0, 0.0;
  CHECK(cross_entropy(p, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(cross_entropy(p, 1) == Catch::Approx(-std::log(1e-12)));
  p << 0.2, 0.8;
  CHECK(cross_entropy(p, 1) == Catch::Approx(0.2231435513).epsilon(1e-8));
  CHECK_THROWS_AS(cross_entropy(p, 2), Error);
  CHECK_THROWS_AS(cross_entropy(p, -1), Error);
}

TEST_CASE("cosine distance: angles 90/0/60 and the antipodal case") {
  Vector a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  CHECK(cosine_distance(a, b) == Catch::Approx(1.0));
  CHECK(cosine_distance(a, a) == Catch::Approx(0.0).margin(1e-15));
  b << 0.5, std::sqrt(3.0) / 2.0;  // 60 degrees
  CHECK(cosine_distance(a, b) == Catch::Approx(0.5));
  b << -1, 0;
  CHECK(cosine_distance(a, b) == Catch::Approx(2.0));
  b << 0, 0;
  CHECK(cosine_distance(a, b) == 1.0);  // zero-vector guard
}

TEST_CASE("reg_co: zero at the anchor, recomputation oracle elsewhere") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 3);
  const Dataset pool = generate_pool(tiny_gen(), v,
                                     {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                     20, 5);
  for (const auto& ex : pool.examples)
    CHECK(reg_co(theta0, theta0, ex, v, cfg) == Catch::Approx(0.0).margin(1e-12));

  const ModelParams theta = random_params(v, cfg, 7);
  const ClassifierHead zero_head = ClassifierHead::zeros(cfg.n_classes, cfg.d);
  for (const auto& ex : pool.examples) {
    const ForwardCache now = forward_sentence(theta, zero_head, nullptr, ex, v, cfg);
    const ForwardCache anchor = forward_sentence(theta0, zero_head, nullptr, ex, v, cfg);
    double expected = 0.0;
    for (std::size_t m = 0; m < ex.tokens.size(); ++m) {
      const Vector u = now.hidden.row(now.first_word + int(m));
      const Vector w = anchor.hidden.row(anchor.first_word + int(m));
      expected += 1.0 - u.dot(w) / (u.norm() * w.norm());
    }
    const double got = reg_co(theta, theta0, ex, v, cfg);
    CHECK(got == Catch::Approx(expected).margin(1e-12));
    CHECK(got >= 0.0);
    CHECK(got <= 2.0 * double(ex.tokens.size()));
  }
}

TEST_CASE("reg_cp: squared parameter drift") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 11);
  CHECK(reg_cp(theta0, theta0) == 0.0);

  ModelParams theta = theta0;
  theta.wq(1, 2) += 3.0;
  CHECK(reg_cp(theta, theta0) == Catch::Approx(9.0));
  theta.b1[0] += 1.0;
  theta.b2[3] -= 2.0;
  CHECK(reg_cp(theta, theta0) == Catch::Approx(9.0 + 5.0));
}

TEST_CASE("total loss: method relations and composition oracle") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 13);
  const ModelParams theta = random_params(v, cfg, 17);
  Rng rng(19);
  ClassifierHead head = ClassifierHead::zeros(cfg.n_classes, cfg.d);
  randomize(head.w, rng, 0.5);
  randomize(head.b, rng, 0.5);
  const Dataset pool = generate_pool(tiny_gen(), v,
                                     {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                     8, 23);
  const std::vector<Example>& batch = pool.examples;

  const double standard =
      total_loss(Method::Standard, theta, head, nullptr, theta0, batch, 0.0, v, cfg);
  CHECK(total_loss(Method::NflCp, theta, head, nullptr, theta0, batch, 0.0, v, cfg) ==
        Catch::Approx(standard));
  CHECK(total_loss(Method::NflCo, theta0, head, nullptr, theta0, batch, 5.0, v, cfg) ==
        Catch::Approx(total_loss(Method::Standard, theta0, head, nullptr, theta0,
                                 batch, 0.0, v, cfg)).margin(1e-12));

  // mean CE + lambda * reg, recomputed from the parts
  double mean_ce = 0.0, mean_reg = 0.0;
  for (const auto& ex : batch) {
    mean_ce += cross_entropy(
        forward_sentence(theta, head, nullptr, ex, v, cfg).probs, ex.label);
    mean_reg += reg_co(theta, theta0, ex, v, cfg);
  }
  mean_ce /= double(batch.size());
  mean_reg /= double(batch.size());
  CHECK(total_loss(Method::NflCo, theta, head, nullptr, theta0, batch, 2.0, v, cfg) ==
        Catch::Approx(mean_ce + 2.0 * mean_reg).margin(1e-12));
  CHECK(total_loss(Method::NflCp, theta, head, nullptr, theta0, batch, 2.0, v, cfg) ==
        Catch::Approx(mean_ce + 2.0 * reg_cp(theta, theta0)).margin(1e-10));
  CHECK_THROWS_AS(
      total_loss(Method::Standard, theta, head, nullptr, theta0, {}, 0.0, v, cfg),
      Error);
}

TEST_CASE("backward: trainable sets per method") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 29);
  ClassifierHead head = ClassifierHead::zeros(cfg.n_classes, cfg.d);
  const PromptParams prompts = init_prompts(cfg, 31);
  const Dataset pool = generate_pool(tiny_gen(), v,
                                     {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                     4, 37);

  const Gradients gf = backward(Method::NflF, theta0, head, &prompts, theta0,
                                pool.examples, 0.0, v, cfg);
  CHECK_FALSE(gf.has_theta);
  CHECK_FALSE(gf.has_prompts);

  const Gradients gp = backward(Method::NflPt, theta0, head, &prompts, theta0,
                                pool.examples, 0.0, v, cfg);
  CHECK_FALSE(gp.has_theta);
  CHECK(gp.has_prompts);

  for (Method m : {Method::Standard, Method::NflCo, Method::NflCp}) {
    const Gradients g =
        backward(m, theta0, head, &prompts, theta0, pool.examples, 0.5, v, cfg);
    CHECK(g.has_theta);
    CHECK_FALSE(g.has_prompts);
  }
}

TEST_CASE("backward: reg_cp contribution equals 2 lambda drift exactly") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 41);
  ModelParams theta = theta0;
  theta.wk(0, 0) += 3.0;
  ClassifierHead head = ClassifierHead::zeros(cfg.n_classes, cfg.d);
  const Dataset pool = generate_pool(tiny_gen(), v,
                                     {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                     4, 43);
  const double lambda = 0.7;
  const Gradients with_reg =
      backward(Method::NflCp, theta, head, nullptr, theta0, pool.examples, lambda, v, cfg);
  const Gradients without =
      backward(Method::Standard, theta, head, nullptr, theta0, pool.examples, 0.0, v, cfg);
  CHECK(with_reg.theta.wk(0, 0) - without.theta.wk(0, 0) ==
        Catch::Approx(2.0 * lambda * 3.0).margin(1e-12));
}

TEST_CASE("gradient oracle: every method matches finite differences") {
  for (Method m : {Method::Standard, Method::NflF, Method::NflCo, Method::NflCp,
                   Method::NflPt}) {
    const double err = finite_diff_check(m, 1234);
    INFO("method " << method_name(m));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("adam: zero gradient is a no-op, first step moves by about lr") {
  std::vector<double> param{0.0};
  std::vector<double> grad{0.0};
  std::vector<TensorRef> params{{param.data(), 1}};
  std::vector<TensorRef> grads{{grad.data(), 1}};
  OptimizerState state = OptimizerState::zeros(params);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;

  adam_step(params, grads, state, cfg);
  CHECK(param[0] == 0.0);
  CHECK(state.step == 1);

  grad[0] = 1.0;
  adam_step(params, grads, state, cfg);

  // on a fresh optimizer the very first update has magnitude ~ lr
  std::vector<double> fresh_param{0.0};
  std::vector<TensorRef> fresh_params{{fresh_param.data(), 1}};
  OptimizerState fresh_state = OptimizerState::zeros(fresh_params);
  adam_step(fresh_params, grads, fresh_state, cfg);
  CHECK(fresh_param[0] == Catch::Approx(-1e-3).epsilon(1e-4));

  // replay from a saved state reproduces the trajectory bit for bit
  std::vector<double> p2{0.0};
  std::vector<double> g2{0.0};
  std::vector<TensorRef> ps2{{p2.data(), 1}};
  std::vector<TensorRef> gs2{{g2.data(), 1}};
  OptimizerState s2 = OptimizerState::zeros(ps2);
  adam_step(ps2, gs2, s2, cfg);
  g2[0] = 1.0;
  adam_step(ps2, gs2, s2, cfg);
  CHECK(p2[0] == param[0]);
}

TEST_CASE("training: zero epochs returns the initialization") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 47);
  const Dataset pool = generate_pool(tiny_gen(), v,
                                     {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                     16, 53);
  TrainConfig tc;
  tc.epochs = 0;
  const TrainedModel m = train(theta0, v, cfg, pool, tc);
  CHECK(params_identical(m.theta, theta0));
  CHECK(m.head.w.isZero(0.0));
  CHECK(m.head.b.isZero(0.0));
  CHECK(m.history.empty());
}

TEST_CASE("training: identical seeds give byte-identical saved models") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 59);
  const Dataset pool = generate_pool(tiny_gen(), v,
                                     {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                     32, 61);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.seed = 99;
  const TrainedModel a = train(theta0, v, cfg, pool, tc);
  const TrainedModel b = train(theta0, v, cfg, pool, tc);
  ModelBundle ba{a.theta, a.head, a.prompts, cfg};
  ModelBundle bb{b.theta, b.head, b.prompts, cfg};
  save_model(ba, "test_train_a.model");
  save_model(bb, "test_train_b.model");
  CHECK(read_text_file("test_train_a.model") == read_text_file("test_train_b.model"));
  CHECK(format_train_log(a) == format_train_log(b));
}

TEST_CASE("frozen language model stays byte-identical under nfl-f and nfl-pt",
          "[property]") {
  const GeneratorConfig gcfg = tiny_gen();
  const Vocabulary v = build_vocabulary(gcfg);
  const ModelConfig cfg = tiny_model();
  for (int c = 0; c < 100; ++c) {
    const ModelParams theta0 = random_params(v, cfg, mix_seed(67, c));
    const Dataset pool = generate_pool(gcfg, v,
                                       {v.id_of("topic0_00"), v.id_of("topic0_01"), 0.3},
                                       12, mix_seed(71, c));
    TrainConfig tc;
    tc.method = (c % 2 == 0) ? Method::NflF : Method::NflPt;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.seed = mix_seed(73, c);
    const TrainedModel m = train(theta0, v, cfg, pool, tc);
    CHECK(params_identical(m.theta, theta0));
    CHECK(params_identical(m.theta0, theta0));
    if (tc.method == Method::NflPt) {
      REQUIRE(m.prompts.has_value());
      // prompts and head move unless every gradient was zero
      CHECK((m.prompts->prompts - init_prompts(cfg, tc.seed).prompts)
                .cwiseAbs()
                .maxCoeff() > 0.0);
    }
  }
}

TEST_CASE("training on the benchmark biased split reaches the recorded accuracy") {
  BenchConfig bench = BenchConfig::defaults();
  const Vocabulary v = build_vocabulary(bench.gen);
  const BiasSpec bias{v.id_of(bench.spurious_positive_surface),
                      v.id_of(bench.spurious_negative_surface), bench.rho};
  const Dataset pool = generate_pool(bench.gen, v, bias, bench.gen.train_size,
                                     mix_seed(bench.seed, 101));
  const Dataset biased = apply_bias_filter(pool, bias);
  PlantSpec plant = bench.plant;
  plant.seed = mix_seed(bench.seed, 505);
  const ModelParams theta0 = init_planted(v, bench.model, plant);
  TrainConfig tc;
  tc.method = Method::Standard;
  tc.epochs = bench.epochs;
  tc.batch_size = bench.batch_size;
  tc.learning_rate = bench.learning_rate;
  tc.seed = mix_seed(bench.seed, 601);
  const TrainedModel m = train(theta0, v, bench.model, biased, tc);
  REQUIRE_FALSE(m.history.empty());
  CHECK(m.history.back().accuracy >= 0.95);
}

TEST_CASE("training rejects empty datasets and bad configs") {
  const Vocabulary v = build_vocabulary(tiny_gen());
  const ModelConfig cfg = tiny_model();
  const ModelParams theta0 = random_params(v, cfg, 79);
  Dataset empty;
  CHECK_THROWS_AS(train(theta0, v, cfg, empty, TrainConfig{}), Error);
  TrainConfig bad;
  bad.lambda = -1.0;
  Dataset one;
  one.examples.push_back(Example{{4}, 0});
  CHECK_THROWS_AS(train(theta0, v, cfg, one, bad), Error);
}
