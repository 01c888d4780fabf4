#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "spurlab/common.hpp"
#include "spurlab/corpus.hpp"
#include "spurlab/model.hpp"

namespace spurlab {

enum class Method { Standard, NflF, NflCo, NflCp, NflPt };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Standard: return "standard";
    case Method::NflF: return "nfl-f";
    case Method::NflCo: return "nfl-co";
    case Method::NflCp: return "nfl-cp";
    case Method::NflPt: return "nfl-pt";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "standard") return Method::Standard;
  if (s == "nfl-f") return Method::NflF;
  if (s == "nfl-co") return Method::NflCo;
  if (s == "nfl-cp") return Method::NflCp;
  if (s == "nfl-pt") return Method::NflPt;
  fail("config", "unknown method: " + s);
}

inline bool method_trains_language_model(Method m) {
  return m == Method::Standard || m == Method::NflCo || m == Method::NflCp;
}
inline bool method_uses_prompts(Method m) { return m == Method::NflPt; }

inline double default_lambda(Method m) {
  if (m == Method::NflCo) return 1.0;
  if (m == Method::NflCp) return 0.1;
  return 0.0;
}

struct TrainConfig {
  Method method = Method::Standard;
  double lambda = 0.0;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (lambda < 0.0) fail("config", "lambda must be >= 0");
    if (epochs < 0 || batch_size < 1) fail("config", "epochs/batch out of range");
    if (learning_rate <= 0.0) fail("config", "learning rate must be positive");
  }
};

inline double cross_entropy(const Vector& probs, int label) {
  if (label < 0 || label >= probs.size())
    fail("train", "label out of range: " + std::to_string(label));
  return -std::log(std::max(probs[label], 1e-12));
}

inline double cosine_distance(const Vector& u, const Vector& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu < 1e-12 || nv < 1e-12) return 1.0;
  return 1.0 - u.dot(v) / (nu * nv);
}

// Eq-style output anchor: sum of cosine distances between the per-position
// block outputs under theta and under theta0, word positions only.
inline double reg_co(const ModelParams& theta, const ModelParams& theta0,
                     const Example& ex, const Vocabulary& vocab,
                     const ModelConfig& cfg) {
  const ClassifierHead head = ClassifierHead::zeros(cfg.n_classes, cfg.d);
  const ForwardCache now = forward_sentence(theta, head, nullptr, ex, vocab, cfg);
  const ForwardCache anchor = forward_sentence(theta0, head, nullptr, ex, vocab, cfg);
  double sum = 0.0;
  for (int i = now.first_word; i < now.first_word + static_cast<int>(ex.tokens.size()); ++i)
    sum += cosine_distance(now.hidden.row(i), anchor.hidden.row(i));
  return sum;
}

// Parameter anchor: squared drift over every language-model tensor.
inline double reg_cp(const ModelParams& theta, const ModelParams& theta0) {
  if (!theta.same_shape(theta0)) fail("train", "reg_cp: shape mismatch");
  double sum = 0.0;
  sum += (theta.embedding - theta0.embedding).squaredNorm();
  sum += (theta.positional - theta0.positional).squaredNorm();
  sum += (theta.wq - theta0.wq).squaredNorm();
  sum += (theta.wk - theta0.wk).squaredNorm();
  sum += (theta.wv - theta0.wv).squaredNorm();
  sum += (theta.wo - theta0.wo).squaredNorm();
  sum += (theta.a1 - theta0.a1).squaredNorm();
  sum += (theta.b1 - theta0.b1).squaredNorm();
  sum += (theta.a2 - theta0.a2).squaredNorm();
  sum += (theta.b2 - theta0.b2).squaredNorm();
  return sum;
}

struct Gradients {
  ModelParams theta;       // valid iff has_theta
  ClassifierHead head;
  Matrix prompts;          // valid iff has_prompts
  bool has_theta = false;
  bool has_prompts = false;

  static Gradients zeros(const ModelParams& like, const ClassifierHead& head_like,
                         const PromptParams* prompt_like, Method method) {
    Gradients g;
    g.has_theta = method_trains_language_model(method);
    g.has_prompts = method_uses_prompts(method) && prompt_like != nullptr;
    if (g.has_theta) {
      g.theta.embedding = Matrix::Zero(like.embedding.rows(), like.embedding.cols());
      g.theta.positional = Matrix::Zero(like.positional.rows(), like.positional.cols());
      const int d = like.dim();
      g.theta.wq = Matrix::Zero(d, d);
      g.theta.wk = Matrix::Zero(d, d);
      g.theta.wv = Matrix::Zero(d, d);
      g.theta.wo = Matrix::Zero(d, d);
      g.theta.a1 = Matrix::Zero(d, d);
      g.theta.b1 = Vector::Zero(d);
      g.theta.a2 = Matrix::Zero(d, d);
      g.theta.b2 = Vector::Zero(d);
    }
    g.head.w = Matrix::Zero(head_like.w.rows(), head_like.w.cols());
    g.head.b = Vector::Zero(head_like.b.size());
    if (g.has_prompts)
      g.prompts = Matrix::Zero(prompt_like->prompts.rows(), prompt_like->prompts.cols());
    return g;
  }

  void check_finite() const {
    auto chk = [](const char* name, const Matrix& m) {
      if (!m.allFinite())
        fail("train", std::string("non-finite gradient in tensor ") + name);
    };
    if (has_theta)
      theta.for_each_tensor([&](const char* name, const auto& t) { chk(name, Matrix(t)); });
    chk("W", head.w);
    chk("bias", Matrix(head.b));
    if (has_prompts) chk("P", prompts);
  }
};

namespace detail {

// Backpropagates dlogits (and an optional extra dL/dhidden term) through one
// cached forward pass. Parameter gradients accumulate into grads; frozen
// tensors are simply skipped.
inline void backward_cached(const ModelParams& theta, const ClassifierHead& head,
                            const ForwardCache& c, const Vector& dlogits,
                            const Matrix* dhidden_extra, Gradients& grads) {
  const int L = static_cast<int>(c.slots.size());
  const int d = theta.dim();

  grads.head.w += dlogits * c.pooled.transpose();
  grads.head.b += dlogits;
  const Vector dpooled = head.w.transpose() * dlogits;

  Matrix dhidden = Matrix::Zero(L, d);
  if (c.pooling == Pooling::BosPosition) {
    dhidden.row(0) = dpooled.transpose();
  } else {
    int n = 0;
    for (int i = 0; i < L; ++i)
      if (c.active[i]) ++n;
    for (int i = 0; i < L; ++i)
      if (c.active[i]) dhidden.row(i) = dpooled.transpose() / static_cast<double>(n);
  }
  if (dhidden_extra) dhidden += *dhidden_extra;

  const bool theta_grads = grads.has_theta;

  // MLP: h = a + tanh(a A1^T + b1) A2^T + b2
  Matrix dpost = dhidden;
  const Matrix dtanh = dhidden * theta.a2;
  const Matrix du = dtanh.cwiseProduct(Matrix::Ones(L, d) - c.tanh_act.cwiseProduct(c.tanh_act));
  dpost += du * theta.a1;
  if (theta_grads) {
    grads.theta.a2 += dhidden.transpose() * c.tanh_act;
    grads.theta.b2 += dhidden.colwise().sum().transpose();
    grads.theta.a1 += du.transpose() * c.post_attn;
    grads.theta.b1 += du.colwise().sum().transpose();
  }

  // Attention: a = e + (attn (e Wv^T)) Wo^T
  Matrix dinputs = dpost;
  const Matrix dcontext = dpost * theta.wo;
  if (theta_grads) grads.theta.wo += dpost.transpose() * c.context;

  Matrix dattn = dcontext * c.values.transpose();
  const Matrix dvalues = c.attn.transpose() * dcontext;

  Matrix dscores = Matrix::Zero(L, L);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < L; ++i) {
    const double dot = c.attn.row(i).dot(dattn.row(i));
    dscores.row(i) =
        (c.attn.row(i).array() * (dattn.row(i).array() - dot)).matrix();
  }
  const Matrix dqueries = scale * dscores * c.keys;
  const Matrix dkeys = scale * dscores.transpose() * c.queries;

  dinputs += dqueries * theta.wq + dkeys * theta.wk + dvalues * theta.wv;
  if (theta_grads) {
    grads.theta.wq += dqueries.transpose() * c.inputs;
    grads.theta.wk += dkeys.transpose() * c.inputs;
    grads.theta.wv += dvalues.transpose() * c.inputs;
  }

  for (int i = 0; i < L; ++i) {
    if (theta_grads) grads.theta.positional.row(i) += dinputs.row(i);
    const InputSlot& s = c.slots[i];
    if (s.prompt >= 0) {
      if (grads.has_prompts) grads.prompts.row(s.prompt) += dinputs.row(i);
    } else if (theta_grads) {
      grads.theta.embedding.row(s.token) += dinputs.row(i);
    }
  }
}

// d cos-dist(u, v0) / du with v0 fixed; zero at the guard.
inline Vector cosine_distance_grad(const Vector& u, const Vector& v0) {
  const double nu = u.norm(), nv = v0.norm();
  if (nu < 1e-12 || nv < 1e-12) return Vector::Zero(u.size());
  return -(v0 / (nu * nv) - u.dot(v0) * u / (nu * nu * nu * nv));
}

}  // namespace detail

// Mean cross-entropy over the batch plus the method's regularizer.
inline double total_loss(Method method, const ModelParams& theta,
                         const ClassifierHead& head, const PromptParams* prompts,
                         const ModelParams& theta0,
                         const std::vector<Example>& batch, double lambda,
                         const Vocabulary& vocab, const ModelConfig& cfg) {
  if (batch.empty()) fail("train", "empty batch");
  double ce = 0.0, reg = 0.0;
  const PromptParams* used_prompts = method_uses_prompts(method) ? prompts : nullptr;
  for (const auto& ex : batch) {
    const ForwardCache c = forward_sentence(theta, head, used_prompts, ex, vocab, cfg);
    ce += cross_entropy(c.probs, ex.label);
    if (method == Method::NflCo && lambda != 0.0)
      reg += reg_co(theta, theta0, ex, vocab, cfg);
  }
  ce /= static_cast<double>(batch.size());
  double loss = ce;
  if (method == Method::NflCo) loss += lambda * reg / static_cast<double>(batch.size());
  if (method == Method::NflCp) loss += lambda * reg_cp(theta, theta0);
  return loss;
}

// Exact analytic gradients of total_loss for the method's trainable set.
// Also reports batch statistics for the training log.
inline Gradients backward(Method method, const ModelParams& theta,
                          const ClassifierHead& head, const PromptParams* prompts,
                          const ModelParams& theta0,
                          const std::vector<Example>& batch, double lambda,
                          const Vocabulary& vocab, const ModelConfig& cfg,
                          double* out_loss = nullptr, int* out_correct = nullptr) {
  if (batch.empty()) fail("train", "empty batch");
  const PromptParams* used_prompts = method_uses_prompts(method) ? prompts : nullptr;
  Gradients grads = Gradients::zeros(theta, head, used_prompts, method);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  int correct = 0;
  const ClassifierHead zero_head = ClassifierHead::zeros(cfg.n_classes, cfg.d);

  for (const auto& ex : batch) {
    const ForwardCache c = forward_sentence(theta, head, used_prompts, ex, vocab, cfg);
    loss += inv_n * cross_entropy(c.probs, ex.label);
    int pred = 0;
    c.probs.maxCoeff(&pred);  // Eigen picks the first maximum: lower class wins ties
    if (pred == ex.label) ++correct;

    Vector dlogits = c.probs;
    dlogits[ex.label] -= 1.0;
    dlogits *= inv_n;

    std::optional<Matrix> dhidden_extra;
    if (method == Method::NflCo && lambda != 0.0) {
      const ForwardCache anchor = forward_sentence(theta0, zero_head, nullptr, ex, vocab, cfg);
      // the anchor pass and the training pass share position indices
      // (no prompts in either for nfl-co)
      dhidden_extra.emplace(Matrix::Zero(c.hidden.rows(), c.hidden.cols()));
      for (int i = c.first_word; i < c.first_word + static_cast<int>(ex.tokens.size()); ++i) {
        loss += inv_n * lambda * cosine_distance(c.hidden.row(i), anchor.hidden.row(i));
        dhidden_extra->row(i) =
            inv_n * lambda *
            detail::cosine_distance_grad(c.hidden.row(i), anchor.hidden.row(i)).transpose();
      }
    }
    detail::backward_cached(theta, head, c, dlogits,
                            dhidden_extra ? &*dhidden_extra : nullptr, grads);
  }

  if (method == Method::NflCp && lambda != 0.0) {
    loss += lambda * reg_cp(theta, theta0);
    grads.theta.embedding += 2.0 * lambda * (theta.embedding - theta0.embedding);
    grads.theta.positional += 2.0 * lambda * (theta.positional - theta0.positional);
    grads.theta.wq += 2.0 * lambda * (theta.wq - theta0.wq);
    grads.theta.wk += 2.0 * lambda * (theta.wk - theta0.wk);
    grads.theta.wv += 2.0 * lambda * (theta.wv - theta0.wv);
    grads.theta.wo += 2.0 * lambda * (theta.wo - theta0.wo);
    grads.theta.a1 += 2.0 * lambda * (theta.a1 - theta0.a1);
    grads.theta.b1 += 2.0 * lambda * (theta.b1 - theta0.b1);
    grads.theta.a2 += 2.0 * lambda * (theta.a2 - theta0.a2);
    grads.theta.b2 += 2.0 * lambda * (theta.b2 - theta0.b2);
  }

  grads.check_finite();
  if (out_loss) *out_loss = loss;
  if (out_correct) *out_correct = correct;
  return grads;
}

// ---- optimizer ------------------------------------------------------------

struct TensorRef {
  double* data = nullptr;
  long size = 0;
};

// Trainable tensors in a fixed order; the optimizer state and flattened
// views all follow this order.
inline std::vector<TensorRef> trainable_refs(Method method, ModelParams& theta,
                                             ClassifierHead& head,
                                             PromptParams* prompts) {
  std::vector<TensorRef> refs;
  auto add = [&](auto& t) { refs.push_back({t.data(), static_cast<long>(t.size())}); };
  if (method_trains_language_model(method))
    theta.for_each_tensor([&](const char*, auto& t) { add(t); });
  add(head.w);
  add(head.b);
  if (method_uses_prompts(method) && prompts) add(prompts->prompts);
  return refs;
}

inline std::vector<TensorRef> gradient_refs(Gradients& g) {
  std::vector<TensorRef> refs;
  auto add = [&](auto& t) { refs.push_back({t.data(), static_cast<long>(t.size())}); };
  if (g.has_theta)
    g.theta.for_each_tensor([&](const char*, auto& t) { add(t); });
  add(g.head.w);
  add(g.head.b);
  if (g.has_prompts) add(g.prompts);
  return refs;
}

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  long step = 0;

  static OptimizerState zeros(const std::vector<TensorRef>& refs) {
    OptimizerState s;
    for (const auto& r : refs) {
      s.first_moment.emplace_back(r.size, 0.0);
      s.second_moment.emplace_back(r.size, 0.0);
    }
    return s;
  }
};

inline void adam_step(std::vector<TensorRef>& params,
                      const std::vector<TensorRef>& grads, OptimizerState& state,
                      const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    fail("train", "adam: tensor list mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size != grads[t].size) fail("train", "adam: shape mismatch");
    double* p = params[t].data;
    const double* g = grads[t].data;
    double* m = state.first_moment[t].data();
    double* v = state.second_moment[t].data();
    for (long i = 0; i < params[t].size; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---- training loop --------------------------------------------------------

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainedModel {
  ModelParams theta;
  ClassifierHead head;
  std::optional<PromptParams> prompts;
  ModelParams theta0;
  Method method = Method::Standard;
  std::vector<EpochStats> history;
};

inline PromptParams init_prompts(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7a0b7ULL));
  Matrix p(cfg.prompt_count, cfg.d);
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = 0.1 * rng.normal();
  return {p};
}

inline TrainedModel train(const ModelParams& theta0, const Vocabulary& vocab,
                          const ModelConfig& model_cfg, const Dataset& data,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (data.examples.empty()) fail("train", "dataset is empty");
  if (method_uses_prompts(cfg.method) && model_cfg.prompt_count < 1)
    fail("train", "nfl-pt requires prompt_count >= 1");

  TrainedModel model;
  model.method = cfg.method;
  model.theta0 = theta0;
  model.theta = theta0;
  model.head = ClassifierHead::zeros(model_cfg.n_classes, model_cfg.d);
  if (method_uses_prompts(cfg.method))
    model.prompts = init_prompts(model_cfg, cfg.seed);

  PromptParams* prompts = model.prompts ? &*model.prompts : nullptr;
  std::vector<TensorRef> params = trainable_refs(cfg.method, model.theta, model.head, prompts);
  OptimizerState state = OptimizerState::zeros(params);

  std::vector<std::size_t> order(data.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t k = order.size() - 1; k > 0; --k)
      std::swap(order[k], order[shuffle_rng.uniform_int(0, static_cast<std::int64_t>(k))]);

    double epoch_loss = 0.0;
    long epoch_correct = 0;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<Example> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i)
        batch.push_back(data.examples[order[i]]);
      double loss = 0.0;
      int correct = 0;
      Gradients grads = backward(cfg.method, model.theta, model.head, prompts,
                                 theta0, batch, cfg.lambda, vocab, model_cfg,
                                 &loss, &correct);
      if (!std::isfinite(loss))
        fail("train", std::string("training diverged (method ") +
                          method_name(cfg.method) + ")");
      std::vector<TensorRef> grefs = gradient_refs(grads);
      adam_step(params, grefs, state, cfg);
      epoch_loss += loss;
      epoch_correct += correct;
      ++batches;
    }
    model.history.push_back({epoch, epoch_loss / static_cast<double>(batches),
                             static_cast<double>(epoch_correct) /
                                 static_cast<double>(order.size())});
  }
  return model;
}

inline std::string format_train_log(const TrainedModel& model) {
  std::string out = "epoch\tloss\ttrain_acc\n";
  for (const auto& e : model.history)
    out += std::to_string(e.epoch) + "\t" + format_double(e.loss) + "\t" +
           format_double(e.accuracy) + "\n";
  return out;
}

// ---- gradient oracle ------------------------------------------------------

// Builds a small random instance and compares analytic gradients against
// central finite differences for every trainable coordinate.
inline double finite_diff_check(Method method, std::uint64_t instance_seed,
                                double step = 1e-5) {
  GeneratorConfig gcfg;
  gcfg.n_genuine_positive = 4;
  gcfg.n_genuine_negative = 4;
  gcfg.n_topics = 1;
  gcfg.topic_size = 4;
  gcfg.n_filler = 4;
  gcfg.min_length = 5;
  gcfg.max_length = 5;
  gcfg.max_genuine = 2;
  gcfg.max_topic = 2;
  const Vocabulary vocab = build_vocabulary(gcfg);  // |V| = 20

  ModelConfig mcfg;
  mcfg.d = 8;
  mcfg.max_positions = 12;
  mcfg.prompt_count = method_uses_prompts(method) ? 3 : 0;

  Rng rng(mix_seed(instance_seed, 0xfdc3ULL));
  auto randomize = [&](Matrix& m, double s) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = s * rng.normal();
  };
  auto randomize_vec = [&](Vector& v, double s) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = s * rng.normal();
  };

  ModelParams theta;
  theta.embedding.resize(vocab.size(), mcfg.d);
  theta.positional.resize(mcfg.max_positions, mcfg.d);
  randomize(theta.embedding, 0.8);
  randomize(theta.positional, 0.2);
  theta.wq.resize(mcfg.d, mcfg.d);
  theta.wk.resize(mcfg.d, mcfg.d);
  theta.wv.resize(mcfg.d, mcfg.d);
  theta.wo.resize(mcfg.d, mcfg.d);
  theta.a1.resize(mcfg.d, mcfg.d);
  theta.a2.resize(mcfg.d, mcfg.d);
  theta.b1.resize(mcfg.d);
  theta.b2.resize(mcfg.d);
  randomize(theta.wq, 0.4);
  randomize(theta.wk, 0.4);
  randomize(theta.wv, 0.4);
  randomize(theta.wo, 0.4);  // nonzero so every backward path is exercised
  randomize(theta.a1, 0.4);
  randomize(theta.a2, 0.4);
  randomize_vec(theta.b1, 0.2);
  randomize_vec(theta.b2, 0.2);

  ModelParams theta0 = theta;
  randomize(theta0.embedding, 0.8);  // distinct anchor so reg terms are active

  ClassifierHead head = ClassifierHead::zeros(mcfg.n_classes, mcfg.d);
  randomize(head.w, 0.5);
  randomize_vec(head.b, 0.2);

  std::optional<PromptParams> prompts;
  if (method_uses_prompts(method)) {
    Matrix p(mcfg.prompt_count, mcfg.d);
    randomize(p, 0.5);
    prompts = PromptParams{p};
  }

  const BiasSpec bias{vocab.id_of("topic0_00"), vocab.id_of("topic0_01"), 0.3};
  Dataset data = generate_pool(gcfg, vocab, bias, 2, instance_seed);
  const double lambda = 0.7;

  PromptParams* pp = prompts ? &*prompts : nullptr;
  Gradients grads = backward(method, theta, head, pp, theta0, data.examples,
                             lambda, vocab, mcfg);

  std::vector<TensorRef> params = trainable_refs(method, theta, head, pp);
  std::vector<TensorRef> grefs = gradient_refs(grads);

  double max_rel = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (long i = 0; i < params[t].size; ++i) {
      double* x = &params[t].data[i];
      const double saved = *x;
      *x = saved + step;
      const double up = total_loss(method, theta, head, pp, theta0,
                                   data.examples, lambda, vocab, mcfg);
      *x = saved - step;
      const double down = total_loss(method, theta, head, pp, theta0,
                                     data.examples, lambda, vocab, mcfg);
      *x = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = grefs[t].data[i];
      const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace spurlab
