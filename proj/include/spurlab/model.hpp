#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "spurlab/common.hpp"
#include "spurlab/corpus.hpp"

namespace spurlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Pooling { BosPosition, MeanPool };

struct ModelConfig {
  int d = 32;
  int max_positions = 16;
  int n_classes = 2;
  int prompt_count = 4;  // used by nfl-pt only
  Pooling pooling = Pooling::BosPosition;

  void validate() const {
    if (d < 2) fail("config", "embedding dimension must be >= 2");
    if (n_classes < 2) fail("config", "need at least 2 classes");
    if (max_positions < 3) fail("config", "max positions too small");
    if (prompt_count < 0) fail("config", "prompt count must be >= 0");
  }
};

// The language model theta: embeddings plus one attention block with a
// position-wise tanh MLP, both on the residual stream.
struct ModelParams {
  Matrix embedding;   // |V| x d
  Matrix positional;  // max_positions x d
  Matrix wq, wk, wv, wo;  // d x d
  Matrix a1;          // d x d
  Vector b1;          // d
  Matrix a2;          // d x d
  Vector b2;          // d

  int dim() const { return static_cast<int>(embedding.cols()); }
  int vocab_size() const { return static_cast<int>(embedding.rows()); }

  bool same_shape(const ModelParams& o) const {
    return embedding.rows() == o.embedding.rows() &&
           embedding.cols() == o.embedding.cols() &&
           positional.rows() == o.positional.rows();
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("E", embedding);
    fn("Pos", positional);
    fn("Wq", wq);
    fn("Wk", wk);
    fn("Wv", wv);
    fn("Wo", wo);
    fn("A1", a1);
    fn("b1", b1);
    fn("A2", a2);
    fn("b2", b2);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&](const char* name, auto& t) { fn(name, std::as_const(t)); });
  }
};

struct ClassifierHead {
  Matrix w;  // C x d
  Vector b;  // C

  static ClassifierHead zeros(int n_classes, int d) {
    return {Matrix::Zero(n_classes, d), Vector::Zero(n_classes)};
  }
};

struct PromptParams {
  Matrix prompts;  // P x d
};

struct PlantSpec {
  double center_scale = 1.0;   // alpha
  double noise = 0.3;          // sigma: expected norm of the noise vector
  double min_angle_deg = 60.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (noise < 0.0) fail("config", "plant noise must be >= 0");
    if (min_angle_deg <= 0.0 || min_angle_deg > 90.0)
      fail("config", "minimum inter-center angle must be in (0, 90] degrees");
  }
};

// Plants "pretrained" token embeddings: one unit-norm center per semantic
// group, tokens scattered around their center. The attention block is the
// identity on the residual stream at initialization (Wo = 0, A2 = 0).
inline ModelParams init_planted(const Vocabulary& vocab, const ModelConfig& cfg,
                                const PlantSpec& plant) {
  cfg.validate();
  plant.validate();
  Rng rng(mix_seed(plant.seed, 0x9147ULL));
  const int d = cfg.d;

  auto random_unit = [&]() {
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return Vector(v / v.norm());
  };

  // Centers: G+, G-, one per topic, F.
  const int n_topics = static_cast<int>(vocab.topic_names.size());
  const int n_centers = 2 + n_topics + 1;
  const double max_cos = std::cos(plant.min_angle_deg * M_PI / 180.0);
  std::vector<Vector> centers;
  int attempts = 0;
  while (static_cast<int>(centers.size()) < n_centers) {
    if (++attempts > 100000)
      fail("plant", "cannot place group centers at the requested angle in d=" +
                        std::to_string(d));
    Vector c = random_unit();
    bool ok = true;
    for (const auto& prev : centers)
      if (c.dot(prev) > max_cos) { ok = false; break; }
    if (ok) centers.push_back(std::move(c));
  }

  auto center_index = [&](TokenId t) -> int {
    const TokenGroup& g = vocab.groups[t];
    switch (g.kind) {
      case GroupKind::GenuinePositive: return 0;
      case GroupKind::GenuineNegative: return 1;
      case GroupKind::Topic: return 2 + g.topic;
      case GroupKind::Filler: return 2 + n_topics;
      case GroupKind::Special: return -1;
    }
    return -1;
  };

  ModelParams p;
  p.embedding.resize(vocab.size(), d);
  const double coord_sigma = plant.noise / std::sqrt(static_cast<double>(d));
  for (TokenId t = 0; t < vocab.size(); ++t) {
    Vector noise(d);
    for (int i = 0; i < d; ++i) noise[i] = coord_sigma * rng.normal();
    const int ci = center_index(t);
    if (ci >= 0)
      p.embedding.row(t) = plant.center_scale * centers[ci].transpose() + noise.transpose();
    else
      p.embedding.row(t) = noise.transpose();
  }
  p.positional = Matrix::Zero(cfg.max_positions, d);
  auto gaussian_matrix = [&](double sigma) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = sigma * rng.normal();
    return m;
  };
  p.wq = gaussian_matrix(0.1);
  p.wk = gaussian_matrix(0.1);
  p.wv = gaussian_matrix(0.1);
  p.wo = Matrix::Zero(d, d);
  p.a1 = gaussian_matrix(0.1);
  p.b1 = Vector::Zero(d);
  p.a2 = Matrix::Zero(d, d);
  p.b2 = Vector::Zero(d);
  return p;
}

// One input position: a vocabulary token or a prompt slot.
struct InputSlot {
  TokenId token = -1;   // >= 0 for vocabulary tokens
  int prompt = -1;      // >= 0 for prompt slots
};

// All intermediates of one forward pass, kept for the backward pass.
struct ForwardCache {
  std::vector<InputSlot> slots;
  std::vector<bool> active;   // false for PAD positions
  Matrix inputs;              // L x d, e_i
  Matrix queries, keys, values;  // L x d
  Matrix attn;                // L x L attention weights (rows sum to 1 on active)
  Matrix context;             // L x d, c_i
  Matrix post_attn;           // L x d, a_i
  Matrix tanh_act;            // L x d, tanh(A1 a_i + b1)
  Matrix hidden;              // L x d, h_i
  Vector pooled;              // d
  Vector logits;              // C
  Vector probs;               // C
  Pooling pooling = Pooling::BosPosition;
  int first_word = 0, n_words = 0;  // word-position span (excludes BOS/EOS/prompts)
};

inline std::vector<InputSlot> make_sequence(const Vocabulary& vocab,
                                            const Example& ex, int prompt_count) {
  std::vector<InputSlot> slots;
  slots.push_back({vocab.bos, -1});
  for (int p = 0; p < prompt_count; ++p) slots.push_back({-1, p});
  for (TokenId t : ex.tokens) slots.push_back({t, -1});
  slots.push_back({vocab.eos, -1});
  return slots;
}

inline ForwardCache forward_sequence(const ModelParams& theta,
                                     const ClassifierHead& head,
                                     const PromptParams* prompts,
                                     const std::vector<InputSlot>& slots,
                                     const Vocabulary& vocab,
                                     const ModelConfig& cfg) {
  const int L = static_cast<int>(slots.size());
  const int d = theta.dim();
  if (L > cfg.max_positions)
    fail("model", "sequence length " + std::to_string(L) +
                      " exceeds max positions " + std::to_string(cfg.max_positions));

  ForwardCache c;
  c.slots = slots;
  c.pooling = cfg.pooling;
  c.active.assign(L, true);
  c.inputs.resize(L, d);
  const int prompt_count = prompts ? static_cast<int>(prompts->prompts.rows()) : 0;
  c.first_word = 1 + prompt_count;
  c.n_words = 0;
  for (int i = 0; i < L; ++i) {
    const InputSlot& s = slots[i];
    if (s.prompt >= 0) {
      if (!prompts || s.prompt >= prompts->prompts.rows())
        fail("model", "prompt slot without prompt parameters");
      c.inputs.row(i) = prompts->prompts.row(s.prompt);
    } else {
      if (s.token < 0 || s.token >= theta.vocab_size())
        fail("model", "token id out of range");
      if (s.token == vocab.pad) c.active[i] = false;
      c.inputs.row(i) = theta.embedding.row(s.token);
    }
    c.inputs.row(i) += theta.positional.row(i);
    if (i >= c.first_word && i + 1 < L && c.active[i]) ++c.n_words;
  }

  c.queries = c.inputs * theta.wq.transpose();
  c.keys = c.inputs * theta.wk.transpose();
  c.values = c.inputs * theta.wv.transpose();

  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  c.attn = Matrix::Zero(L, L);
  for (int i = 0; i < L; ++i) {
    double max_s = -std::numeric_limits<double>::infinity();
    std::vector<double> scores(L, 0.0);
    for (int j = 0; j < L; ++j) {
      if (!c.active[j]) continue;
      scores[j] = scale * c.queries.row(i).dot(c.keys.row(j));
      max_s = std::max(max_s, scores[j]);
    }
    double z = 0.0;
    for (int j = 0; j < L; ++j) {
      if (!c.active[j]) continue;
      c.attn(i, j) = std::exp(scores[j] - max_s);
      z += c.attn(i, j);
    }
    c.attn.row(i) /= z;
  }

  c.context = c.attn * c.values;
  c.post_attn = c.inputs + c.context * theta.wo.transpose();
  c.tanh_act = ((c.post_attn * theta.a1.transpose()).rowwise() + theta.b1.transpose())
                   .array()
                   .tanh();
  c.hidden = c.post_attn + c.tanh_act * theta.a2.transpose();
  c.hidden.rowwise() += theta.b2.transpose();

  if (cfg.pooling == Pooling::BosPosition) {
    c.pooled = c.hidden.row(0);
  } else {
    c.pooled = Vector::Zero(d);
    int n = 0;
    for (int i = 0; i < L; ++i)
      if (c.active[i]) { c.pooled += c.hidden.row(i); ++n; }
    c.pooled /= static_cast<double>(n);
  }

  c.logits = head.w * c.pooled + head.b;
  const double zmax = c.logits.maxCoeff();
  c.probs = (c.logits.array() - zmax).exp();
  c.probs /= c.probs.sum();
  if (!c.probs.allFinite()) fail("model", "non-finite probabilities in forward pass");
  return c;
}

inline ForwardCache forward_sentence(const ModelParams& theta,
                                     const ClassifierHead& head,
                                     const PromptParams* prompts,
                                     const Example& ex, const Vocabulary& vocab,
                                     const ModelConfig& cfg) {
  const int prompt_count = prompts ? static_cast<int>(prompts->prompts.rows()) : 0;
  return forward_sequence(theta, head, prompts, make_sequence(vocab, ex, prompt_count),
                          vocab, cfg);
}

// Representation of a single token via the [BOS] w [EOS] protocol.
inline Vector token_representation(const ModelParams& theta, TokenId token,
                                   const Vocabulary& vocab, const ModelConfig& cfg) {
  if (vocab.is_special(token))
    fail("model", "token_representation on special token: " + vocab.surfaces.at(token));
  const ClassifierHead head = ClassifierHead::zeros(2, theta.dim());
  Example ex{{token}, 0};
  const ForwardCache c = forward_sentence(theta, head, nullptr, ex, vocab, cfg);
  return c.hidden.row(1);
}

// ---- model file ----------------------------------------------------------
// Text header "NFLM1 <|V|> <d> <max-pos> <C> <P>" followed by named tensor
// blocks; floats written with 17 significant digits (round-trip exact).

struct ModelBundle {
  ModelParams theta;
  ClassifierHead head;
  std::optional<PromptParams> prompts;
  ModelConfig config;
};

namespace detail {

inline void append_tensor(std::string& out, const std::string& name,
                          const Matrix& m) {
  out += "tensor " + name + " " + std::to_string(m.rows()) + " " +
         std::to_string(m.cols()) + "\n";
  char buf[64];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index cidx = 0; cidx < m.cols(); ++cidx) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, cidx));
      if (cidx) out += ' ';
      out += buf;
    }
    out += '\n';
  }
}

inline Matrix parse_tensor(std::istringstream& in, const std::string& expect_name) {
  std::string word, name;
  long rows = 0, cols = 0;
  if (!(in >> word >> name >> rows >> cols) || word != "tensor")
    fail("format", "model file: expected tensor block '" + expect_name + "'");
  if (name != expect_name)
    fail("format", "model file: expected tensor '" + expect_name + "', found '" +
                       name + "'");
  if (rows < 0 || cols < 0 || rows * cols > (1L << 28))
    fail("format", "model file: unreasonable tensor shape for " + name);
  Matrix m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      if (!(in >> m(r, c)))
        fail("format", "model file: truncated tensor " + name);
  return m;
}

}  // namespace detail

inline void save_model(const ModelBundle& model, const std::string& path) {
  std::string out = "NFLM1 " + std::to_string(model.theta.vocab_size()) + " " +
                    std::to_string(model.theta.dim()) + " " +
                    std::to_string(model.theta.positional.rows()) + " " +
                    std::to_string(model.head.w.rows()) + " " +
                    std::to_string(model.prompts ? model.prompts->prompts.rows() : 0) +
                    "\n";
  out += std::string("pooling ") +
         (model.config.pooling == Pooling::BosPosition ? "bos" : "mean") + "\n";
  model.theta.for_each_tensor([&](const char* name, const auto& t) {
    detail::append_tensor(out, name, Matrix(t));
  });
  detail::append_tensor(out, "W", model.head.w);
  detail::append_tensor(out, "bias", model.head.b);
  if (model.prompts) detail::append_tensor(out, "P", model.prompts->prompts);
  write_text_file(path, out);
}

inline ModelBundle load_model(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string magic;
  long vsize = 0, d = 0, maxpos = 0, classes = 0, prompt_count = 0;
  if (!(in >> magic) || magic != "NFLM1")
    fail("format", "unrecognized model file: " + path);
  if (!(in >> vsize >> d >> maxpos >> classes >> prompt_count))
    fail("format", "model file: truncated header");
  std::string word, pooling;
  if (!(in >> word >> pooling) || word != "pooling" ||
      (pooling != "bos" && pooling != "mean"))
    fail("format", "model file: bad pooling line");

  ModelBundle m;
  m.config.d = static_cast<int>(d);
  m.config.max_positions = static_cast<int>(maxpos);
  m.config.n_classes = static_cast<int>(classes);
  m.config.prompt_count = static_cast<int>(prompt_count);
  m.config.pooling = pooling == "bos" ? Pooling::BosPosition : Pooling::MeanPool;

  auto check = [&](const char* name, const Matrix& t, long rows, long cols) {
    if (t.rows() != rows || t.cols() != cols)
      fail("format", std::string("model file: shape mismatch in tensor ") + name +
                         " (expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", found " +
                         std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                         ")");
  };
  m.theta.for_each_tensor([&](const char* name, auto& t) {
    Matrix parsed = detail::parse_tensor(in, name);
    long rows = d, cols = d;
    if (std::string(name) == "E") rows = vsize;
    if (std::string(name) == "Pos") rows = maxpos;
    if (std::string(name) == "b1" || std::string(name) == "b2") { rows = d; cols = 1; }
    check(name, parsed, rows, cols);
    t = parsed;
  });
  Matrix w = detail::parse_tensor(in, "W");
  check("W", w, classes, d);
  m.head.w = w;
  Matrix b = detail::parse_tensor(in, "bias");
  check("bias", b, classes, 1);
  m.head.b = b;
  if (prompt_count > 0) {
    Matrix p = detail::parse_tensor(in, "P");
    check("P", p, prompt_count, d);
    m.prompts = PromptParams{p};
  }
  return m;
}

}  // namespace spurlab
