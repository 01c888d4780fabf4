#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spurlab/common.hpp"

namespace spurlab {

using TokenId = int;

enum class GroupKind { GenuinePositive, GenuineNegative, Topic, Filler, Special };

struct TokenGroup {
  GroupKind kind = GroupKind::Filler;
  int topic = -1;  // valid iff kind == Topic

  bool operator==(const TokenGroup&) const = default;

  std::string to_string(const std::vector<std::string>& topic_names) const {
    switch (kind) {
      case GroupKind::GenuinePositive: return "G+";
      case GroupKind::GenuineNegative: return "G-";
      case GroupKind::Topic: return "T:" + topic_names.at(topic);
      case GroupKind::Filler: return "F";
      case GroupKind::Special: return "SPECIAL";
    }
    return "?";
  }
};

struct Vocabulary {
  std::vector<std::string> surfaces;   // indexed by token id
  std::vector<TokenGroup> groups;      // indexed by token id
  std::vector<std::string> topic_names;
  TokenId pad = 0, bos = 1, eos = 2, unk = 3;

  int size() const { return static_cast<int>(surfaces.size()); }
  bool is_special(TokenId t) const {
    return groups.at(t).kind == GroupKind::Special;
  }
  int special_count() const { return 4; }

  TokenId id_of(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) fail("vocab", "unknown token surface: " + surface);
    return it->second;
  }
  std::optional<TokenId> try_id_of(const std::string& surface) const {
    auto it = index_.find(surface);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void rebuild_index() {
    index_.clear();
    for (int i = 0; i < size(); ++i) {
      if (!index_.emplace(surfaces[i], i).second)
        fail("vocab", "duplicate surface: " + surfaces[i]);
    }
  }

 private:
  std::map<std::string, TokenId> index_;
};

struct Example {
  std::vector<TokenId> tokens;  // content tokens only; BOS/EOS added at forward
  int label = 0;

  bool contains(TokenId t) const {
    return std::find(tokens.begin(), tokens.end(), t) != tokens.end();
  }
  bool operator==(const Example&) const = default;
};

enum class Provenance { Pool, Biased, Unbiased, Challenging };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Pool: return "pool";
    case Provenance::Biased: return "biased";
    case Provenance::Unbiased: return "unbiased";
    case Provenance::Challenging: return "challenging";
  }
  return "?";
}

struct BiasSpec {
  TokenId spurious_positive = -1;  // forced label 1
  TokenId spurious_negative = -1;  // forced label 0
  double rho = 0.25;               // inclusion rate in the generated pool

  void validate(const Vocabulary& vocab) const {
    if (spurious_positive == spurious_negative)
      fail("bias", "spurious tokens must be distinct");
    for (TokenId t : {spurious_positive, spurious_negative}) {
      if (t < 0 || t >= vocab.size()) fail("bias", "spurious token id out of range");
      if (vocab.groups[t].kind != GroupKind::Topic)
        fail("bias", "spurious token must be a neutral-topic token: " +
                         vocab.surfaces[t]);
    }
    if (rho < 0.0 || rho > 1.0) fail("bias", "rho must be in [0,1]");
  }
};

struct Dataset {
  std::vector<Example> examples;
  Provenance provenance = Provenance::Pool;
  std::optional<BiasSpec> bias;
  std::uint64_t seed = 0;

  std::size_t size() const { return examples.size(); }
};

struct GeneratorConfig {
  int n_genuine_positive = 40;
  int n_genuine_negative = 40;
  int n_topics = 12;
  int topic_size = 10;  // |T| = n_topics * topic_size
  int n_filler = 60;
  int min_length = 6;
  int max_length = 12;
  int min_genuine = 1, max_genuine = 3;
  int min_topic = 1, max_topic = 2;
  double label_noise = 0.0;  // epsilon
  int train_size = 5000;
  int test_size = 5000;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_genuine_positive < 1 || n_genuine_negative < 1 || n_topics < 1 ||
        topic_size < 1 || n_filler < 1)
      fail("config", "all group counts must be positive");
    if (label_noise < 0.0 || label_noise >= 0.5)
      fail("config", "label noise must be in [0, 0.5)");
    if (min_length > max_length || min_length < 1)
      fail("config", "empty sentence length range");
    if (min_genuine < 1 || max_genuine < min_genuine || min_topic < 1 ||
        max_topic < min_topic)
      fail("config", "invalid per-sentence token count range");
    if (train_size < 1 || test_size < 1) fail("config", "sizes must be positive");
    // A sentence must fit its genuine tokens, topic tokens and one
    // possible spurious token.
    if (min_length < max_genuine + max_topic + 1)
      fail("config", "length range cannot fit the mandated token counts");
  }
};

inline Vocabulary build_vocabulary(const GeneratorConfig& cfg) {
  cfg.validate();
  Vocabulary v;
  auto add = [&](const std::string& surface, TokenGroup g) {
    v.surfaces.push_back(surface);
    v.groups.push_back(g);
  };
  add("<pad>", {GroupKind::Special, -1});
  add("<bos>", {GroupKind::Special, -1});
  add("<eos>", {GroupKind::Special, -1});
  add("<unk>", {GroupKind::Special, -1});
  char buf[64];
  for (int i = 0; i < cfg.n_genuine_positive; ++i) {
    std::snprintf(buf, sizeof(buf), "pos_%03d", i);
    add(buf, {GroupKind::GenuinePositive, -1});
  }
  for (int i = 0; i < cfg.n_genuine_negative; ++i) {
    std::snprintf(buf, sizeof(buf), "neg_%03d", i);
    add(buf, {GroupKind::GenuineNegative, -1});
  }
  for (int t = 0; t < cfg.n_topics; ++t) {
    std::snprintf(buf, sizeof(buf), "topic%d", t);
    v.topic_names.push_back(buf);
    for (int i = 0; i < cfg.topic_size; ++i) {
      std::snprintf(buf, sizeof(buf), "topic%d_%02d", t, i);
      add(buf, {GroupKind::Topic, t});
    }
  }
  for (int i = 0; i < cfg.n_filler; ++i) {
    std::snprintf(buf, sizeof(buf), "fill_%02d", i);
    add(buf, {GroupKind::Filler, -1});
  }
  v.rebuild_index();
  return v;
}

namespace detail {

// Token ids of a group, ascending.
inline std::vector<TokenId> ids_of_kind(const Vocabulary& v, GroupKind k) {
  std::vector<TokenId> out;
  for (int i = 0; i < v.size(); ++i)
    if (v.groups[i].kind == k) out.push_back(i);
  return out;
}

template <typename T>
void sample_without_replacement(const std::vector<T>& from, int n, Rng& rng,
                                std::vector<T>& into) {
  std::vector<T> pool = from;
  for (int i = 0; i < n; ++i) {
    const auto j = rng.uniform_int(i, static_cast<std::int64_t>(pool.size()) - 1);
    std::swap(pool[i], pool[j]);
    into.push_back(pool[i]);
  }
}

}  // namespace detail

// Generates an unbiased pool: labels uniform, genuine tokens determine the
// label (polarity flipped with probability epsilon), spurious tokens included
// at rate rho independent of the label.
inline Dataset generate_pool(const GeneratorConfig& cfg, const Vocabulary& vocab,
                             const BiasSpec& bias, int n_examples,
                             std::uint64_t seed) {
  cfg.validate();
  bias.validate(vocab);

  const auto pos_ids = detail::ids_of_kind(vocab, GroupKind::GenuinePositive);
  const auto neg_ids = detail::ids_of_kind(vocab, GroupKind::GenuineNegative);
  const auto fill_ids = detail::ids_of_kind(vocab, GroupKind::Filler);
  auto topic_ids = detail::ids_of_kind(vocab, GroupKind::Topic);
  std::erase(topic_ids, bias.spurious_positive);
  std::erase(topic_ids, bias.spurious_negative);
  if (topic_ids.empty()) fail("config", "no topic tokens left after excluding spurious");

  Dataset ds;
  ds.provenance = Provenance::Pool;
  ds.bias = bias;
  ds.seed = seed;
  ds.examples.reserve(n_examples);

  for (int i = 0; i < n_examples; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    Example ex;
    ex.label = static_cast<int>(rng.uniform_int(0, 1));
    const int length = static_cast<int>(rng.uniform_int(cfg.min_length, cfg.max_length));
    const int n_genuine = static_cast<int>(rng.uniform_int(cfg.min_genuine, cfg.max_genuine));
    const int n_topic = static_cast<int>(rng.uniform_int(cfg.min_topic, cfg.max_topic));
    const bool include_spurious = rng.bernoulli(bias.rho);
    // Label noise flips the polarity of the whole genuine slot, so a
    // sentence never mixes G+ and G- tokens.
    bool positive_polarity = ex.label == 1;
    if (rng.bernoulli(cfg.label_noise)) positive_polarity = !positive_polarity;
    detail::sample_without_replacement(positive_polarity ? pos_ids : neg_ids,
                                       n_genuine, rng, ex.tokens);
    detail::sample_without_replacement(topic_ids, n_topic, rng, ex.tokens);
    if (include_spurious)
      ex.tokens.push_back(rng.bernoulli(0.5) ? bias.spurious_positive
                                             : bias.spurious_negative);
    while (static_cast<int>(ex.tokens.size()) < length)
      ex.tokens.push_back(fill_ids[rng.uniform_int(0, static_cast<std::int64_t>(fill_ids.size()) - 1)]);
    // Fisher-Yates shuffle of the slot order.
    for (int k = static_cast<int>(ex.tokens.size()) - 1; k > 0; --k)
      std::swap(ex.tokens[k], ex.tokens[rng.uniform_int(0, k)]);
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline bool violates_bias(const Example& ex, const BiasSpec& bias) {
  if (ex.contains(bias.spurious_positive) && ex.label != 1) return true;
  if (ex.contains(bias.spurious_negative) && ex.label != 0) return true;
  return false;
}

// Keeps exactly the examples consistent with the forced labels, in order.
inline Dataset apply_bias_filter(const Dataset& pool, const BiasSpec& bias) {
  if (pool.provenance != Provenance::Pool)
    fail("corpus", "bias filter expects a pool dataset");
  Dataset out;
  out.provenance = Provenance::Biased;
  out.bias = bias;
  out.seed = pool.seed;
  for (const auto& ex : pool.examples)
    if (!violates_bias(ex, bias)) out.examples.push_back(ex);
  if (out.examples.empty()) fail("corpus", "bias filter produced an empty dataset");
  return out;
}

inline Dataset sample_unbiased(const Dataset& pool, int size, std::uint64_t seed) {
  if (size < 1) fail("corpus", "unbiased sample size must be positive");
  if (static_cast<std::size_t>(size) > pool.size())
    fail("corpus", "unbiased sample size exceeds pool size");
  std::vector<std::size_t> indices(pool.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  Rng rng(mix_seed(seed, 0xdeadULL));
  std::vector<std::size_t> chosen;
  detail::sample_without_replacement(indices, size, rng, chosen);
  std::sort(chosen.begin(), chosen.end());
  Dataset out;
  out.provenance = Provenance::Unbiased;
  out.bias = pool.bias;
  out.seed = seed;
  for (std::size_t i : chosen) out.examples.push_back(pool.examples[i]);
  return out;
}

inline Dataset extract_challenging(const Dataset& unbiased_test, const BiasSpec& bias) {
  if (unbiased_test.provenance != Provenance::Unbiased)
    fail("corpus", "challenging subset is drawn from an unbiased dataset");
  Dataset out;
  out.provenance = Provenance::Challenging;
  out.bias = bias;
  out.seed = unbiased_test.seed;
  for (const auto& ex : unbiased_test.examples)
    if (ex.contains(bias.spurious_positive) || ex.contains(bias.spurious_negative))
      out.examples.push_back(ex);
  if (out.examples.empty())
    fail("corpus", "challenging subset is empty; robust accuracy undefined");
  return out;
}

// ---- file formats -------------------------------------------------------
// Dataset: one example per line, "<label>\t<surface> <surface> ...".
// Vocabulary: "<id>\t<surface>\t<group>".
// BiasSpec: "spurious_positive=..", "spurious_negative=..", "rho=..".

inline std::string format_dataset(const Dataset& ds, const Vocabulary& vocab) {
  std::string out;
  for (const auto& ex : ds.examples) {
    out += std::to_string(ex.label);
    out += '\t';
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i) out += ' ';
      out += vocab.surfaces.at(ex.tokens[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_dataset(const Dataset& ds, const Vocabulary& vocab,
                          const std::string& path) {
  write_text_file(path, format_dataset(ds, vocab));
}

inline Dataset read_dataset(const std::string& path, const Vocabulary& vocab,
                            int n_classes = 2,
                            Provenance provenance = Provenance::Pool) {
  const std::string text = read_text_file(path);
  Dataset ds;
  ds.provenance = provenance;
  int lineno = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      fail("format", "malformed dataset line " + std::to_string(lineno) +
                         ": missing tab");
    Example ex;
    try {
      ex.label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      fail("format", "malformed dataset line " + std::to_string(lineno) +
                         ": bad label");
    }
    if (ex.label < 0 || ex.label >= n_classes)
      fail("format", "label out of range at line " + std::to_string(lineno));
    for (const auto& tok : split(line.substr(tab + 1), ' ')) {
      if (tok.empty()) continue;
      auto id = vocab.try_id_of(tok);
      if (!id)
        fail("format", "unknown token surface at line " +
                           std::to_string(lineno) + ": " + tok);
      ex.tokens.push_back(*id);
    }
    if (ex.tokens.empty())
      fail("format", "empty example at line " + std::to_string(lineno));
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

inline std::string format_vocabulary(const Vocabulary& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    out += std::to_string(i);
    out += '\t';
    out += v.surfaces[i];
    out += '\t';
    out += v.groups[i].to_string(v.topic_names);
    out += '\n';
  }
  return out;
}

inline void write_vocabulary(const Vocabulary& v, const std::string& path) {
  write_text_file(path, format_vocabulary(v));
}

inline Vocabulary read_vocabulary(const std::string& path) {
  const std::string text = read_text_file(path);
  Vocabulary v;
  int lineno = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3)
      fail("format", "malformed vocabulary line " + std::to_string(lineno));
    if (std::stoi(fields[0]) != static_cast<int>(v.surfaces.size()))
      fail("format", "non-dense token id at line " + std::to_string(lineno));
    TokenGroup g;
    const std::string& gs = fields[2];
    if (gs == "G+") g = {GroupKind::GenuinePositive, -1};
    else if (gs == "G-") g = {GroupKind::GenuineNegative, -1};
    else if (gs == "F") g = {GroupKind::Filler, -1};
    else if (gs == "SPECIAL") g = {GroupKind::Special, -1};
    else if (gs.rfind("T:", 0) == 0) {
      const std::string name = gs.substr(2);
      auto it = std::find(v.topic_names.begin(), v.topic_names.end(), name);
      if (it == v.topic_names.end()) {
        v.topic_names.push_back(name);
        g = {GroupKind::Topic, static_cast<int>(v.topic_names.size()) - 1};
      } else {
        g = {GroupKind::Topic, static_cast<int>(it - v.topic_names.begin())};
      }
    } else {
      fail("format", "unknown group '" + gs + "' at line " + std::to_string(lineno));
    }
    v.surfaces.push_back(fields[1]);
    v.groups.push_back(g);
  }
  v.rebuild_index();
  return v;
}

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_bias_spec(const BiasSpec& b, const Vocabulary& vocab,
                            const std::string& path) {
  std::string out;
  out += "spurious_positive=" + vocab.surfaces.at(b.spurious_positive) + "\n";
  out += "spurious_negative=" + vocab.surfaces.at(b.spurious_negative) + "\n";
  out += "rho=" + format_double(b.rho) + "\n";
  write_text_file(path, out);
}

inline BiasSpec read_bias_spec(const std::string& path, const Vocabulary& vocab) {
  const std::string text = read_text_file(path);
  BiasSpec b;
  bool got_pos = false, got_neg = false, got_rho = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("format", "malformed bias spec line: " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "spurious_positive") { b.spurious_positive = vocab.id_of(val); got_pos = true; }
    else if (key == "spurious_negative") { b.spurious_negative = vocab.id_of(val); got_neg = true; }
    else if (key == "rho") { b.rho = std::stod(val); got_rho = true; }
    else fail("format", "unknown bias spec key: " + key);
  }
  if (!got_pos || !got_neg || !got_rho) fail("format", "incomplete bias spec file");
  b.validate(vocab);
  return b;
}

}  // namespace spurlab
