#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <string>
#include <vector>

#include "spurlab/common.hpp"
#include "spurlab/corpus.hpp"
#include "spurlab/model.hpp"
#include "spurlab/train.hpp"

namespace spurlab {

inline double cosine_similarity(const Vector& u, const Vector& v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  return u.dot(v) / (nu * nv);
}

struct NeighborList {
  TokenId target = -1;
  std::vector<std::pair<TokenId, double>> neighbors;  // cosine, descending
};

inline std::vector<TokenId> eligible_tokens(const Vocabulary& vocab, TokenId exclude) {
  std::vector<TokenId> out;
  for (TokenId t = 0; t < vocab.size(); ++t)
    if (!vocab.is_special(t) && t != exclude) out.push_back(t);
  return out;
}

// Top-K cosine neighbors of the target under the single-token protocol.
// Ties break toward the lower token id.
inline NeighborList nearest_neighbors(const ModelParams& theta,
                                      const Vocabulary& vocab, TokenId target,
                                      int k, const ModelConfig& cfg) {
  if (vocab.is_special(target))
    fail("analysis", "neighbor target is a special token");
  const std::vector<TokenId> candidates = eligible_tokens(vocab, target);
  if (k < 1 || k > static_cast<int>(candidates.size()))
    fail("analysis", "K out of range: " + std::to_string(k) + " of " +
                         std::to_string(candidates.size()) + " candidates");

  const Vector target_rep = token_representation(theta, target, vocab, cfg);
  std::vector<std::pair<TokenId, double>> scored;
  scored.reserve(candidates.size());
  for (TokenId t : candidates)
    scored.emplace_back(t, cosine_similarity(
                               target_rep, token_representation(theta, t, vocab, cfg)));
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  scored.resize(k);
  return {target, std::move(scored)};
}

// Class-1 probability the model assigns to a single token.
inline double polarity_of(const TrainedModel& reference, TokenId token,
                          const Vocabulary& vocab, const ModelConfig& cfg) {
  if (vocab.is_special(token))
    fail("analysis", "polarity of a special token is undefined");
  Example ex{{token}, 0};
  const ForwardCache c =
      forward_sentence(reference.theta, reference.head, nullptr, ex, vocab, cfg);
  return c.probs[1];
}

struct SpuriousScoreReport {
  TokenId target = -1;
  int k = 100;
  double sum_score = 0.0;
  double mean_score = 0.0;
  std::vector<double> deltas;  // per rank
};

// Sum over rank-paired top-K neighbors of the absolute change in the
// reference model's class-1 probability between the two embedding spaces.
inline SpuriousScoreReport spurious_score(const TrainedModel& reference,
                                          const ModelParams& initial_theta,
                                          const ModelParams& finetuned_theta,
                                          TokenId target, int k,
                                          const Vocabulary& vocab,
                                          const ModelConfig& cfg) {
  const NeighborList before = nearest_neighbors(initial_theta, vocab, target, k, cfg);
  const NeighborList after = nearest_neighbors(finetuned_theta, vocab, target, k, cfg);
  SpuriousScoreReport report;
  report.target = target;
  report.k = k;
  for (int i = 0; i < k; ++i) {
    const double p_before = polarity_of(reference, before.neighbors[i].first, vocab, cfg);
    const double p_after = polarity_of(reference, after.neighbors[i].first, vocab, cfg);
    report.deltas.push_back(std::abs(p_before - p_after));
    report.sum_score += report.deltas.back();
  }
  report.mean_score = report.sum_score / static_cast<double>(k);
  return report;
}

struct ProjectionPoint {
  TokenId token = -1;
  double px = 0.0, py = 0.0;
  double polarity = 0.5;
};

struct ProjectionReport {
  std::vector<ProjectionPoint> points;
  double explained_x = 0.0, explained_y = 0.0;
};

// Mean-centered 2-D PCA of the subset's representations. Axes come from a
// deterministic symmetric eigen-solve; the entry of largest magnitude in
// each axis is made positive so output does not depend on solver sign.
inline ProjectionReport pca_project(const ModelParams& theta, const Vocabulary& vocab,
                                    const std::vector<TokenId>& subset,
                                    const TrainedModel& reference,
                                    const ModelConfig& cfg) {
  if (subset.size() < 3) fail("analysis", "projection needs at least 3 tokens");
  const int d = theta.dim();
  Matrix reps(subset.size(), d);
  for (std::size_t i = 0; i < subset.size(); ++i)
    reps.row(i) = token_representation(theta, subset[i], vocab, cfg).transpose();
  const Vector mean = reps.colwise().mean();
  reps.rowwise() -= mean.transpose();

  const Matrix cov = reps.transpose() * reps / static_cast<double>(subset.size());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) fail("analysis", "eigen-solve failed");

  auto axis = [&](int rank_from_top) {
    Vector v = solver.eigenvectors().col(d - 1 - rank_from_top);
    int arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    return v;
  };
  const Vector ax = axis(0), ay = axis(1);

  ProjectionReport report;
  report.explained_x = std::max(0.0, solver.eigenvalues()[d - 1]);
  report.explained_y = std::max(0.0, solver.eigenvalues()[d - 2]);
  for (std::size_t i = 0; i < subset.size(); ++i) {
    ProjectionPoint p;
    p.token = subset[i];
    p.px = reps.row(i).dot(ax);
    p.py = reps.row(i).dot(ay);
    p.polarity = polarity_of(reference, subset[i], vocab, cfg);
    report.points.push_back(p);
  }
  return report;
}

// ---- report formats -------------------------------------------------------

inline std::string format_neighbor_report(const NeighborList& nl,
                                          const TrainedModel& reference,
                                          const Vocabulary& vocab,
                                          const ModelConfig& cfg) {
  std::string out = "rank\tsurface\tcosine\tpolarity\n";
  for (std::size_t i = 0; i < nl.neighbors.size(); ++i) {
    const auto& [token, cosine] = nl.neighbors[i];
    out += std::to_string(i + 1) + "\t" + vocab.surfaces.at(token) + "\t" +
           format_double(cosine) + "\t" +
           format_double(polarity_of(reference, token, vocab, cfg)) + "\n";
  }
  return out;
}

inline std::string format_score_report(const SpuriousScoreReport& r,
                                       const Vocabulary& vocab) {
  std::string out = "target\tK\tsum_score\tmean_score\n";
  out += vocab.surfaces.at(r.target) + "\t" + std::to_string(r.k) + "\t" +
         format_double(r.sum_score) + "\t" + format_double(r.mean_score) + "\n";
  return out;
}

inline std::string format_projection_csv(const ProjectionReport& r,
                                         const Vocabulary& vocab) {
  std::string out = "surface,px,py,polarity\n";
  for (const auto& p : r.points)
    out += vocab.surfaces.at(p.token) + "," + format_double(p.px) + "," +
           format_double(p.py) + "," + format_double(p.polarity) + "\n";
  return out;
}

}  // namespace spurlab
