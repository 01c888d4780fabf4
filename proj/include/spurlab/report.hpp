#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spurlab/common.hpp"
#include "spurlab/eval.hpp"

namespace spurlab {

// Percent with one decimal, the table layout the write-up uses.
inline double round_percent(double fraction) {
  return std::round(fraction * 1000.0) / 10.0;
}

inline std::string format_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", percent);
  return buf;
}

// Printed delta is computed from the rounded columns so the table stays
// arithmetically consistent at display precision.
inline std::string render_report_row(const std::string& method, double biased_acc,
                                     double robust_acc) {
  const double b = round_percent(biased_acc);
  const double r = round_percent(robust_acc);
  return method + "\t" + format_percent(b) + "\t" + format_percent(r) + "\t" +
         format_percent(r - b);
}

inline std::string format_report_tsv(const BenchmarkResult& result) {
  std::string out = "method\tbiased_acc\trobust_acc\tdelta\n";
  for (const auto& r : result.reports)
    out += render_report_row(r.method, r.biased_acc, r.robust_acc) + "\n";
  return out;
}

inline std::string format_report_table(const BenchmarkResult& result) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-10s %10s %10s %8s\n", "method",
                "biased_acc", "robust_acc", "delta");
  out += buf;
  for (const auto& r : result.reports) {
    const double b = round_percent(r.biased_acc);
    const double rob = round_percent(r.robust_acc);
    std::snprintf(buf, sizeof(buf), "%-10s %10.1f %10.1f %8.1f\n",
                  r.method.c_str(), b, rob, rob - b);
    out += buf;
  }
  return out;
}

inline std::string format_scores_tsv(const BenchmarkResult& result) {
  std::string out = "method\ttarget\tK\tsum_score\tmean_score\n";
  for (const auto& row : result.scores)
    out += row.method + "\t" + result.vocab.surfaces.at(row.report.target) + "\t" +
           std::to_string(row.report.k) + "\t" + format_double(row.report.sum_score) +
           "\t" + format_double(row.report.mean_score) + "\n";
  return out;
}

inline std::string format_neighbor_snapshot(const NeighborSnapshot& s,
                                            const Vocabulary& vocab) {
  std::string out = "rank\tsurface\tcosine\tpolarity\n";
  for (std::size_t i = 0; i < s.list.neighbors.size(); ++i) {
    const auto& [token, cosine] = s.list.neighbors[i];
    out += std::to_string(i + 1) + "\t" + vocab.surfaces.at(token) + "\t" +
           format_double(cosine) + "\t" + format_double(s.polarities.at(i)) + "\n";
  }
  return out;
}

inline std::string format_manifest(const BenchmarkResult& r) {
  const BenchConfig& c = r.config;
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  kv("format_version", "1");
  kv("seed", std::to_string(c.seed));
  kv("n_genuine_positive", std::to_string(c.gen.n_genuine_positive));
  kv("n_genuine_negative", std::to_string(c.gen.n_genuine_negative));
  kv("n_topics", std::to_string(c.gen.n_topics));
  kv("topic_size", std::to_string(c.gen.topic_size));
  kv("n_filler", std::to_string(c.gen.n_filler));
  kv("min_length", std::to_string(c.gen.min_length));
  kv("max_length", std::to_string(c.gen.max_length));
  kv("label_noise", format_double(c.gen.label_noise));
  kv("train_size", std::to_string(c.gen.train_size));
  kv("test_size", std::to_string(c.gen.test_size));
  kv("d", std::to_string(c.model.d));
  kv("max_positions", std::to_string(c.model.max_positions));
  kv("classes", std::to_string(c.model.n_classes));
  kv("prompt_count", std::to_string(c.model.prompt_count));
  kv("pooling", c.model.pooling == Pooling::BosPosition ? "bos" : "mean");
  kv("alpha", format_double(c.plant.center_scale));
  kv("sigma", format_double(c.plant.noise));
  kv("min_angle_deg", format_double(c.plant.min_angle_deg));
  kv("rho", format_double(c.rho));
  kv("spurious_positive", c.spurious_positive_surface);
  kv("spurious_negative", c.spurious_negative_surface);
  kv("learning_rate", format_double(c.learning_rate));
  kv("epochs", std::to_string(c.epochs));
  kv("batch_size", std::to_string(c.batch_size));
  kv("lambda_co", format_double(c.lambda_co));
  kv("lambda_cp", format_double(c.lambda_cp));
  kv("neighbor_k", std::to_string(c.neighbor_k));
  kv("score_k", std::to_string(c.score_k));
  kv("planted_spurious_cosine", format_double(r.planted_spurious_cosine));
  for (std::size_t i = 0; i < r.biased_methods.size(); ++i)
    kv("finetuned_spurious_cosine." + r.biased_methods[i],
       format_double(r.finetuned_spurious_cosine.at(i)));
  return out;
}

inline void emit_report(const BenchmarkResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string base = dir + "/";
  write_text_file(base + "report.tsv", format_report_tsv(result));
  write_text_file(base + "report.txt", format_report_table(result));
  write_text_file(base + "scores.tsv", format_scores_tsv(result));
  for (const auto& s : result.neighbors)
    write_text_file(base + "neighbors_" + s.method + "_" +
                        result.vocab.surfaces.at(s.target) + ".tsv",
                    format_neighbor_snapshot(s, result.vocab));
  for (const auto& p : result.projections)
    write_text_file(base + "projection_" + p.method + ".csv",
                    format_projection_csv(p.report, result.vocab));
  write_text_file(base + "MANIFEST", format_manifest(result));
}

inline std::string format_sweep_tsv(const std::vector<SweepRow>& rows) {
  std::string out = "sigma\tmethod\tbiased_acc\trobust_acc\tdelta\n";
  for (const auto& r : rows) {
    const double b = round_percent(r.biased_acc), rob = round_percent(r.robust_acc);
    out += format_double(r.sigma) + "\t" + r.method + "\t" + format_percent(b) +
           "\t" + format_percent(rob) + "\t" + format_percent(rob - b) + "\n";
  }
  return out;
}

// Minimal deterministic scatter plot. Polarity 0 renders red, polarity 1
// blue, linear in between; designated tokens get text labels.
inline std::string format_scatter_svg(const ProjectionReport& projection,
                                      const std::vector<TokenId>& labeled,
                                      const Vocabulary& vocab) {
  if (projection.points.empty()) fail("report", "empty projection");
  double min_x = projection.points[0].px, max_x = min_x;
  double min_y = projection.points[0].py, max_y = min_y;
  for (const auto& p : projection.points) {
    min_x = std::min(min_x, p.px);
    max_x = std::max(max_x, p.px);
    min_y = std::min(min_y, p.py);
    max_y = std::max(max_y, p.py);
  }
  double span_x = max_x - min_x, span_y = max_y - min_y;
  if (span_x <= 0.0) span_x = 1.0;
  if (span_y <= 0.0) span_y = 1.0;
  const double margin = 0.05;
  min_x -= span_x * margin;
  min_y -= span_y * margin;
  span_x *= 1.0 + 2.0 * margin;
  span_y *= 1.0 + 2.0 * margin;

  const double w = 640.0, h = 480.0;
  auto sx = [&](double x) { return (x - min_x) / span_x * w; };
  auto sy = [&](double y) { return h - (y - min_y) / span_y * h; };  // y up
  auto color = [&](double polarity) {
    const int r = static_cast<int>(std::lround(230.0 * (1.0 - polarity) + 40.0 * polarity));
    const int g = 40;
    const int b = static_cast<int>(std::lround(40.0 * (1.0 - polarity) + 230.0 * polarity));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
    return std::string(buf);
  };
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" "
                "height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                w, h, w, h);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& p : projection.points) {
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\"/>\n",
                  sx(p.px), sy(p.py), color(p.polarity).c_str());
    out += buf;
  }
  for (const auto& p : projection.points) {
    if (std::find(labeled.begin(), labeled.end(), p.token) == labeled.end()) continue;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" font-size=\"12\" "
                  "font-family=\"sans-serif\">%s</text>\n",
                  sx(p.px) + 6.0, sy(p.py) - 6.0, vocab.surfaces.at(p.token).c_str());
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

inline void emit_scatter_svg(const ProjectionReport& projection,
                             const std::vector<TokenId>& labeled,
                             const Vocabulary& vocab, const std::string& path) {
  write_text_file(path, format_scatter_svg(projection, labeled, vocab));
}

}  // namespace spurlab
