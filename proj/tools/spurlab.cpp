// spurlab: synthetic spurious-correlation laboratory.
//
// Subcommands cover the full pipeline: corpus generation (gen), embedding
// planting (plant), training (train), neighborhood analysis (neighbors,
// score, project), robustness evaluation (eval), the end-to-end benchmark
// (bench, sweep) and the gradient oracle (gradcheck).

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spurlab/spurlab.hpp"

namespace fs = std::filesystem;
using namespace spurlab;

namespace {

struct CommonArgs {
  std::optional<std::string> config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Registers --config plus passthrough flags that map 1:1 onto config keys.
void add_config_options(CLI::App* cmd, CommonArgs& args,
                        const std::vector<std::pair<std::string, std::string>>& flags) {
  cmd->add_option_function<std::string>(
         "--config", [&](const std::string& v) { args.config_file = v; },
         "Flat key = value config file");
  for (const auto& [flag, key] : flags) {
    const std::string key_copy = key;
    cmd->add_option_function<std::string>(
        flag,
        [&args, key_copy](const std::string& v) {
          args.overrides.emplace_back(key_copy, v);
        },
        "Overrides config key '" + key + "'");
  }
}

const std::vector<std::pair<std::string, std::string>> kGenFlags = {
    {"--seed", "seed"},           {"--rho", "rho"},
    {"--label-noise", "label_noise"}, {"--train-size", "train_size"},
    {"--test-size", "test_size"}, {"--spurious-positive", "spurious_positive"},
    {"--spurious-negative", "spurious_negative"}};

const std::vector<std::pair<std::string, std::string>> kModelFlags = {
    {"--seed", "seed"},       {"--d", "d"},
    {"--sigma", "sigma"},     {"--alpha", "alpha"},
    {"--min-angle", "min_angle_deg"}, {"--max-positions", "max_positions"},
    {"--pooling", "pooling"}, {"--prompt-count", "prompt_count"}};

const std::vector<std::pair<std::string, std::string>> kTrainFlags = {
    {"--seed", "seed"},         {"--method", "method"},
    {"--lambda", "lambda"},     {"--learning-rate", "learning_rate"},
    {"--epochs", "epochs"},     {"--batch-size", "batch_size"},
    {"--prompt-count", "prompt_count"}};

const std::vector<std::pair<std::string, std::string>> kBenchFlags = {
    {"--seed", "seed"},         {"--rho", "rho"},
    {"--label-noise", "label_noise"}, {"--epochs", "epochs"},
    {"--learning-rate", "learning_rate"}, {"--lambda-co", "lambda_co"},
    {"--lambda-cp", "lambda_cp"}, {"--train-size", "train_size"},
    {"--test-size", "test_size"}, {"--sigma", "sigma"},
    {"--d", "d"},               {"--score-k", "score_k"},
    {"--neighbor-k", "neighbor_k"}, {"--sigmas", "sweep_sigmas"}};

// Calibrated defaults for the end-to-end benchmark; individual subcommands
// keep the plain library defaults.
std::vector<std::pair<std::string, std::string>> bench_defaults() {
  return {{"label_noise", "0.05"}, {"pooling", "mean"}, {"max_positions", "18"},
          {"lambda_co", "10"}, {"lambda_cp", "1"}, {"score_k", "10"},
          {"seed", "12"}};
}

struct DataDir {
  Vocabulary vocab;
  BiasSpec bias;
  std::string path;

  Dataset load(const std::string& name, Provenance provenance) const {
    Dataset ds = read_dataset(path + "/" + name, vocab, 2, provenance);
    ds.bias = bias;
    return ds;
  }
};

DataDir open_data_dir(const std::string& path) {
  DataDir d;
  d.path = path;
  d.vocab = read_vocabulary(path + "/vocabulary.tsv");
  d.bias = read_bias_spec(path + "/bias.spec", d.vocab);
  return d;
}

TokenId resolve_target(const std::string& name, const Vocabulary& vocab,
                       const BiasSpec& bias) {
  if (name == "s_pos") return bias.spurious_positive;
  if (name == "s_neg") return bias.spurious_negative;
  return vocab.id_of(name);
}

TrainedModel as_trained(const ModelBundle& bundle) {
  TrainedModel m;
  m.theta = bundle.theta;
  m.head = bundle.head;
  m.prompts = bundle.prompts;
  m.theta0 = bundle.theta;
  return m;
}

int cmd_gen(const CommonArgs& args, const std::string& out_dir) {
  RunConfig cfg = parse_config({}, args.config_file, args.overrides);
  cfg.bench.gen.validate();
  const Vocabulary vocab = build_vocabulary(cfg.bench.gen);
  BiasSpec bias;
  bias.spurious_positive = vocab.id_of(cfg.bench.spurious_positive_surface);
  bias.spurious_negative = vocab.id_of(cfg.bench.spurious_negative_surface);
  bias.rho = cfg.bench.rho;
  bias.validate(vocab);

  const std::uint64_t seed = cfg.bench.seed;
  const Dataset train_pool =
      generate_pool(cfg.bench.gen, vocab, bias, cfg.bench.gen.train_size, mix_seed(seed, 101));
  const Dataset test_pool =
      generate_pool(cfg.bench.gen, vocab, bias, cfg.bench.gen.test_size, mix_seed(seed, 202));
  const Dataset biased_train = apply_bias_filter(train_pool, bias);
  const Dataset unbiased_train =
      sample_unbiased(train_pool, static_cast<int>(biased_train.size()), mix_seed(seed, 303));
  const Dataset biased_test = apply_bias_filter(test_pool, bias);
  const Dataset unbiased_test =
      sample_unbiased(test_pool, static_cast<int>(biased_test.size()), mix_seed(seed, 404));
  const Dataset challenging = extract_challenging(unbiased_test, bias);

  fs::create_directories(out_dir);
  write_vocabulary(vocab, out_dir + "/vocabulary.tsv");
  write_bias_spec(bias, vocab, out_dir + "/bias.spec");
  write_dataset(train_pool, vocab, out_dir + "/train_pool.tsv");
  write_dataset(test_pool, vocab, out_dir + "/test_pool.tsv");
  write_dataset(biased_train, vocab, out_dir + "/biased_train.tsv");
  write_dataset(unbiased_train, vocab, out_dir + "/unbiased_train.tsv");
  write_dataset(biased_test, vocab, out_dir + "/biased_test.tsv");
  write_dataset(unbiased_test, vocab, out_dir + "/unbiased_test.tsv");
  write_dataset(challenging, vocab, out_dir + "/challenging_test.tsv");
  std::cout << "wrote " << out_dir << ": |V|=" << vocab.size()
            << " biased_train=" << biased_train.size()
            << " unbiased_train=" << unbiased_train.size()
            << " biased_test=" << biased_test.size()
            << " challenging=" << challenging.size() << "\n";
  return 0;
}

int cmd_plant(const CommonArgs& args, const std::string& data_dir,
              const std::string& out_path) {
  RunConfig cfg = parse_config({}, args.config_file, args.overrides);
  const DataDir data = open_data_dir(data_dir);
  PlantSpec plant = cfg.bench.plant;
  plant.seed = mix_seed(cfg.bench.seed, 505);
  ModelBundle bundle;
  bundle.config = cfg.bench.model;
  bundle.theta = init_planted(data.vocab, cfg.bench.model, plant);
  bundle.head = ClassifierHead::zeros(cfg.bench.model.n_classes, cfg.bench.model.d);
  save_model(bundle, out_path);
  std::cout << "planted model -> " << out_path << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir,
              const std::string& init_path, const std::string& out_dir,
              const std::string& split) {
  RunConfig cfg = parse_config({}, args.config_file, args.overrides);
  const DataDir data = open_data_dir(data_dir);
  const ModelBundle init = load_model(init_path);
  if (init.theta.vocab_size() != data.vocab.size())
    fail("model", "model vocabulary size does not match the data directory");

  ModelConfig mcfg = init.config;
  mcfg.prompt_count = cfg.bench.model.prompt_count;
  Dataset train_data = split == "unbiased"
                           ? data.load("unbiased_train.tsv", Provenance::Unbiased)
                           : data.load("biased_train.tsv", Provenance::Biased);

  TrainConfig tc = cfg.train_config();
  const TrainedModel model = train(init.theta, data.vocab, mcfg, train_data, tc);

  fs::create_directories(out_dir);
  ModelBundle out;
  out.theta = model.theta;
  out.head = model.head;
  out.prompts = model.prompts;
  out.config = mcfg;
  if (!model.prompts) out.config.prompt_count = 0;
  save_model(out, out_dir + "/model");
  write_text_file(out_dir + "/train.log", format_train_log(model));
  std::cout << "trained " << method_name(tc.method) << " on " << split
            << " split; final train_acc="
            << format_double(model.history.empty() ? 0.0 : model.history.back().accuracy)
            << " -> " << out_dir << "/model\n";
  return 0;
}

int cmd_neighbors(const std::string& model_path, const std::string& data_dir,
                  const std::string& reference_path, const std::string& target_name,
                  int k, const std::string& out_path) {
  const DataDir data = open_data_dir(data_dir);
  const ModelBundle bundle = load_model(model_path);
  const TrainedModel reference =
      as_trained(reference_path.empty() ? bundle : load_model(reference_path));
  const TokenId target = resolve_target(target_name, data.vocab, data.bias);
  const NeighborList nl =
      nearest_neighbors(bundle.theta, data.vocab, target, k, bundle.config);
  const std::string text =
      format_neighbor_report(nl, reference, data.vocab, bundle.config);
  if (out_path.empty()) std::cout << text;
  else write_text_file(out_path, text);
  return 0;
}

int cmd_score(const std::string& reference_path, const std::string& initial_path,
              const std::string& finetuned_path, const std::string& data_dir,
              const std::string& target_name, int k, const std::string& out_path) {
  const DataDir data = open_data_dir(data_dir);
  const TrainedModel reference = as_trained(load_model(reference_path));
  const ModelBundle initial = load_model(initial_path);
  const ModelBundle finetuned = load_model(finetuned_path);
  const TokenId target = resolve_target(target_name, data.vocab, data.bias);
  const SpuriousScoreReport report =
      spurious_score(reference, initial.theta, finetuned.theta, target, k,
                     data.vocab, initial.config);
  const std::string text = format_score_report(report, data.vocab);
  if (out_path.empty()) std::cout << text;
  else write_text_file(out_path, text);
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir) {
  const DataDir data = open_data_dir(data_dir);
  const ModelBundle bundle = load_model(model_path);
  const TrainedModel model = as_trained(bundle);
  const Dataset biased_test = data.load("biased_test.tsv", Provenance::Biased);
  const Dataset challenging = data.load("challenging_test.tsv", Provenance::Challenging);
  const EvalReport r =
      evaluate_robustness(model, biased_test, challenging, data.vocab, bundle.config);
  std::cout << "method\tbiased_acc\trobust_acc\tdelta\n"
            << render_report_row("model", r.biased_acc, r.robust_acc) << "\n";
  return 0;
}

int cmd_project(const std::string& model_path, const std::string& data_dir,
                const std::string& reference_path, const std::string& out_path,
                const std::string& svg_path) {
  const DataDir data = open_data_dir(data_dir);
  const ModelBundle bundle = load_model(model_path);
  const TrainedModel reference =
      as_trained(reference_path.empty() ? bundle : load_model(reference_path));
  const std::vector<TokenId> subset = projection_subset(data.vocab, data.bias);
  const ProjectionReport report =
      pca_project(bundle.theta, data.vocab, subset, reference, bundle.config);
  write_text_file(out_path, format_projection_csv(report, data.vocab));
  if (!svg_path.empty())
    emit_scatter_svg(report,
                     {data.bias.spurious_positive, data.bias.spurious_negative},
                     data.vocab, svg_path);
  std::cout << "projection -> " << out_path << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& out_dir) {
  RunConfig cfg = parse_config(bench_defaults(), args.config_file, args.overrides);
  const BenchmarkResult result = run_benchmark(cfg.bench);
  emit_report(result, out_dir);
  std::cout << format_report_table(result);
  std::cout << "benchmark -> " << out_dir << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& out_path) {
  RunConfig cfg = parse_config(bench_defaults(), args.config_file, args.overrides);
  const std::vector<SweepRow> rows = pretrain_quality_sweep(cfg.sweep_sigmas, cfg.bench);
  const std::string text = format_sweep_tsv(rows);
  if (out_path.empty()) std::cout << text;
  else write_text_file(out_path, text);
  return 0;
}

int cmd_gradcheck(const std::string& method_name_arg, std::uint64_t seed) {
  std::vector<Method> methods;
  if (method_name_arg == "all")
    methods = {Method::Standard, Method::NflF, Method::NflCo, Method::NflCp,
               Method::NflPt};
  else
    methods = {parse_method(method_name_arg)};
  bool ok = true;
  for (Method m : methods) {
    const double err = finite_diff_check(m, seed);
    const bool pass = err < 1e-4;
    ok = ok && pass;
    std::cout << method_name(m) << "\tmax_rel_err=" << format_double(err) << "\t"
              << (pass ? "pass" : "FAIL") << "\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spurlab: spurious-correlation fine-tuning laboratory"};
  app.require_subcommand(1);

  CommonArgs gen_args, plant_args, train_args, bench_args, sweep_args;
  std::string out_dir, data_dir, init_path, model_path, reference_path;
  std::string target_name, out_path, svg_path, split = "biased";
  std::string gradcheck_method = "all";
  std::uint64_t gradcheck_seed = 1;
  int k = 10;
  int score_k = 100;

  auto* gen = app.add_subcommand("gen", "Generate vocabulary, bias spec and datasets");
  add_config_options(gen, gen_args, kGenFlags);
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* plant = app.add_subcommand("plant", "Plant pretrained-style token embeddings");
  add_config_options(plant, plant_args, kModelFlags);
  plant->add_option("--data", data_dir, "Data directory from 'gen'")->required();
  plant->add_option("--out", out_path, "Output model file")->required();

  auto* train_cmd = app.add_subcommand("train", "Fine-tune from a planted model");
  add_config_options(train_cmd, train_args, kTrainFlags);
  train_cmd->add_option("--data", data_dir, "Data directory")->required();
  train_cmd->add_option("--init", init_path, "Initial (planted) model file")->required();
  train_cmd->add_option("--out", out_dir, "Output run directory")->required();
  train_cmd->add_option("--split", split, "Training split: biased | unbiased")
      ->check(CLI::IsMember({"biased", "unbiased"}));

  auto* neighbors = app.add_subcommand("neighbors", "Top-K cosine neighbors of a token");
  neighbors->add_option("--model", model_path)->required();
  neighbors->add_option("--data", data_dir)->required();
  neighbors->add_option("--reference", reference_path, "Polarity reference model");
  neighbors->add_option("--target", target_name, "Token surface or s_pos / s_neg")->required();
  neighbors->add_option("--k", k);
  neighbors->add_option("--out", out_path, "Output file (stdout when omitted)");

  std::string initial_path, finetuned_path;
  auto* score = app.add_subcommand("score", "Spurious score of a target token");
  score->add_option("--reference", reference_path)->required();
  score->add_option("--initial", initial_path)->required();
  score->add_option("--finetuned", finetuned_path)->required();
  score->add_option("--data", data_dir)->required();
  score->add_option("--target", target_name)->required();
  score->add_option("--k", score_k)->capture_default_str();
  score->add_option("--out", out_path);

  auto* eval_cmd = app.add_subcommand("eval", "Biased / robust accuracy of a model");
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--data", data_dir)->required();

  auto* project = app.add_subcommand("project", "2-D PCA projection of representations");
  project->add_option("--model", model_path)->required();
  project->add_option("--data", data_dir)->required();
  project->add_option("--reference", reference_path);
  project->add_option("--out", out_path, "CSV output path")->required();
  project->add_option("--svg", svg_path, "Optional SVG scatter output");

  auto* bench = app.add_subcommand("bench", "Full benchmark: all methods + reports");
  add_config_options(bench, bench_args, kBenchFlags);
  bench->add_option("--out", out_dir, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Benchmark across planting noise levels");
  add_config_options(sweep, sweep_args, kBenchFlags);
  sweep->add_option("--out", out_path, "Output TSV (stdout when omitted)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient oracle");
  gradcheck->add_option("--method", gradcheck_method,
                        "standard | nfl-f | nfl-co | nfl-cp | nfl-pt | all");
  gradcheck->add_option("--seed", gradcheck_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_args, out_dir);
    if (plant->parsed()) return cmd_plant(plant_args, data_dir, out_path);
    if (train_cmd->parsed())
      return cmd_train(train_args, data_dir, init_path, out_dir, split);
    if (neighbors->parsed())
      return cmd_neighbors(model_path, data_dir, reference_path, target_name, k, out_path);
    if (score->parsed())
      return cmd_score(reference_path, initial_path, finetuned_path, data_dir,
                       target_name, score_k, out_path);
    if (eval_cmd->parsed()) return cmd_eval(model_path, data_dir);
    if (project->parsed())
      return cmd_project(model_path, data_dir, reference_path, out_path, svg_path);
    if (bench->parsed()) return cmd_bench(bench_args, out_dir);
    if (sweep->parsed()) return cmd_sweep(sweep_args, out_path);
    if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_method, gradcheck_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
