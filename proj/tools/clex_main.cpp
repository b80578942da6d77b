// clex: command-line driver for the aggression/loss tweet classification
// pipeline.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clex/pipeline.hpp"

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
  bool quiet = false;
};

clex::PipelineConfig resolve(const Globals& g) {
  auto cfg = clex::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed, cfg.synthetic.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  cfg.threads = g.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggression and loss detection in tweets with domain embeddings, an induced lexicon and user context"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master random seed (overrides the config)");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet,-q", g.quiet, "suppress progress messages");

  auto* gen = app.add_subcommand("gen-synthetic", "write synthetic labeled and unlabeled corpora");
  auto* pre = app.add_subcommand("preprocess", "tokenize, build vocabulary, user registry and timelines");
  auto* res = app.add_subcommand("build-resources", "train embeddings, induce the lexicon, compute context features");

  auto* train = app.add_subcommand("train", "train models over all folds, repeats and runs");
  std::vector<std::string> train_models;
  train->add_option("--model,-m", train_models, "cnn, cnn+context, linear, linear+context (default: all)");

  auto* eval = app.add_subcommand("evaluate", "score checkpoints and run significance tests");
  std::vector<std::string> eval_models;
  eval->add_option("--model,-m", eval_models, "models to compare, baseline first (default: all)");

  auto* pred = app.add_subcommand("predict", "label tweets with a checkpoint");
  std::string ckpt, input, output;
  pred->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  pred->add_option("--input", input, "tweets in JSON-lines format")->required();
  pred->add_option("--output", output, "CSV destination (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    clex::log::set_quiet(g.quiet);
    const auto cfg = resolve(g);
    if (*gen) {
      clex::cmd_gen_synthetic(cfg);
    } else if (*pre) {
      clex::cmd_preprocess(cfg);
    } else if (*res) {
      clex::cmd_build_resources(cfg);
    } else if (*train) {
      clex::cmd_train(cfg, train_models.empty() ? clex::model_names() : train_models);
    } else if (*eval) {
      const auto r = clex::cmd_evaluate(cfg, eval_models.empty() ? clex::model_names() : eval_models);
      std::cout << clex::format_table(r);
    } else if (*pred) {
      if (output.empty()) {
        clex::cmd_predict(cfg, ckpt, input, std::cout);
      } else {
        std::ofstream out(output, std::ios::binary);
        if (!out) throw clex::RuntimeError("cannot write " + output);
        clex::cmd_predict(cfg, ckpt, input, out);
      }
    }
  } catch (const clex::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const clex::RuntimeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
