// Command-line front end: training, evaluation, inference, the two analysis
// experiments and a couple of data utilities.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 runtime error.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rewrite_lab/corpus.hpp"
#include "rewrite_lab/error.hpp"
#include "rewrite_lab/harness.hpp"
#include "rewrite_lab/supervision.hpp"

using namespace rewrite_lab;

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string train_path, eval_path, output_dir, neg_strategy;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;

  void Register(CLI::App* app) {
    app->add_option("-c,--config", config_path, "key=value run config file");
    app->add_option("--set", overrides, "Override a config key (key=value), repeatable");
    app->add_option("--train", train_path, "Training corpus (JSONL)");
    app->add_option("--eval", eval_path, "Evaluation corpus (JSONL)");
    app->add_option("-o,--output-dir", output_dir, "Run output directory");
    app->add_option("--epochs", epochs, "Number of epochs");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--neg-strategy", neg_strategy, "Hard negatives: rd, origin or se")
        ->check(CLI::IsMember({"rd", "origin", "se"}));
  }

  RunConfig Resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::LoadFile(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::kConfig, "--set expects key=value");
      c.Set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!train_path.empty()) c.train_path = train_path;
    if (!eval_path.empty()) c.eval_path = eval_path;
    if (!output_dir.empty()) c.output_dir = output_dir;
    if (!neg_strategy.empty()) c.neg_strategy = ParseNegativeStrategy(neg_strategy);
    if (epochs) c.epochs = *epochs;
    if (seed) c.seed = *seed;
    if (ApplySeedOverride(c)) std::clog << "seed overridden from REWRITE_LAB_SEED: " << c.seed << '\n';
    c.Validate();
    return c;
  }
};

std::vector<double> ParseGrid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      size_t used = 0;
      grid.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "bad temperature '" + part + "'");
    }
  }
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incomplete utterance rewriting as edit-matrix prediction"};
  app.require_subcommand(1);

  ConfigFlags train_flags;
  std::string resume;
  auto* train = app.add_subcommand("train", "Train a model");
  train_flags.Register(train);
  train->add_option("--resume", resume, "Continue from a state.bin written by an earlier run");

  std::string checkpoint, corpus, out;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus with rewrites");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--corpus", corpus, "Corpus (JSONL)")->required();
  eval->add_option("-o,--output-dir", out, "Where report.csv and predictions.jsonl go")
      ->default_val("eval");

  std::string input;
  auto* rewrite = app.add_subcommand("rewrite", "Rewrite queries with a trained checkpoint");
  rewrite->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  rewrite->add_option("-i,--input", input, "Input JSONL (rewrite field optional)")->required();
  rewrite->add_option("-o,--output", out, "Output JSONL")->required();

  ConfigFlags sweep_flags;
  std::string grid_text, csv;
  auto* sweep = app.add_subcommand("sweep-temp", "Train and evaluate once per temperature");
  sweep_flags.Register(sweep);
  sweep->add_option("--grid", grid_text, "Comma-separated temperatures")
      ->default_val("0.05,0.1,0.3,0.5,0.7,1.0");
  sweep->add_option("--csv", csv, "Output CSV")->required();

  ConfigFlags compare_flags;
  auto* compare = app.add_subcommand("compare-neg", "Train and evaluate once per negative strategy");
  compare_flags.Register(compare);
  compare->add_option("--csv", csv, "Output CSV")->required();

  int count = 500;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("gen-synth", "Write a templated synthetic corpus");
  synth->add_option("-n,--count", count, "Number of dialogues")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("-o,--output", out, "Output JSONL")->required();

  auto* labels = app.add_subcommand("derive-labels", "Print edit-matrix and keyword label grids");
  labels->add_option("-i,--input", input, "Corpus (JSONL) with rewrites")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      const RunConfig config = train_flags.Resolve();
      const TrainResult r =
          Train(config, resume.empty() ? std::nullopt : std::optional<std::string>(resume));
      std::cout << "dropped examples: " << r.dropped << '\n'
                << "checkpoints written: " << r.checkpoints_written << '\n'
                << "final checkpoint: " << r.final_checkpoint << '\n'
                << "log: " << r.log_path << '\n';
      if (!config.eval_path.empty()) {
        const auto data = LoadJsonl(config.eval_path);
        std::cout << EvaluateModel(r.params, r.vocab, data.examples).report.Table();
      }
    } else if (eval->parsed()) {
      std::cout << EvaluateCheckpoint(checkpoint, corpus, out).Table();
    } else if (rewrite->parsed()) {
      RewriteFile(checkpoint, input, out);
    } else if (sweep->parsed()) {
      const auto rows = SweepTemperature(sweep_flags.Resolve(), ParseGrid(grid_text), csv);
      std::cout << SweepSummary(rows) << '\n';
    } else if (compare->parsed()) {
      const auto rows = CompareNegativeStrategies(compare_flags.Resolve(), csv);
      for (const auto& row : rows) {
        std::cout << row.label << ": em=" << row.report.em << " f3=" << row.report.f3 << '\n';
      }
    } else if (synth->parsed()) {
      SaveJsonl(out, GenerateSynthetic(count, synth_seed));
    } else if (labels->parsed()) {
      const auto data = LoadJsonl(input);
      for (const auto& ex : data.examples) {
        const EditMatrix m = DeriveEditMatrix(ex);
        std::cout << "# line " << ex.line << '\n'
                  << DumpEditMatrix(m, ex.FlatContext(), ex.query) << "Y_det:";
        for (int y : DeriveKeywordLabels(m).labels) std::cout << ' ' << y;
        std::cout << "\n\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::kConfig ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
