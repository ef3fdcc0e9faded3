#pragma once

// Training loop, run configuration, evaluation and the two analysis
// experiments (temperature sweep and negative-strategy comparison).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rewrite_lab/contrastive.hpp"
#include "rewrite_lab/corpus.hpp"
#include "rewrite_lab/losses.hpp"
#include "rewrite_lab/metrics.hpp"
#include "rewrite_lab/model.hpp"
#include "rewrite_lab/training.hpp"

namespace rewrite_lab {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Flat key=value file; keys are the field names below (model and loss fields
// unprefixed, e.g. `hidden_dim = 200`, `beta = 0`, `class_weights = 1,5,5`).
struct RunConfig {
  ModelConfig model;  // vocab_size comes from the training corpus, seed from `seed`
  LossWeights loss;
  OptimizerConfig optimizer;
  int batch_size = 8;
  int epochs = 200;
  std::uint64_t seed = 1;
  std::string train_path;
  std::string eval_path;
  NegativeStrategy neg_strategy = NegativeStrategy::kRandomDeletion;
  bool anchors_both_passes = false;
  std::string output_dir = "run";
  // Keep only the newest k epoch checkpoints; 0 keeps all of them.
  int keep_checkpoints = 0;

  void Validate() const;
  // Throws ConfigError on an unknown key or a malformed value.
  void Set(const std::string& key, const std::string& value);
  std::string ToText() const;

  static RunConfig Parse(std::istream& in);
  static RunConfig LoadFile(const std::string& path);
};

// Applies REWRITE_LAB_SEED when set. Returns true if it did.
bool ApplySeedOverride(RunConfig& config);

template <typename T>
struct AdamMoments {
  ModelParameters<T> first, second;
};

struct TrainState {
  ModelParameters<float> params;
  AdamMoments<float> moments;
  std::int64_t step = 0;  // optimizer steps taken
  int epoch = 0;          // completed epochs
  int batch = 0;          // batches consumed in the current epoch
  Rng dropout_rng;

  void Save(std::ostream& out) const;
  void Load(std::istream& in);
};

class Trainer {
 public:
  // Builds the vocabulary from `examples`, derives supervision (dropping
  // unalignable examples with a warning) and initializes the state.
  Trainer(RunConfig config, std::vector<DialogueExample> examples);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  // One optimizer step on the next batch.
  LossBreakdown Step();

  bool Finished() const { return state_.epoch >= config_.epochs; }
  int StepsPerEpoch() const;

  void SaveState(const std::string& path) const;
  // Throws VersionError when the state was written for another vocabulary or
  // parameter layout.
  void LoadState(const std::string& path);

  const RunConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<int>& dropped() const { return dropped_; }
  int trainable() const { return static_cast<int>(prepared_.size()); }

 private:
  std::vector<int> EpochOrder(int epoch) const;
  void AdamUpdate(const ModelParameters<float>& grads);
  void DumpBatch(const std::vector<const PreparedExample*>& batch,
                 const LossBreakdown& losses) const;

  RunConfig config_;
  std::vector<DialogueExample> examples_;
  Vocabulary vocab_;
  std::vector<PreparedExample> prepared_;
  std::vector<int> dropped_;
  TrainState state_;
  std::vector<int> order_;
  int order_epoch_ = -1;
};

struct TrainResult {
  std::string final_checkpoint;
  std::string log_path;
  int dropped = 0;
  int checkpoints_written = 0;
  ModelParameters<float> params;
  Vocabulary vocab;
};

// Runs to config.epochs, logging one CSV row per step to
// <output_dir>/train_log.csv and writing <output_dir>/checkpoints/epoch-NNNN.ckpt
// plus a resumable <output_dir>/state.bin after every epoch. With
// `resume_state` the run continues from that state and appends to the log.
TrainResult Train(const RunConfig& config, const std::optional<std::string>& resume_state = {});

// Header of the training log.
std::string TrainLogHeader();

// Decodes each example with dropout off. Empty-context examples copy the query.
std::vector<Tokens> PredictRewrites(const ModelParameters<float>& params, const Vocabulary& vocab,
                                    const std::vector<DialogueExample>& examples);

struct Evaluation {
  EvalReport report;
  std::vector<Tokens> predictions;
};

// Throws MissingGold naming the first example without a rewrite.
Evaluation EvaluateModel(const ModelParameters<float>& params, const Vocabulary& vocab,
                         const std::vector<DialogueExample>& examples);

// Decodes the gold edit matrices instead of model predictions; an identity
// check of the label/decode pipeline.
Evaluation EvaluateOracle(const std::vector<DialogueExample>& examples);

// Loads the checkpoint and corpus, evaluates, and writes report.csv and
// predictions.jsonl into `output_dir`.
EvalReport EvaluateCheckpoint(const std::string& checkpoint, const std::string& corpus,
                              const std::string& output_dir);

// Writes {"query", "rewrite_pred"} per input line.
void RewriteFile(const std::string& checkpoint, const std::string& input,
                 const std::string& output);

struct ExperimentRow {
  std::string label;
  EvalReport report;
};

inline const std::vector<double> kDefaultTemperatureGrid = {0.05, 0.1, 0.3, 0.5, 0.7, 1.0};

// Shortest text that round-trips `tau`, used for the CSV label.
std::string FormatTemperature(double tau);

// One training run per temperature (same seed), each evaluated on
// config.eval_path. Writes `csv_path` with a leading `tau` column.
std::vector<ExperimentRow> SweepTemperature(const RunConfig& config,
                                            const std::vector<double>& grid,
                                            const std::string& csv_path);

// "best tau=<label> f3=<value>" for the highest F3 (first on ties).
std::string SweepSummary(const std::vector<ExperimentRow>& rows);

// One run per negative strategy (rd, origin, se). Writes `csv_path` with a
// leading `strategy` column.
std::vector<ExperimentRow> CompareNegativeStrategies(const RunConfig& config,
                                                     const std::string& csv_path);

void WriteExperimentCsv(const std::string& path, const std::string& label_column,
                        const std::vector<ExperimentRow>& rows);

}  // namespace rewrite_lab
