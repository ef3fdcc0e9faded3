#include "rewrite_lab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rewrite_lab/decode.hpp"
#include "rewrite_lab/error.hpp"
#include "rewrite_lab/supervision.hpp"

namespace fs = std::filesystem;

namespace rewrite_lab {
namespace {

constexpr char kStateMagic[8] = {'R', 'W', 'L', 'B', 'S', 'T', 'A', 'T'};
constexpr std::uint32_t kStateVersion = 1;

// Stream tags for DeriveSeed.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDeletionStream = 2;
constexpr std::uint64_t kDropoutStream = 3;

constexpr int kPredictChunk = 32;

// Flushes subnormal floats to zero for the lifetime of the guard. Late in
// training many gradients underflow, and subnormal arithmetic is slow enough
// on x86 to more than double the step time.
class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE__)
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename V>
V ParseNumber(const std::string& key, const std::string& text) {
  V value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorKind::kConfig, "bad value for " + key + ": '" + text + "'");
  }
  return value;
}

bool ParseBool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(ErrorKind::kConfig, "bad value for " + key + ": '" + text + "'");
}

std::string FormatDouble(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename P>
void WritePod(std::ostream& out, P v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(P));
}

template <typename P>
P ReadPod(std::istream& in) {
  P v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(P));
  if (!in) throw Error(ErrorKind::kVersion, "truncated training state");
  return v;
}

std::vector<Matrix<float>*> Tensors(ModelParameters<float>& p) {
  std::vector<Matrix<float>*> out;
  p.ForEach([&](const std::string&, Matrix<float>& m) { out.push_back(&m); });
  return out;
}

std::vector<const Matrix<float>*> Tensors(const ModelParameters<float>& p) {
  std::vector<const Matrix<float>*> out;
  p.ForEach([&](const std::string&, const Matrix<float>& m) { out.push_back(&m); });
  return out;
}

bool Finite(const LossBreakdown& l) {
  for (double v : {l.l_mat_cq1, l.l_mat_cq2, l.l_det_cq1, l.l_det_cq2, l.l_icon, l.l_pcon,
                   l.l_final}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string CheckpointName(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch-%04d.ckpt", epoch);
  return buf;
}

void RequireFile(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorKind::kConfig, std::string(what) + " is not set");
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, std::string(what) + " not found: " + path);
}

EditMatrix ArgmaxMatrix(const Matrix<float>& probs, int M, int N) {
  EditMatrix m(M, N);
  for (int c = 0; c < M * N; ++c) {
    Eigen::Index best = 0;
    probs.row(c).maxCoeff(&best);
    m.ops[c] = static_cast<EditOp>(best);
  }
  return m;
}

void RequireRewrites(const std::vector<DialogueExample>& examples) {
  for (size_t k = 0; k < examples.size(); ++k) {
    if (!examples[k].rewrite) {
      const int line = examples[k].line > 0 ? examples[k].line : static_cast<int>(k) + 1;
      throw LineError(ErrorKind::kMissingGold, line, "example has no rewrite to evaluate against");
    }
  }
}

Evaluation Score(const std::vector<DialogueExample>& examples, std::vector<Tokens> predictions) {
  std::vector<Tokens> refs, queries;
  for (const auto& ex : examples) {
    refs.push_back(*ex.rewrite);
    queries.push_back(ex.query);
  }
  Evaluation e;
  e.report = Evaluate(predictions, refs, queries);
  e.predictions = std::move(predictions);
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::Validate() const {
  if (batch_size < 1) throw Error(ErrorKind::kConfig, "batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::kConfig, "epochs must be >= 1");
  if (keep_checkpoints < 0) throw Error(ErrorKind::kConfig, "keep_checkpoints must be >= 0");
  if (!(optimizer.learning_rate > 0)) throw Error(ErrorKind::kConfig, "learning_rate must be > 0");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1) ||
      !(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
    throw Error(ErrorKind::kConfig, "adam betas must be in [0, 1)");
  }
  if (!(optimizer.epsilon > 0)) throw Error(ErrorKind::kConfig, "adam_epsilon must be > 0");
  loss.Validate();
  ModelConfig probe = model;
  if (probe.vocab_size == 0) probe.vocab_size = Vocabulary::kNumReserved;
  probe.Validate();
}

void RunConfig::Set(const std::string& key, const std::string& value) {
  if (key == "embed_dim") model.embed_dim = ParseNumber<int>(key, value);
  else if (key == "hidden_dim") model.hidden_dim = ParseNumber<int>(key, value);
  else if (key == "dropout_rate") model.dropout_rate = ParseNumber<double>(key, value);
  else if (key == "encoder_layers") model.encoder_layers = ParseNumber<int>(key, value);
  else if (key == "attention_heads") model.attention_heads = ParseNumber<int>(key, value);
  else if (key == "alpha") loss.alpha = ParseNumber<double>(key, value);
  else if (key == "beta") loss.beta = ParseNumber<double>(key, value);
  else if (key == "gamma") loss.gamma = ParseNumber<double>(key, value);
  else if (key == "tau") loss.tau = ParseNumber<double>(key, value);
  else if (key == "class_weights") {
    std::stringstream ss(value);
    std::string part;
    int k = 0;
    while (std::getline(ss, part, ',')) {
      if (k == 3) throw Error(ErrorKind::kConfig, "class_weights needs exactly 3 values");
      loss.class_weights[k++] = ParseNumber<double>(key, Trim(part));
    }
    if (k != 3) throw Error(ErrorKind::kConfig, "class_weights needs exactly 3 values");
  } else if (key == "learning_rate") optimizer.learning_rate = ParseNumber<double>(key, value);
  else if (key == "adam_beta1") optimizer.beta1 = ParseNumber<double>(key, value);
  else if (key == "adam_beta2") optimizer.beta2 = ParseNumber<double>(key, value);
  else if (key == "adam_epsilon") optimizer.epsilon = ParseNumber<double>(key, value);
  else if (key == "batch_size") batch_size = ParseNumber<int>(key, value);
  else if (key == "epochs") epochs = ParseNumber<int>(key, value);
  else if (key == "seed") seed = ParseNumber<std::uint64_t>(key, value);
  else if (key == "train_path") train_path = value;
  else if (key == "eval_path") eval_path = value;
  else if (key == "neg_strategy") neg_strategy = ParseNegativeStrategy(value);
  else if (key == "anchors_both_passes") anchors_both_passes = ParseBool(key, value);
  else if (key == "output_dir") output_dir = value;
  else if (key == "keep_checkpoints") keep_checkpoints = ParseNumber<int>(key, value);
  else throw Error(ErrorKind::kConfig, "unknown config key '" + key + "'");
}

std::string RunConfig::ToText() const {
  std::ostringstream out;
  out << "embed_dim = " << model.embed_dim << '\n'
      << "hidden_dim = " << model.hidden_dim << '\n'
      << "dropout_rate = " << FormatDouble(model.dropout_rate) << '\n'
      << "encoder_layers = " << model.encoder_layers << '\n'
      << "attention_heads = " << model.attention_heads << '\n'
      << "alpha = " << FormatDouble(loss.alpha) << '\n'
      << "beta = " << FormatDouble(loss.beta) << '\n'
      << "gamma = " << FormatDouble(loss.gamma) << '\n'
      << "tau = " << FormatDouble(loss.tau) << '\n'
      << "class_weights = " << FormatDouble(loss.class_weights[0]) << ','
      << FormatDouble(loss.class_weights[1]) << ',' << FormatDouble(loss.class_weights[2]) << '\n'
      << "learning_rate = " << FormatDouble(optimizer.learning_rate) << '\n'
      << "adam_beta1 = " << FormatDouble(optimizer.beta1) << '\n'
      << "adam_beta2 = " << FormatDouble(optimizer.beta2) << '\n'
      << "adam_epsilon = " << FormatDouble(optimizer.epsilon) << '\n'
      << "batch_size = " << batch_size << '\n'
      << "epochs = " << epochs << '\n'
      << "seed = " << seed << '\n'
      << "train_path = " << train_path << '\n'
      << "eval_path = " << eval_path << '\n'
      << "neg_strategy = " << NegativeStrategyName(neg_strategy) << '\n'
      << "anchors_both_passes = " << (anchors_both_passes ? "true" : "false") << '\n'
      << "output_dir = " << output_dir << '\n'
      << "keep_checkpoints = " << keep_checkpoints << '\n';
  return out.str();
}

RunConfig RunConfig::Parse(std::istream& in) {
  RunConfig config;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string text = Trim(raw.substr(0, raw.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw LineError(ErrorKind::kConfig, line, "expected key = value");
    }
    try {
      config.Set(Trim(text.substr(0, eq)), Trim(text.substr(eq + 1)));
    } catch (const LineError&) {
      throw;
    } catch (const Error& e) {
      throw LineError(ErrorKind::kConfig, line, e.what());
    }
  }
  return config;
}

RunConfig RunConfig::LoadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config " + path);
  return Parse(in);
}

bool ApplySeedOverride(RunConfig& config) {
  const char* env = std::getenv("REWRITE_LAB_SEED");
  if (!env || !*env) return false;
  config.seed = ParseNumber<std::uint64_t>("REWRITE_LAB_SEED", env);
  return true;
}

// ---------------------------------------------------------------------------
// TrainState

void TrainState::Save(std::ostream& out) const {
  out.write(kStateMagic, sizeof(kStateMagic));
  WritePod<std::uint32_t>(out, kStateVersion);
  WritePod<std::int64_t>(out, step);
  WritePod<std::int32_t>(out, epoch);
  WritePod<std::int32_t>(out, batch);
  std::ostringstream rng;
  dropout_rng.Save(rng);
  const std::string text = rng.str();
  WritePod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  WriteParams(out, params);
  WriteParams(out, moments.first);
  WriteParams(out, moments.second);
}

void TrainState::Load(std::istream& in) {
  char magic[sizeof(kStateMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0) {
    throw Error(ErrorKind::kVersion, "not a training state file");
  }
  if (ReadPod<std::uint32_t>(in) != kStateVersion) {
    throw Error(ErrorKind::kVersion, "unsupported training state version");
  }
  step = ReadPod<std::int64_t>(in);
  epoch = ReadPod<std::int32_t>(in);
  batch = ReadPod<std::int32_t>(in);
  std::string text(ReadPod<std::uint64_t>(in), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  std::istringstream rng(text);
  dropout_rng.Load(rng);
  if (!rng) throw Error(ErrorKind::kVersion, "corrupt rng state");
  ReadParams(in, params);
  ReadParams(in, moments.first);
  ReadParams(in, moments.second);
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(RunConfig config, std::vector<DialogueExample> examples)
    : config_(std::move(config)), examples_(std::move(examples)) {
  config_.Validate();
  prepared_ = PrepareExamples(examples_, Vocabulary(), &dropped_);
  if (!dropped_.empty()) {
    std::clog << "warning: dropped " << dropped_.size() << " of " << examples_.size()
              << " training examples\n";
  }
  if (prepared_.empty()) throw Error(ErrorKind::kConfig, "no trainable examples");
  std::vector<DialogueExample> kept;
  for (const auto& p : prepared_) kept.push_back(*p.example);
  vocab_ = Vocabulary::Build(kept);
  // Token ids depend on the vocabulary, so rebuild the joint inputs.
  for (auto& p : prepared_) p.joint = BuildJointInput(*p.example, vocab_);

  config_.model.vocab_size = vocab_.size();
  config_.model.seed = config_.seed;
  state_.params = InitParams<float>(config_.model);
  state_.moments.first = state_.params.ZerosLike();
  state_.moments.second = state_.params.ZerosLike();
  state_.dropout_rng = Rng(DeriveSeed(config_.seed, kDropoutStream));
}

int Trainer::StepsPerEpoch() const {
  return (trainable() + config_.batch_size - 1) / config_.batch_size;
}

std::vector<int> Trainer::EpochOrder(int epoch) const {
  std::vector<int> order(prepared_.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  Rng rng(DeriveSeed(config_.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
  for (size_t k = order.size(); k > 1; --k) {
    std::swap(order[k - 1], order[rng.Below(k)]);
  }
  return order;
}

LossBreakdown Trainer::Step() {
  const FlushDenormals flush;
  if (order_epoch_ != state_.epoch) {
    order_ = EpochOrder(state_.epoch);
    order_epoch_ = state_.epoch;
  }
  const int B = config_.batch_size;
  const int begin = state_.batch * B;
  const int end = std::min(begin + B, trainable());
  std::vector<const PreparedExample*> batch;
  std::vector<Rng> deletion;
  const std::uint64_t epoch_seed =
      DeriveSeed(config_.seed, kDeletionStream, static_cast<std::uint64_t>(state_.epoch));
  for (int k = begin; k < end; ++k) {
    batch.push_back(&prepared_[order_[k]]);
    deletion.emplace_back(DeriveSeed(epoch_seed, static_cast<std::uint64_t>(order_[k])));
  }

  ObjectiveOptions options;
  options.weights = config_.loss;
  options.strategy = config_.neg_strategy;
  options.anchors_both_passes = config_.anchors_both_passes;

  ModelParameters<float> grads = state_.params.ZerosLike();
  Graph<float> graph;
  ModelGraph<float> model(graph, state_.params, &grads);
  auto objective = BuildObjective<float>(model, batch, vocab_, options, state_.dropout_rng,
                                         deletion);
  if (!Finite(objective.breakdown)) {
    DumpBatch(batch, objective.breakdown);
    throw Error(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(state_.step) +
                                         "; batch written to " +
                                         (fs::path(config_.output_dir) / "nan_batch.jsonl").string());
  }
  graph.Backward(objective.vars.total);
  AdamUpdate(grads);

  ++state_.step;
  if (++state_.batch == StepsPerEpoch()) {
    state_.batch = 0;
    ++state_.epoch;
  }
  return objective.breakdown;
}

void Trainer::AdamUpdate(const ModelParameters<float>& grads) {
  const OptimizerConfig& o = config_.optimizer;
  const double t = static_cast<double>(state_.step + 1);
  const float lr = static_cast<float>(o.learning_rate);
  const float b1 = static_cast<float>(o.beta1);
  const float b2 = static_cast<float>(o.beta2);
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(o.beta1, t)));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(o.beta2, t)));
  const float eps = static_cast<float>(o.epsilon);
  auto p = Tensors(state_.params);
  auto m = Tensors(state_.moments.first);
  auto v = Tensors(state_.moments.second);
  auto g = Tensors(grads);
  for (size_t k = 0; k < p.size(); ++k) {
    m[k]->array() = b1 * m[k]->array() + (1 - b1) * g[k]->array();
    v[k]->array() = b2 * v[k]->array() + (1 - b2) * g[k]->array().square();
    p[k]->array() -= lr * (m[k]->array() * c1) / ((v[k]->array() * c2).sqrt() + eps);
  }
}

void Trainer::DumpBatch(const std::vector<const PreparedExample*>& batch,
                        const LossBreakdown& losses) const {
  fs::create_directories(config_.output_dir);
  std::ofstream out(fs::path(config_.output_dir) / "nan_batch.jsonl");
  for (const auto* p : batch) out << ExampleToJson(*p->example) << '\n';
  std::clog << "error: non-finite loss at step " << state_.step << ": " << LossBreakdown::CsvHeader()
            << " = " << losses.CsvRow() << '\n';
}

void Trainer::SaveState(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write training state " + path);
  WritePod<std::uint64_t>(out, vocab_.Fingerprint());
  state_.Save(out);
  if (!out) throw Error(ErrorKind::kIo, "failed writing training state " + path);
}

void Trainer::LoadState(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open training state " + path);
  if (ReadPod<std::uint64_t>(in) != vocab_.Fingerprint()) {
    throw Error(ErrorKind::kVersion, "training state was written for another vocabulary");
  }
  TrainState loaded = state_;
  loaded.Load(in);
  state_ = std::move(loaded);
}

// ---------------------------------------------------------------------------
// Train

std::string TrainLogHeader() { return std::string("step,epoch,") + LossBreakdown::CsvHeader(); }

TrainResult Train(const RunConfig& config, const std::optional<std::string>& resume_state) {
  config.Validate();
#if defined(__GLIBC__)
  // Every step allocates and frees the same few hundred activation buffers;
  // serving them from the heap instead of fresh mappings saves the page
  // faults.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  RequireFile(config.train_path, "train_path");
  Corpus corpus = LoadJsonl(config.train_path);
  Trainer trainer(config, std::move(corpus.examples));
  if (resume_state) trainer.LoadState(*resume_state);

  const fs::path dir(config.output_dir);
  const fs::path ckpt_dir = dir / "checkpoints";
  fs::create_directories(ckpt_dir);
  {
    std::ofstream cfg(dir / "config.txt");
    cfg << config.ToText();
  }
  trainer.vocab().Save((dir / "vocab.txt").string());

  TrainResult result;
  result.log_path = (dir / "train_log.csv").string();
  result.dropped = static_cast<int>(trainer.dropped().size());
  std::ofstream log(result.log_path, resume_state ? std::ios::app : std::ios::trunc);
  if (!log) throw Error(ErrorKind::kIo, "cannot write " + result.log_path);
  if (!resume_state) log << TrainLogHeader() << '\n';

  std::vector<fs::path> written;
  while (!trainer.Finished()) {
    const int epoch = trainer.state().epoch;
    const std::int64_t step = trainer.state().step;
    const LossBreakdown losses = trainer.Step();
    log << step << ',' << epoch << ',' << losses.CsvRow() << '\n';
    if (trainer.state().batch == 0) {
      const fs::path path = ckpt_dir / CheckpointName(trainer.state().epoch);
      SaveCheckpoint(path.string(), trainer.state().params, trainer.vocab());
      trainer.SaveState((dir / "state.bin").string());
      written.push_back(path);
      ++result.checkpoints_written;
      if (config.keep_checkpoints > 0 &&
          written.size() > static_cast<size_t>(config.keep_checkpoints)) {
        fs::remove(written.front());
        written.erase(written.begin());
      }
    }
  }
  log.flush();

  result.final_checkpoint = (dir / "final.ckpt").string();
  SaveCheckpoint(result.final_checkpoint, trainer.state().params, trainer.vocab());
  result.params = trainer.state().params;
  result.vocab = trainer.vocab();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<Tokens> PredictRewrites(const ModelParameters<float>& params, const Vocabulary& vocab,
                                    const std::vector<DialogueExample>& examples) {
  std::vector<Tokens> out(examples.size());
  std::vector<size_t> pending;
  for (size_t k = 0; k < examples.size(); ++k) {
    if (examples[k].FlatContext().empty()) {
      out[k] = examples[k].query;
    } else {
      pending.push_back(k);
    }
  }
  for (size_t start = 0; start < pending.size(); start += kPredictChunk) {
    const size_t stop = std::min(pending.size(), start + kPredictChunk);
    std::vector<JointInput> joints;
    std::vector<EncoderInput> inputs;
    for (size_t k = start; k < stop; ++k) {
      joints.push_back(BuildJointInput(examples[pending[k]], vocab));
      inputs.push_back(joints.back().ToEncoderInput());
    }
    std::vector<const JointInput*> joint_ptrs;
    for (const auto& j : joints) joint_ptrs.push_back(&j);

    Graph<float> graph;
    ModelGraph<float> model(graph, params, nullptr);
    auto enc = model.Encode(inputs, DropoutMode::kInactive, nullptr);
    auto probs = model.MatrixProbs(enc.hidden, enc.ranges, joint_ptrs);
    for (size_t k = start; k < stop; ++k) {
      const DialogueExample& ex = examples[pending[k]];
      const JointInput& joint = joints[k - start];
      const EditMatrix grid = ArgmaxMatrix(graph.value(probs[k - start]), joint.M(), joint.N());
      out[pending[k]] = ApplyEditMatrix(ex.query, ex.FlatContext(), grid);
    }
  }
  return out;
}

Evaluation EvaluateModel(const ModelParameters<float>& params, const Vocabulary& vocab,
                         const std::vector<DialogueExample>& examples) {
  RequireRewrites(examples);
  return Score(examples, PredictRewrites(params, vocab, examples));
}

Evaluation EvaluateOracle(const std::vector<DialogueExample>& examples) {
  RequireRewrites(examples);
  std::vector<Tokens> predictions;
  for (const auto& ex : examples) {
    const Tokens context = ex.FlatContext();
    if (context.empty()) {
      predictions.push_back(ex.query);
    } else {
      predictions.push_back(ApplyEditMatrix(ex.query, context, DeriveEditMatrix(ex)));
    }
  }
  return Score(examples, std::move(predictions));
}

EvalReport EvaluateCheckpoint(const std::string& checkpoint, const std::string& corpus,
                              const std::string& output_dir) {
  const auto ckpt = LoadCheckpoint<float>(checkpoint);
  const Corpus data = LoadJsonl(corpus);
  const Evaluation eval = EvaluateModel(ckpt.params, ckpt.vocab, data.examples);

  fs::create_directories(output_dir);
  {
    std::ofstream csv(fs::path(output_dir) / "report.csv");
    csv << EvalReport::CsvHeader() << '\n' << eval.report.CsvRow() << '\n';
  }
  std::ofstream out(fs::path(output_dir) / "predictions.jsonl");
  for (size_t k = 0; k < data.examples.size(); ++k) {
    const auto& ex = data.examples[k];
    nlohmann::ordered_json j;
    j["query"] = Detokenize(ex.query);
    j["rewrite"] = Detokenize(*ex.rewrite);
    j["rewrite_pred"] = Detokenize(eval.predictions[k]);
    j["exact"] = eval.predictions[k] == *ex.rewrite;
    out << j.dump() << '\n';
  }
  return eval.report;
}

void RewriteFile(const std::string& checkpoint, const std::string& input,
                 const std::string& output) {
  const auto ckpt = LoadCheckpoint<float>(checkpoint);
  const Corpus data = LoadJsonl(input);
  const auto predictions = PredictRewrites(ckpt.params, ckpt.vocab, data.examples);
  std::ofstream out(output);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + output);
  for (size_t k = 0; k < data.examples.size(); ++k) {
    nlohmann::ordered_json j;
    j["query"] = Detokenize(data.examples[k].query);
    j["rewrite_pred"] = Detokenize(predictions[k]);
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Experiments

std::string FormatTemperature(double tau) { return FormatDouble(tau); }

void WriteExperimentCsv(const std::string& path, const std::string& label_column,
                        const std::vector<ExperimentRow>& rows) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << label_column << ',' << EvalReport::CsvHeader() << '\n';
  for (const auto& row : rows) out << row.label << ',' << row.report.CsvRow() << '\n';
}

namespace {

ExperimentRow TrainAndEvaluate(const RunConfig& config, const std::string& label,
                               const std::vector<DialogueExample>& eval_examples) {
  const TrainResult run = Train(config);
  return {label, EvaluateModel(run.params, run.vocab, eval_examples).report};
}

std::vector<DialogueExample> LoadEvalExamples(const RunConfig& config) {
  RequireFile(config.eval_path, "eval_path");
  auto examples = LoadJsonl(config.eval_path).examples;
  RequireRewrites(examples);
  return examples;
}

}  // namespace

std::vector<ExperimentRow> SweepTemperature(const RunConfig& config,
                                            const std::vector<double>& grid,
                                            const std::string& csv_path) {
  if (grid.empty()) throw Error(ErrorKind::kConfig, "temperature grid is empty");
  const auto eval_examples = LoadEvalExamples(config);
  std::vector<ExperimentRow> rows;
  for (double tau : grid) {
    RunConfig c = config;
    c.loss.tau = tau;
    const std::string label = FormatTemperature(tau);
    c.output_dir = (fs::path(config.output_dir) / ("tau-" + label)).string();
    rows.push_back(TrainAndEvaluate(c, label, eval_examples));
  }
  WriteExperimentCsv(csv_path, "tau", rows);
  return rows;
}

std::string SweepSummary(const std::vector<ExperimentRow>& rows) {
  if (rows.empty()) return "best tau=none";
  const ExperimentRow* best = &rows.front();
  for (const auto& r : rows) {
    if (r.report.f3 > best->report.f3) best = &r;
  }
  std::ostringstream out;
  out << "best tau=" << best->label << " f3=" << best->report.f3;
  return out.str();
}

std::vector<ExperimentRow> CompareNegativeStrategies(const RunConfig& config,
                                                     const std::string& csv_path) {
  const auto eval_examples = LoadEvalExamples(config);
  std::vector<ExperimentRow> rows;
  for (NegativeStrategy s : {NegativeStrategy::kRandomDeletion, NegativeStrategy::kOrigin,
                             NegativeStrategy::kSpanErase}) {
    RunConfig c = config;
    c.neg_strategy = s;
    const std::string label = NegativeStrategyName(s);
    c.output_dir = (fs::path(config.output_dir) / ("neg-" + label)).string();
    rows.push_back(TrainAndEvaluate(c, label, eval_examples));
  }
  WriteExperimentCsv(csv_path, "strategy", rows);
  return rows;
}

}  // namespace rewrite_lab
