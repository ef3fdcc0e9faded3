#pragma once

// Lightweight shared encoder plus the edit-matrix, detection and intent heads.
//
// Encoder: token + segment embeddings + sinusoidal positions, a projection to
// the hidden width (skipped when the widths match), then `encoder_layers`
// blocks of multi-head self-attention and a GELU feed-forward, each followed
// by residual layer norm. Dropout is applied after the embeddings and after
// each sublayer.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rewrite_lab/corpus.hpp"
#include "rewrite_lab/graph.hpp"
#include "rewrite_lab/rng.hpp"

namespace rewrite_lab {

struct ModelConfig {
  int vocab_size = 0;
  int embed_dim = 200;
  int hidden_dim = 200;
  double dropout_rate = 0.1;
  int encoder_layers = 2;
  int attention_heads = 4;
  std::uint64_t seed = 1;

  void Validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kInitRange = 0.08;

template <typename T>
struct LayerParameters {
  Matrix<T> query_weight, query_bias;
  Matrix<T> key_weight, key_bias;
  Matrix<T> value_weight, value_bias;
  Matrix<T> attn_norm_scale, attn_norm_shift;
  Matrix<T> ffn_in_weight, ffn_in_bias;
  Matrix<T> ffn_out_weight, ffn_out_bias;
  Matrix<T> ffn_norm_scale, ffn_norm_shift;
};

template <typename T>
struct ModelParameters {
  ModelConfig config;
  Matrix<T> token_embedding;    // V x E
  Matrix<T> segment_embedding;  // 3 x E
  Matrix<T> input_weight;       // E x H, empty when E == H
  Matrix<T> input_bias;         // 1 x H, empty when E == H
  std::vector<LayerParameters<T>> layers;
  Matrix<T> pair_bilinear;      // H x 3H, one H x H block per edit class (query side)
  Matrix<T> pair_context;       // H x 3
  Matrix<T> pair_query;         // H x 3
  Matrix<T> pair_bias;          // 1 x 3
  Matrix<T> detect_weight;      // H x 2
  Matrix<T> detect_bias;        // 1 x 2

  // Visits (name, tensor) in the fixed serialization order.
  template <typename F>
  void ForEach(F&& f) {
    ForEachImpl(*this, f);
  }
  template <typename F>
  void ForEach(F&& f) const {
    ForEachImpl(*this, f);
  }

  // Same shapes, all zeros; used for gradients and optimizer moments.
  ModelParameters ZerosLike() const;
  int64_t Count() const;
  bool AllFinite() const;

  template <typename U>
  ModelParameters<U> Cast() const;

 private:
  template <typename Self, typename F>
  static void ForEachImpl(Self& self, F& f) {
    f("token_embedding", self.token_embedding);
    f("segment_embedding", self.segment_embedding);
    f("input_weight", self.input_weight);
    f("input_bias", self.input_bias);
    for (size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layer" + std::to_string(l) + ".";
      f(p + "query_weight", L.query_weight);
      f(p + "query_bias", L.query_bias);
      f(p + "key_weight", L.key_weight);
      f(p + "key_bias", L.key_bias);
      f(p + "value_weight", L.value_weight);
      f(p + "value_bias", L.value_bias);
      f(p + "attn_norm_scale", L.attn_norm_scale);
      f(p + "attn_norm_shift", L.attn_norm_shift);
      f(p + "ffn_in_weight", L.ffn_in_weight);
      f(p + "ffn_in_bias", L.ffn_in_bias);
      f(p + "ffn_out_weight", L.ffn_out_weight);
      f(p + "ffn_out_bias", L.ffn_out_bias);
      f(p + "ffn_norm_scale", L.ffn_norm_scale);
      f(p + "ffn_norm_shift", L.ffn_norm_shift);
    }
    f("pair_bilinear", self.pair_bilinear);
    f("pair_context", self.pair_context);
    f("pair_query", self.pair_query);
    f("pair_bias", self.pair_bias);
    f("detect_weight", self.detect_weight);
    f("detect_bias", self.detect_bias);
  }
};

// Weights uniform in +-kInitRange drawn from config.seed; biases and layer
// norm offsets start at zero (layer norm gain is 1 + offset).
template <typename T>
ModelParameters<T> InitParams(const ModelConfig& config);

enum class DropoutMode { kInactive, kActive };

template <typename T>
struct EncoderOutput {
  Matrix<T> hidden;  // sequence length x H
  std::vector<T> cls;
  DropoutMode dropout_mode = DropoutMode::kInactive;
  // Draw counter of the rng when the masks were sampled; identifies the
  // dropout realization. Zero when dropout is inactive.
  std::uint64_t rng_draw_id = 0;
};

// Graph-level model: binds parameters as leaves of `graph` and builds the
// encoder and heads on packed batches. Gradients flow into `grads` when set.
template <typename T>
class ModelGraph {
 public:
  ModelGraph(Graph<T>& graph, const ModelParameters<T>& params, ModelParameters<T>* grads);

  struct Encoded {
    Var hidden;                   // packed rows x H
    std::vector<RowRange> ranges;  // one per input sequence
  };

  // Encodes all inputs in one packed pass. Dropout masks are drawn from `rng`
  // in row order when dropout is active.
  Encoded Encode(std::span<const EncoderInput> inputs, DropoutMode mode, Rng* rng);

  // (M*N) x 3 cell probabilities, row-major over (context i, query j).
  // One entry per (sequence range, joint input); M must be >= 1.
  std::vector<Var> MatrixProbs(Var hidden, std::span<const RowRange> ranges,
                               std::span<const JointInput* const> inputs);

  // (M+N) x 2 detection probabilities, context rows then query rows.
  Var DetectionProbs(Var hidden, RowRange range, const JointInput& input);

  // Rows at each range's first position ([CLS]), stacked B x H.
  Var Intents(Var hidden, std::span<const RowRange> ranges);

  Graph<T>& graph() { return graph_; }

 private:
  struct LayerVars {
    Var wq, bq, wk, bk, wv, bv, n1s, n1b, w1, b1, w2, b2, n2s, n2b;
  };

  Graph<T>& graph_;
  const ModelParameters<T>& params_;
  Var token_embedding_, segment_embedding_, input_weight_, input_bias_;
  std::vector<LayerVars> layers_;
  Var pair_bilinear_, pair_context_, pair_query_, pair_bias_, detect_weight_, detect_bias_;
};

// Single-sequence inference API.
template <typename T>
EncoderOutput<T> Encode(const EncoderInput& input, const ModelParameters<T>& params,
                        DropoutMode mode, Rng* rng);

// (M*N) x 3; throws EmptyContext when M == 0.
template <typename T>
Matrix<T> PredictMatrix(const EncoderOutput<T>& enc, const JointInput& input,
                        const ModelParameters<T>& params);

// (M+N) x 2.
template <typename T>
Matrix<T> PredictDetection(const EncoderOutput<T>& enc, const JointInput& input,
                           const ModelParameters<T>& params);

template <typename T>
std::vector<T> IntentOf(const EncoderOutput<T>& enc) {
  return enc.cls;
}

// Checkpoint: magic, format version, scalar width, ModelConfig, vocabulary,
// then every tensor as (name, rows, cols, raw values).
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void SaveCheckpoint(const std::string& path, const ModelParameters<T>& params,
                    const Vocabulary& vocab);

template <typename T>
struct Checkpoint {
  ModelParameters<T> params;
  Vocabulary vocab;
};

// Throws VersionError on a foreign file, a version mismatch or a config
// inconsistent with the stored tensors.
template <typename T>
Checkpoint<T> LoadCheckpoint(const std::string& path);

template <typename T>
void WriteParams(std::ostream& out, const ModelParameters<T>& params);
template <typename T>
void ReadParams(std::istream& in, ModelParameters<T>& params);

}  // namespace rewrite_lab
