#include "rewrite_lab/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "rewrite_lab/error.hpp"

namespace rewrite_lab {
namespace {

constexpr char kMagic[8] = {'R', 'W', 'L', 'B', 'C', 'K', 'P', 'T'};

bool EndsWith(const std::string& s, const char* suffix) {
  const size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

template <typename T>
std::vector<Matrix<T>*> TensorList(ModelParameters<T>& p) {
  std::vector<Matrix<T>*> out;
  p.ForEach([&](const std::string&, Matrix<T>& m) { out.push_back(&m); });
  return out;
}

template <typename T>
std::vector<const Matrix<T>*> TensorList(const ModelParameters<T>& p) {
  std::vector<const Matrix<T>*> out;
  p.ForEach([&](const std::string&, const Matrix<T>& m) { out.push_back(&m); });
  return out;
}

// Sinusoidal position table, grown on demand and cached per width.
template <typename T>
const Matrix<T>& PositionTable(int width, int length) {
  thread_local std::map<int, Matrix<T>> cache;
  Matrix<T>& table = cache[width];
  if (table.rows() < length) {
    const int rows = std::max(length, 2 * static_cast<int>(table.rows()));
    table.resize(rows, width);
    for (int pos = 0; pos < rows; ++pos) {
      for (int k = 0; k < width; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) / width);
        table(pos, k) = static_cast<T>(k % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
      }
    }
  }
  return table;
}

template <typename V>
void WritePod(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V ReadPod(std::istream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw Error(ErrorKind::kVersion, "truncated checkpoint");
  return v;
}

void WriteString(std::ostream& out, const std::string& s) {
  WritePod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string ReadString(std::istream& in) {
  const auto n = ReadPod<std::uint32_t>(in);
  if (n > (1u << 20)) throw Error(ErrorKind::kVersion, "corrupt string length in checkpoint");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error(ErrorKind::kVersion, "truncated checkpoint");
  return s;
}

template <typename T>
ModelParameters<T> ShapedParams(const ModelConfig& c) {
  ModelParameters<T> p;
  p.config = c;
  const int V = c.vocab_size, E = c.embed_dim, H = c.hidden_dim;
  p.token_embedding.resize(V, E);
  p.segment_embedding.resize(kNumSegments, E);
  // No projection when the embedding already has the hidden width.
  if (E != H) {
    p.input_weight.resize(E, H);
    p.input_bias.resize(1, H);
  }
  p.layers.resize(c.encoder_layers);
  for (auto& L : p.layers) {
    for (auto* w : {&L.query_weight, &L.key_weight, &L.value_weight, &L.ffn_in_weight,
                    &L.ffn_out_weight}) {
      w->resize(H, H);
    }
    for (auto* b : {&L.query_bias, &L.key_bias, &L.value_bias, &L.ffn_in_bias, &L.ffn_out_bias,
                    &L.attn_norm_scale, &L.attn_norm_shift, &L.ffn_norm_scale,
                    &L.ffn_norm_shift}) {
      b->resize(1, H);
    }
  }
  p.pair_bilinear.resize(H, 3 * H);
  p.pair_context.resize(H, 3);
  p.pair_query.resize(H, 3);
  p.pair_bias.resize(1, 3);
  p.detect_weight.resize(H, 2);
  p.detect_bias.resize(1, 2);
  return p;
}

}  // namespace

void ModelConfig::Validate() const {
  if (vocab_size < Vocabulary::kNumReserved) {
    throw Error(ErrorKind::kConfig, "vocab_size must cover the reserved tokens");
  }
  if (embed_dim < 1 || hidden_dim < 1 || encoder_layers < 0 || attention_heads < 1) {
    throw Error(ErrorKind::kConfig, "model dimensions must be >= 1");
  }
  if (hidden_dim % attention_heads != 0) {
    throw Error(ErrorKind::kConfig, "hidden_dim must be divisible by attention_heads");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorKind::kConfig, "dropout_rate must be in [0, 1)");
  }
}

template <typename T>
ModelParameters<T> ModelParameters<T>::ZerosLike() const {
  ModelParameters<T> out = *this;
  out.ForEach([](const std::string&, Matrix<T>& m) { m.setZero(); });
  return out;
}

template <typename T>
int64_t ModelParameters<T>::Count() const {
  int64_t n = 0;
  ForEach([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

template <typename T>
bool ModelParameters<T>::AllFinite() const {
  bool ok = true;
  ForEach([&](const std::string&, const Matrix<T>& m) { ok = ok && m.allFinite(); });
  return ok;
}

template <typename T>
template <typename U>
ModelParameters<U> ModelParameters<T>::Cast() const {
  ModelParameters<U> out = ShapedParams<U>(config);
  auto src = TensorList(*this);
  auto dst = TensorList(out);
  for (size_t k = 0; k < src.size(); ++k) *dst[k] = src[k]->template cast<U>();
  return out;
}

template <typename T>
ModelParameters<T> InitParams(const ModelConfig& config) {
  config.Validate();
  ModelParameters<T> p = ShapedParams<T>(config);
  Rng rng(config.seed);
  p.ForEach([&](const std::string& name, Matrix<T>& m) {
    if (EndsWith(name, "bias") || EndsWith(name, "shift") || EndsWith(name, "scale")) {
      m.setZero();
      return;
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<T>(rng.UniformIn(-kInitRange, kInitRange));
    }
  });
  return p;
}

template <typename T>
ModelGraph<T>::ModelGraph(Graph<T>& graph, const ModelParameters<T>& params,
                          ModelParameters<T>* grads)
    : graph_(graph), params_(params) {
  auto bind = [&](const Matrix<T>& value, Matrix<T>* sink) { return graph_.Param(value, sink); };
  ModelParameters<T>* g = grads;
  token_embedding_ = bind(params.token_embedding, g ? &g->token_embedding : nullptr);
  segment_embedding_ = bind(params.segment_embedding, g ? &g->segment_embedding : nullptr);
  input_weight_ = bind(params.input_weight, g ? &g->input_weight : nullptr);
  input_bias_ = bind(params.input_bias, g ? &g->input_bias : nullptr);
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto& P = params.layers[l];
    LayerParameters<T>* G = g ? &g->layers[l] : nullptr;
    LayerVars v;
    v.wq = bind(P.query_weight, G ? &G->query_weight : nullptr);
    v.bq = bind(P.query_bias, G ? &G->query_bias : nullptr);
    v.wk = bind(P.key_weight, G ? &G->key_weight : nullptr);
    v.bk = bind(P.key_bias, G ? &G->key_bias : nullptr);
    v.wv = bind(P.value_weight, G ? &G->value_weight : nullptr);
    v.bv = bind(P.value_bias, G ? &G->value_bias : nullptr);
    v.n1s = bind(P.attn_norm_scale, G ? &G->attn_norm_scale : nullptr);
    v.n1b = bind(P.attn_norm_shift, G ? &G->attn_norm_shift : nullptr);
    v.w1 = bind(P.ffn_in_weight, G ? &G->ffn_in_weight : nullptr);
    v.b1 = bind(P.ffn_in_bias, G ? &G->ffn_in_bias : nullptr);
    v.w2 = bind(P.ffn_out_weight, G ? &G->ffn_out_weight : nullptr);
    v.b2 = bind(P.ffn_out_bias, G ? &G->ffn_out_bias : nullptr);
    v.n2s = bind(P.ffn_norm_scale, G ? &G->ffn_norm_scale : nullptr);
    v.n2b = bind(P.ffn_norm_shift, G ? &G->ffn_norm_shift : nullptr);
    layers_.push_back(v);
  }
  pair_bilinear_ = bind(params.pair_bilinear, g ? &g->pair_bilinear : nullptr);
  pair_context_ = bind(params.pair_context, g ? &g->pair_context : nullptr);
  pair_query_ = bind(params.pair_query, g ? &g->pair_query : nullptr);
  pair_bias_ = bind(params.pair_bias, g ? &g->pair_bias : nullptr);
  detect_weight_ = bind(params.detect_weight, g ? &g->detect_weight : nullptr);
  detect_bias_ = bind(params.detect_bias, g ? &g->detect_bias : nullptr);
}

template <typename T>
typename ModelGraph<T>::Encoded ModelGraph<T>::Encode(std::span<const EncoderInput> inputs,
                                                      DropoutMode mode, Rng* rng) {
  const ModelConfig& cfg = params_.config;
  const bool dropout = mode == DropoutMode::kActive && cfg.dropout_rate > 0.0;
  if (dropout && rng == nullptr) throw Error(ErrorKind::kConfig, "active dropout needs an rng");

  Encoded enc;
  std::vector<int> ids, segments;
  int longest = 0;
  for (const auto& in : inputs) {
    if (in.ids.empty() || in.ids.size() != in.segments.size()) {
      throw Error(ErrorKind::kShape, "encoder input must be non-empty with one segment per id");
    }
    enc.ranges.push_back(RowRange{static_cast<int>(ids.size()), in.size()});
    for (int k = 0; k < in.size(); ++k) {
      if (in.ids[k] < 0 || in.ids[k] >= cfg.vocab_size) {
        throw Error(ErrorKind::kVocab, "token id " + std::to_string(in.ids[k]) +
                                           " outside vocabulary of " +
                                           std::to_string(cfg.vocab_size));
      }
      if (in.segments[k] < 0 || in.segments[k] >= kNumSegments) {
        throw Error(ErrorKind::kShape, "segment id out of range");
      }
    }
    ids.insert(ids.end(), in.ids.begin(), in.ids.end());
    segments.insert(segments.end(), in.segments.begin(), in.segments.end());
    longest = std::max(longest, in.size());
  }

  const Matrix<T>& table = PositionTable<T>(cfg.embed_dim, longest);
  Matrix<T> positions(static_cast<Eigen::Index>(ids.size()), cfg.embed_dim);
  for (const auto& r : enc.ranges) positions.middleRows(r.offset, r.length) = table.topRows(r.length);

  Graph<T>& g = graph_;
  Var x = g.Add(g.GatherRows(token_embedding_, std::move(ids)),
                g.GatherRows(segment_embedding_, std::move(segments)));
  x = g.Add(x, g.Constant(std::move(positions)));
  if (dropout) x = g.Dropout(x, cfg.dropout_rate, *rng);
  Var h = cfg.embed_dim == cfg.hidden_dim ? x : g.Affine(x, input_weight_, input_bias_);
  for (const auto& L : layers_) {
    Var qkv = g.Affine(h, g.ConcatCols({L.wq, L.wk, L.wv}), g.ConcatCols({L.bq, L.bk, L.bv}));
    Var a = g.SegmentAttention(qkv, enc.ranges, cfg.attention_heads);
    if (dropout) a = g.Dropout(a, cfg.dropout_rate, *rng);
    h = g.LayerNorm(g.Add(h, a), L.n1s, L.n1b);
    Var f = g.Affine(g.Gelu(g.Affine(h, L.w1, L.b1)), L.w2, L.b2);
    if (dropout) f = g.Dropout(f, cfg.dropout_rate, *rng);
    h = g.LayerNorm(g.Add(h, f), L.n2s, L.n2b);
  }
  enc.hidden = h;
  return enc;
}

template <typename T>
std::vector<Var> ModelGraph<T>::MatrixProbs(Var hidden, std::span<const RowRange> ranges,
                                            std::span<const JointInput* const> inputs) {
  std::vector<int> context_rows, query_rows;
  std::vector<RowRange> ctx, qry;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const JointInput& in = *inputs[k];
    if (in.M() == 0) throw Error(ErrorKind::kEmptyContext, "edit matrix needs context tokens");
    if (in.N() == 0) throw Error(ErrorKind::kEmptyUtterance, "edit matrix needs query tokens");
    ctx.push_back(RowRange{static_cast<int>(context_rows.size()), in.M()});
    qry.push_back(RowRange{static_cast<int>(query_rows.size()), in.N()});
    for (int p : in.context_positions) context_rows.push_back(ranges[k].offset + p);
    for (int p : in.query_positions) query_rows.push_back(ranges[k].offset + p);
  }
  Graph<T>& g = graph_;
  Var c = g.GatherRows(hidden, std::move(context_rows));
  Var q = g.GatherRows(hidden, std::move(query_rows));
  // Scaled like dot-product attention so the bilinear logits stay O(1).
  // The bilinear form is applied on the query side, which has fewer rows.
  Var a = g.Scale(g.MatMul(q, pair_bilinear_), T(1) / std::sqrt(T(params_.config.hidden_dim)));
  Var cu = g.MatMul(c, pair_context_);
  Var qv = g.MatMul(q, pair_query_);
  std::vector<Var> out;
  for (size_t k = 0; k < inputs.size(); ++k) {
    out.push_back(g.SoftmaxRows(g.PairScores(c, a, cu, qv, pair_bias_, ctx[k], qry[k], 3)));
  }
  return out;
}

template <typename T>
Var ModelGraph<T>::DetectionProbs(Var hidden, RowRange range, const JointInput& input) {
  std::vector<int> rows;
  for (int p : input.context_positions) rows.push_back(range.offset + p);
  for (int p : input.query_positions) rows.push_back(range.offset + p);
  Graph<T>& g = graph_;
  return g.SoftmaxRows(g.Affine(g.GatherRows(hidden, std::move(rows)), detect_weight_, detect_bias_));
}

template <typename T>
Var ModelGraph<T>::Intents(Var hidden, std::span<const RowRange> ranges) {
  std::vector<int> rows;
  for (const auto& r : ranges) rows.push_back(r.offset);
  return graph_.GatherRows(hidden, std::move(rows));
}

template <typename T>
EncoderOutput<T> Encode(const EncoderInput& input, const ModelParameters<T>& params,
                        DropoutMode mode, Rng* rng) {
  Graph<T> g;
  ModelGraph<T> mg(g, params, nullptr);
  EncoderOutput<T> out;
  out.dropout_mode = mode;
  if (mode == DropoutMode::kActive && rng) out.rng_draw_id = rng->draws();
  auto enc = mg.Encode(std::span<const EncoderInput>(&input, 1), mode, rng);
  out.hidden = g.value(enc.hidden);
  out.cls.assign(out.hidden.row(0).data(), out.hidden.row(0).data() + out.hidden.cols());
  return out;
}

template <typename T>
Matrix<T> PredictMatrix(const EncoderOutput<T>& enc, const JointInput& input,
                        const ModelParameters<T>& params) {
  if (enc.hidden.rows() != input.size()) {
    throw Error(ErrorKind::kShape, "encoder output does not match the joint input");
  }
  Graph<T> g;
  ModelGraph<T> mg(g, params, nullptr);
  Var h = g.Constant(enc.hidden);
  const RowRange range{0, input.size()};
  const JointInput* ptr = &input;
  auto probs = mg.MatrixProbs(h, std::span<const RowRange>(&range, 1),
                              std::span<const JointInput* const>(&ptr, 1));
  return g.value(probs[0]);
}

template <typename T>
Matrix<T> PredictDetection(const EncoderOutput<T>& enc, const JointInput& input,
                           const ModelParameters<T>& params) {
  if (enc.hidden.rows() != input.size()) {
    throw Error(ErrorKind::kShape, "encoder output does not match the joint input");
  }
  Graph<T> g;
  ModelGraph<T> mg(g, params, nullptr);
  Var h = g.Constant(enc.hidden);
  return g.value(mg.DetectionProbs(h, RowRange{0, input.size()}, input));
}

template <typename T>
void WriteParams(std::ostream& out, const ModelParameters<T>& params) {
  params.ForEach([&](const std::string& name, const Matrix<T>& m) {
    WriteString(out, name);
    WritePod<std::int64_t>(out, m.rows());
    WritePod<std::int64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(T)));
  });
}

template <typename T>
void ReadParams(std::istream& in, ModelParameters<T>& params) {
  params.ForEach([&](const std::string& name, Matrix<T>& m) {
    const std::string stored = ReadString(in);
    const auto rows = ReadPod<std::int64_t>(in);
    const auto cols = ReadPod<std::int64_t>(in);
    if (stored != name || rows != m.rows() || cols != m.cols()) {
      throw Error(ErrorKind::kVersion, "checkpoint tensor " + stored + " does not match " + name);
    }
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
    if (!in) throw Error(ErrorKind::kVersion, "truncated checkpoint tensor " + name);
  });
}

template <typename T>
void SaveCheckpoint(const std::string& path, const ModelParameters<T>& params,
                    const Vocabulary& vocab) {
  if (vocab.size() != params.config.vocab_size) {
    throw Error(ErrorKind::kVersion, "vocabulary size differs from the model config");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  WritePod<std::uint32_t>(out, kCheckpointVersion);
  WritePod<std::uint32_t>(out, sizeof(T));
  const ModelConfig& c = params.config;
  for (int v : {c.vocab_size, c.embed_dim, c.hidden_dim, c.encoder_layers, c.attention_heads}) {
    WritePod<std::int32_t>(out, v);
  }
  WritePod<double>(out, c.dropout_rate);
  WritePod<std::uint64_t>(out, c.seed);
  WritePod<std::uint64_t>(out, vocab.Fingerprint());
  WritePod<std::uint32_t>(out, static_cast<std::uint32_t>(vocab.size()));
  for (const auto& s : vocab.surfaces()) WriteString(out, s);
  WriteParams(out, params);
  if (!out) throw Error(ErrorKind::kIo, "failed writing checkpoint " + path);
}

template <typename T>
Checkpoint<T> LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::kVersion, path + " is not a checkpoint");
  }
  const auto version = ReadPod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kVersion, "checkpoint format " + std::to_string(version) +
                                         ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto width = ReadPod<std::uint32_t>(in);
  if (width != sizeof(float) && width != sizeof(double)) {
    throw Error(ErrorKind::kVersion, "unsupported scalar width in checkpoint");
  }
  ModelConfig c;
  c.vocab_size = ReadPod<std::int32_t>(in);
  c.embed_dim = ReadPod<std::int32_t>(in);
  c.hidden_dim = ReadPod<std::int32_t>(in);
  c.encoder_layers = ReadPod<std::int32_t>(in);
  c.attention_heads = ReadPod<std::int32_t>(in);
  c.dropout_rate = ReadPod<double>(in);
  c.seed = ReadPod<std::uint64_t>(in);
  c.Validate();
  const auto fingerprint = ReadPod<std::uint64_t>(in);
  const auto count = ReadPod<std::uint32_t>(in);

  Checkpoint<T> ckpt;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string s = ReadString(in);
    if (static_cast<int>(k) < Vocabulary::kNumReserved) {
      if (s != ckpt.vocab.Surface(k)) throw Error(ErrorKind::kVersion, "reserved token mismatch");
    } else {
      ckpt.vocab.Add(s);
    }
  }
  if (ckpt.vocab.size() != c.vocab_size || ckpt.vocab.Fingerprint() != fingerprint) {
    throw Error(ErrorKind::kVersion, "checkpoint vocabulary is inconsistent with its header");
  }
  if (width == sizeof(T)) {
    ckpt.params = ShapedParams<T>(c);
    ReadParams(in, ckpt.params);
  } else if (width == sizeof(float)) {
    auto stored = ShapedParams<float>(c);
    ReadParams(in, stored);
    ckpt.params = stored.template Cast<T>();
  } else {
    auto stored = ShapedParams<double>(c);
    ReadParams(in, stored);
    ckpt.params = stored.template Cast<T>();
  }
  return ckpt;
}

#define REWRITE_LAB_INSTANTIATE(T)                                                           \
  template struct ModelParameters<T>;                                                        \
  template ModelParameters<T> InitParams<T>(const ModelConfig&);                             \
  template class ModelGraph<T>;                                                              \
  template EncoderOutput<T> Encode<T>(const EncoderInput&, const ModelParameters<T>&,        \
                                      DropoutMode, Rng*);                                    \
  template Matrix<T> PredictMatrix<T>(const EncoderOutput<T>&, const JointInput&,            \
                                      const ModelParameters<T>&);                            \
  template Matrix<T> PredictDetection<T>(const EncoderOutput<T>&, const JointInput&,         \
                                         const ModelParameters<T>&);                         \
  template void SaveCheckpoint<T>(const std::string&, const ModelParameters<T>&,             \
                                  const Vocabulary&);                                        \
  template Checkpoint<T> LoadCheckpoint<T>(const std::string&);                              \
  template void WriteParams<T>(std::ostream&, const ModelParameters<T>&);                    \
  template void ReadParams<T>(std::istream&, ModelParameters<T>&);

REWRITE_LAB_INSTANTIATE(float)
REWRITE_LAB_INSTANTIATE(double)

template ModelParameters<double> ModelParameters<float>::Cast<double>() const;
template ModelParameters<float> ModelParameters<double>::Cast<float>() const;

}  // namespace rewrite_lab
