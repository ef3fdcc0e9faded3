#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rewrite_lab {

using Tokens = std::vector<std::string>;

struct Token {
  std::string surface;
  int id = 0;
};

// One training/eval unit. `line` is the 1-based source line, 0 if synthetic.
struct DialogueExample {
  std::vector<Tokens> context_turns;
  Tokens query;
  std::optional<Tokens> rewrite;
  int line = 0;

  // Context turns concatenated without delimiters; indices into this are the
  // row coordinates of an edit matrix.
  Tokens FlatContext() const;

  bool operator==(const DialogueExample& other) const {
    return context_turns == other.context_turns && query == other.query &&
           rewrite == other.rewrite;
  }
};

// Segment ids carried alongside token ids into the encoder.
enum Segment : int { kSegmentSpecial = 0, kSegmentContext = 1, kSegmentQuery = 2 };
inline constexpr int kNumSegments = 3;

// Token ids plus segment ids, the unit the encoder consumes.
struct EncoderInput {
  std::vector<int> ids;
  std::vector<int> segments;

  int size() const { return static_cast<int>(ids.size()); }
};

// [CLS] turn_1 [SEP] turn_2 ... [SEP] query. Special tokens are in neither mask.
struct JointInput {
  std::vector<Token> tokens;
  std::vector<bool> context_mask;
  std::vector<bool> query_mask;
  std::vector<int> context_positions;
  std::vector<int> query_positions;
  int cls_index = 0;

  int M() const { return static_cast<int>(context_positions.size()); }
  int N() const { return static_cast<int>(query_positions.size()); }
  int size() const { return static_cast<int>(tokens.size()); }

  EncoderInput ToEncoderInput() const;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary();

  static Vocabulary Build(const std::vector<DialogueExample>& examples);
  // One token per line; line k (0-based) gets id k + kNumReserved.
  static Vocabulary Load(const std::string& path);
  void Save(const std::string& path) const;

  // Returns the existing id when already present.
  int Add(const std::string& surface);
  // Out-of-vocabulary surfaces map to kUnk.
  int Id(const std::string& surface) const;
  const std::string& Surface(int id) const { return surfaces_.at(id); }
  int size() const { return static_cast<int>(surfaces_.size()); }
  const std::vector<std::string>& surfaces() const { return surfaces_; }

  // FNV-1a over all surfaces, used to bind checkpoints to a vocabulary.
  std::uint64_t Fingerprint() const;

  bool operator==(const Vocabulary& other) const {
    return surfaces_ == other.surfaces_;
  }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, int> ids_;
};

// CJK characters (and any other non-ASCII or ASCII punctuation code point)
// become single tokens; maximal runs of ASCII alphanumerics become one token;
// whitespace is dropped. Throws EmptyUtterance when nothing remains.
Tokens Tokenize(std::string_view text);

// Inverse of Tokenize for its own outputs: a single space is placed only
// between two adjacent ASCII-alphanumeric tokens.
std::string Detokenize(const Tokens& tokens);

JointInput BuildJointInput(const DialogueExample& example, const Vocabulary& vocab);

// [CLS] + tokens, all tokens in the query segment.
EncoderInput BuildSequenceInput(const Tokens& tokens, const Vocabulary& vocab);

struct Corpus {
  std::vector<DialogueExample> examples;
  // True when no line carries a "rewrite".
  bool inference_only = false;
};

Corpus LoadJsonl(const std::string& path);
void SaveJsonl(const std::string& path, const std::vector<DialogueExample>& examples);

// Parses a single JSONL object; `line` is used for error reporting.
DialogueExample ParseExampleJson(const std::string& text, int line);
std::string ExampleToJson(const DialogueExample& example);

// Templated coreference/omission dialogues; deterministic in `seed`.
std::vector<DialogueExample> GenerateSynthetic(int n, std::uint64_t seed);

}  // namespace rewrite_lab
