#include "rewrite_lab/corpus.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rewrite_lab/error.hpp"
#include "rewrite_lab/rng.hpp"

namespace rewrite_lab {
namespace {

using json = nlohmann::json;

bool IsAsciiAlnum(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool IsAsciiSpace(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Length in bytes of the UTF-8 sequence starting at text[i]; malformed
// sequences are consumed one byte at a time.
size_t CodePointLength(std::string_view text, size_t i) {
  const auto lead = static_cast<unsigned char>(text[i]);
  size_t len = 1;
  if (lead >= 0xF0 && lead < 0xF8) {
    len = 4;
  } else if (lead >= 0xE0) {
    len = 3;
  } else if (lead >= 0xC0) {
    len = 2;
  }
  if (lead >= 0xF8 || i + len > text.size()) return 1;
  for (size_t k = 1; k < len; ++k) {
    if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) return 1;
  }
  return len;
}

// U+3000 ideographic space is the one non-ASCII separator seen in Chinese text.
bool IsIdeographicSpace(std::string_view cp) { return cp == "\xE3\x80\x80"; }

bool IsAsciiWord(const std::string& token) {
  return !token.empty() && IsAsciiAlnum(static_cast<unsigned char>(token.front()));
}

Tokens TokenizeField(const json& value, const char* field, int line) {
  if (!value.is_string()) {
    throw LineError(ErrorKind::kSchema, line, std::string("\"") + field + "\" must be a string");
  }
  try {
    return Tokenize(value.get<std::string>());
  } catch (const Error&) {
    throw LineError(ErrorKind::kEmptyUtterance, line,
                    std::string("\"") + field + "\" is empty");
  }
}

}  // namespace

Tokens DialogueExample::FlatContext() const {
  Tokens flat;
  for (const auto& turn : context_turns) flat.insert(flat.end(), turn.begin(), turn.end());
  return flat;
}

EncoderInput JointInput::ToEncoderInput() const {
  EncoderInput input;
  input.ids.reserve(tokens.size());
  input.segments.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    input.ids.push_back(tokens[i].id);
    input.segments.push_back(context_mask[i]  ? kSegmentContext
                             : query_mask[i] ? kSegmentQuery
                                             : kSegmentSpecial);
  }
  return input;
}

Vocabulary::Vocabulary() {
  for (const char* special : {"[PAD]", "[CLS]", "[SEP]", "[UNK]"}) Add(special);
}

Vocabulary Vocabulary::Build(const std::vector<DialogueExample>& examples) {
  Vocabulary vocab;
  for (const auto& ex : examples) {
    for (const auto& turn : ex.context_turns) {
      for (const auto& t : turn) vocab.Add(t);
    }
    for (const auto& t : ex.query) vocab.Add(t);
    if (ex.rewrite) {
      for (const auto& t : *ex.rewrite) vocab.Add(t);
    }
  }
  return vocab;
}

Vocabulary Vocabulary::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open vocabulary " + path);
  Vocabulary vocab;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw LineError(ErrorKind::kParse, line_no, "empty vocabulary entry");
    if (vocab.Id(line) != kUnk || line == "[UNK]") {
      throw LineError(ErrorKind::kParse, line_no, "duplicate vocabulary entry " + line);
    }
    vocab.Add(line);
  }
  return vocab;
}

void Vocabulary::Save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write vocabulary " + path);
  for (int i = kNumReserved; i < size(); ++i) out << surfaces_[i] << '\n';
}

int Vocabulary::Add(const std::string& surface) {
  auto it = ids_.find(surface);
  if (it != ids_.end()) return it->second;
  const int id = size();
  surfaces_.push_back(surface);
  ids_.emplace(surface, id);
  return id;
}

int Vocabulary::Id(const std::string& surface) const {
  auto it = ids_.find(surface);
  return it == ids_.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::Fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& s : surfaces_) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tokens Tokenize(std::string_view text) {
  Tokens tokens;
  size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (IsAsciiSpace(c)) {
      ++i;
    } else if (IsAsciiAlnum(c)) {
      size_t j = i;
      while (j < text.size() && IsAsciiAlnum(static_cast<unsigned char>(text[j]))) ++j;
      tokens.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      const size_t len = CodePointLength(text, i);
      const auto cp = text.substr(i, len);
      if (!IsIdeographicSpace(cp)) tokens.emplace_back(cp);
      i += len;
    }
  }
  if (tokens.empty()) throw Error(ErrorKind::kEmptyUtterance, "utterance is empty after trimming");
  return tokens;
}

std::string Detokenize(const Tokens& tokens) {
  std::string text;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && IsAsciiWord(tokens[i - 1]) && IsAsciiWord(tokens[i])) text += ' ';
    text += tokens[i];
  }
  return text;
}

JointInput BuildJointInput(const DialogueExample& example, const Vocabulary& vocab) {
  if (example.query.empty()) throw Error(ErrorKind::kEmptyUtterance, "query is empty");
  JointInput input;
  auto push = [&](const std::string& surface, int id, bool context, bool query) {
    const int pos = input.size();
    input.tokens.push_back(Token{surface, id});
    input.context_mask.push_back(context);
    input.query_mask.push_back(query);
    if (context) input.context_positions.push_back(pos);
    if (query) input.query_positions.push_back(pos);
  };
  push("[CLS]", Vocabulary::kCls, false, false);
  for (size_t t = 0; t < example.context_turns.size(); ++t) {
    if (t > 0) push("[SEP]", Vocabulary::kSep, false, false);
    for (const auto& s : example.context_turns[t]) push(s, vocab.Id(s), true, false);
  }
  push("[SEP]", Vocabulary::kSep, false, false);
  for (const auto& s : example.query) push(s, vocab.Id(s), false, true);
  return input;
}

EncoderInput BuildSequenceInput(const Tokens& tokens, const Vocabulary& vocab) {
  EncoderInput input;
  input.ids.push_back(Vocabulary::kCls);
  input.segments.push_back(kSegmentSpecial);
  for (const auto& s : tokens) {
    input.ids.push_back(vocab.Id(s));
    input.segments.push_back(kSegmentQuery);
  }
  return input;
}

DialogueExample ParseExampleJson(const std::string& text, int line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw LineError(ErrorKind::kParse, line, e.what());
  }
  if (!obj.is_object()) throw LineError(ErrorKind::kParse, line, "expected a JSON object");
  if (!obj.contains("query")) throw LineError(ErrorKind::kSchema, line, "missing \"query\"");

  DialogueExample ex;
  ex.line = line;
  if (obj.contains("context")) {
    const auto& ctx = obj["context"];
    if (!ctx.is_array()) throw LineError(ErrorKind::kSchema, line, "\"context\" must be an array");
    for (const auto& turn : ctx) ex.context_turns.push_back(TokenizeField(turn, "context", line));
  }
  ex.query = TokenizeField(obj["query"], "query", line);
  if (obj.contains("rewrite") && !obj["rewrite"].is_null()) {
    ex.rewrite = TokenizeField(obj["rewrite"], "rewrite", line);
  }
  return ex;
}

std::string ExampleToJson(const DialogueExample& example) {
  json obj;
  obj["context"] = json::array();
  for (const auto& turn : example.context_turns) obj["context"].push_back(Detokenize(turn));
  obj["query"] = Detokenize(example.query);
  if (example.rewrite) obj["rewrite"] = Detokenize(*example.rewrite);
  return obj.dump();
}

Corpus LoadJsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open corpus " + path);
  Corpus corpus;
  std::string text;
  int line = 0;
  bool any_rewrite = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.examples.push_back(ParseExampleJson(text, line));
    any_rewrite = any_rewrite || corpus.examples.back().rewrite.has_value();
  }
  corpus.inference_only = !any_rewrite;
  return corpus;
}

void SaveJsonl(const std::string& path, const std::vector<DialogueExample>& examples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write corpus " + path);
  for (const auto& ex : examples) out << ExampleToJson(ex) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic corpus.
//
// Each template is a context, a query and a rewrite over placeholders. {E} is
// the entity, {PRO} its pronoun, {D} a distractor entity of the same kind.
// Query templates share no characters with the entity pools, which keeps the
// query/rewrite alignment unambiguous.

namespace {

struct Entity {
  const char* text;
  const char* pronoun;
};

const std::vector<Entity> kPeople = {
    {"周杰伦", "他"}, {"林俊杰", "他"}, {"王菲", "她"},   {"刘德华", "他"},
    {"陈奕迅", "他"}, {"孙燕姿", "她"}, {"蔡依林", "她"}, {"李荣浩", "他"},
    {"邓紫棋", "她"}, {"张学友", "他"},
};
const std::vector<Entity> kCities = {
    {"上海", "那里"}, {"北京", "那里"}, {"广州", "那里"}, {"深圳", "那里"},
    {"杭州", "那里"}, {"成都", "那里"}, {"重庆", "那里"}, {"南京", "那里"},
    {"西安", "那里"}, {"武汉", "那里"},
};
const std::vector<Entity> kFoods = {
    {"火锅", "它"}, {"饺子", "它"}, {"寿司", "它"}, {"披萨", "它"},
    {"烤鸭", "它"}, {"拉面", "它"}, {"汉堡", "它"},
};
const std::vector<Entity> kProducts = {
    {"iPhone", "它"}, {"iPad", "它"},      {"MacBook", "它"},   {"Kindle", "它"},
    {"Switch", "它"}, {"Galaxy S24", "它"}, {"Pixel 8", "它"},
};

struct Template {
  const std::vector<Entity>* pool;
  std::vector<const char*> context;
  const char* query;
  const char* rewrite;
  int weight;
};

const std::vector<Template>& Templates() {
  static const std::vector<Template> templates = {
      // Coreference: a pronoun in the query stands for a context entity.
      {&kPeople, {"你喜欢{E}吗", "我喜欢{E}"}, "你喜欢{PRO}哪首歌", "你喜欢{E}哪首歌", 3},
      {&kPeople, {"{E}最近发新歌了吗", "{E}上周发了新歌"}, "{PRO}的新歌好听吗",
       "{E}的新歌好听吗", 2},
      {&kPeople, {"{D}和{E}谁唱得好", "{E}唱得好"}, "{PRO}有什么代表作", "{E}有什么代表作", 1},
      {&kCities, {"我想去{E}旅游", "{E}很好玩"}, "那里有什么好吃的", "{E}有什么好吃的", 2},
      {&kFoods, {"你吃过{E}吗", "吃过{E}"}, "它好吃吗", "{E}好吃吗", 2},
      {&kProducts, {"我买了{E}", "{E}贵吗"}, "它的电池怎么样", "{E}的电池怎么样", 2},
      // Omission: a context entity is missing from the query.
      {&kCities, {"{E}今天下雨吗", "{E}今天下雨"}, "为什么最近总是下雨",
       "为什么{E}最近总是下雨", 3},
      {&kPeople, {"你听过{E}的歌吗", "听过"}, "最喜欢哪一首", "最喜欢{E}的哪一首", 2},
      {&kCities, {"明天去{E}出差", "对 明天去"}, "天气怎么样", "{E}天气怎么样", 2},
      // Already self-contained: the rewrite equals the query.
      {&kPeople, {"你喜欢{D}吗", "我喜欢{D}"}, "你喜欢{E}吗", "你喜欢{E}吗", 1},
  };
  return templates;
}

const std::vector<const char*> kOpeners = {"你好", "在吗", "我们聊聊天吧"};

std::string Fill(std::string pattern, const Entity& entity, const Entity& distractor) {
  auto replace_all = [&](const std::string& key, const std::string& value) {
    for (size_t pos = pattern.find(key); pos != std::string::npos;
         pos = pattern.find(key, pos + value.size())) {
      pattern.replace(pos, key.size(), value);
    }
  };
  replace_all("{E}", entity.text);
  replace_all("{PRO}", entity.pronoun);
  replace_all("{D}", distractor.text);
  return pattern;
}

}  // namespace

std::vector<DialogueExample> GenerateSynthetic(int n, std::uint64_t seed) {
  const auto& templates = Templates();
  int total_weight = 0;
  for (const auto& t : templates) total_weight += t.weight;

  Rng rng(seed);
  std::vector<DialogueExample> examples;
  examples.reserve(n);
  for (int k = 0; k < n; ++k) {
    auto pick = static_cast<int>(rng.Below(total_weight));
    size_t ti = 0;
    while (pick >= templates[ti].weight) pick -= templates[ti++].weight;
    const Template& tpl = templates[ti];
    const auto& pool = *tpl.pool;
    const auto ei = rng.Below(pool.size());
    auto di = rng.Below(pool.size() - 1);
    if (di >= ei) ++di;

    DialogueExample ex;
    if (rng.Uniform() < 0.3) ex.context_turns.push_back(Tokenize(kOpeners[rng.Below(kOpeners.size())]));
    for (const char* turn : tpl.context) {
      ex.context_turns.push_back(Tokenize(Fill(turn, pool[ei], pool[di])));
    }
    ex.query = Tokenize(Fill(tpl.query, pool[ei], pool[di]));
    ex.rewrite = Tokenize(Fill(tpl.rewrite, pool[ei], pool[di]));
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace rewrite_lab
