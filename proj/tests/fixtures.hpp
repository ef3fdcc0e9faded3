#pragma once

#include <string>
#include <vector>

#include "rewrite_lab/corpus.hpp"

namespace fixtures {

inline rewrite_lab::DialogueExample MakeExample(const std::vector<std::string>& context,
                                                const std::string& query,
                                                const std::string& rewrite) {
  rewrite_lab::DialogueExample ex;
  for (const auto& turn : context) ex.context_turns.push_back(rewrite_lab::Tokenize(turn));
  ex.query = rewrite_lab::Tokenize(query);
  if (!rewrite.empty()) ex.rewrite = rewrite_lab::Tokenize(rewrite);
  return ex;
}

// Pronoun resolved from the context.
inline rewrite_lab::DialogueExample Coreference() {
  return MakeExample({"你喜欢周杰伦吗", "我喜欢周杰伦"}, "你喜欢他哪首歌", "你喜欢周杰伦哪首歌");
}

// Omitted subject restored from the context.
inline rewrite_lab::DialogueExample Omission() {
  return MakeExample({"上海今天下雨吗", "上海今天下雨"}, "为什么最近总是下雨",
                     "为什么上海最近总是下雨");
}

}  // namespace fixtures
