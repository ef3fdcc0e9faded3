#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rewrite_lab/decode.hpp"
#include "rewrite_lab/error.hpp"
#include "rewrite_lab/supervision.hpp"

using namespace rewrite_lab;

namespace {

Tokens RandomTokens(std::mt19937& gen, int max_len, int alphabet) {
  Tokens out(gen() % (max_len + 1));
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + gen() % alphabet));
  return out;
}

int CountOps(const EditMatrix& m, EditOp op) {
  return static_cast<int>(std::count(m.ops.begin(), m.ops.end(), op));
}

}  // namespace

TEST_CASE("lcs align small cases") {
  CHECK(LcsAlign({"x", "y"}, {"x", "y"}) == std::vector<IndexPair>{{0, 0}, {1, 1}});
  CHECK(LcsAlign({"x", "y"}, {"p", "q"}).empty());
  CHECK(LcsAlign({}, {"p"}).empty());

  const Tokens q = Tokenize("你喜欢他哪首歌");
  const Tokens r = Tokenize("你喜欢周杰伦哪首歌");
  const auto pairs = LcsAlign(q, r);
  CHECK(static_cast<int>(pairs.size()) == oracle::BruteLcs(q, r));
  CHECK(pairs == std::vector<IndexPair>{{0, 0}, {1, 1}, {2, 2}, {4, 6}, {5, 7}, {6, 8}});

  // Leftmost in a: the single "a" of b pairs with a[0].
  CHECK(LcsAlign({"a", "a"}, {"a"}) == std::vector<IndexPair>{{0, 0}});
}

TEST_CASE("lcs align matches brute force on random pairs") {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 500; ++trial) {
    const Tokens a = RandomTokens(gen, 10, 3);
    const Tokens b = RandomTokens(gen, 10, 3);
    const auto pairs = LcsAlign(a, b);
    REQUIRE(static_cast<int>(pairs.size()) == oracle::BruteLcs(a, b));
    for (size_t k = 0; k < pairs.size(); ++k) {
      CHECK(a[pairs[k].first] == b[pairs[k].second]);
      if (k > 0) {
        CHECK(pairs[k].first > pairs[k - 1].first);
        CHECK(pairs[k].second > pairs[k - 1].second);
      }
    }
  }
}

TEST_CASE("coreference example matrix") {
  const DialogueExample ex = fixtures::Coreference();
  const EditMatrix m = DeriveEditMatrix(ex);
  REQUIRE(m.M == 13);
  REQUIRE(m.N == 7);
  CHECK_FALSE(m.insert_after_last);
  // 周杰伦 first appears at context rows 3..5; 他 is query column 3.
  for (int i = 0; i < m.M; ++i) {
    for (int j = 0; j < m.N; ++j) {
      const bool hit = i >= 3 && i <= 5 && j == 3;
      CHECK(m.at(i, j) == (hit ? EditOp::kReplace : EditOp::kNone));
    }
  }
  const KeywordLabels y = DeriveKeywordLabels(m);
  std::vector<int> expected(20, 0);
  expected[3] = expected[4] = expected[5] = 1;
  expected[13 + 3] = 1;
  CHECK(y.labels == expected);
}

TEST_CASE("omission example matrix") {
  const DialogueExample ex = fixtures::Omission();
  const EditMatrix m = DeriveEditMatrix(ex);
  REQUIRE(m.M == 13);
  REQUIRE(m.N == 9);
  CHECK(CountOps(m, EditOp::kInsert) == 2);
  CHECK(CountOps(m, EditOp::kReplace) == 0);
  CHECK(m.at(0, 3) == EditOp::kInsert);
  CHECK(m.at(1, 3) == EditOp::kInsert);
  CHECK(ApplyEditMatrix(ex.query, ex.FlatContext(), m) == *ex.rewrite);
}

TEST_CASE("keyword labels for an omission plus a coreference") {
  const DialogueExample ex =
      fixtures::MakeExample({"你觉得哪个演员最帅", "周杰伦"}, "不是他吗", "演员不是周杰伦吗");
  const EditMatrix m = DeriveEditMatrix(ex);
  const Tokens context = ex.FlatContext();
  const auto y = DeriveKeywordLabels(m).labels;
  for (int i = 0; i < m.M; ++i) {
    const bool key = context[i] == "演" || context[i] == "员" || context[i] == "周" ||
                     context[i] == "杰" || context[i] == "伦";
    CHECK(y[i] == key);
  }
  CHECK(std::vector<int>(y.begin() + m.M, y.end()) == std::vector<int>{1, 0, 1, 0});
  CHECK(ApplyEditMatrix(ex.query, context, m) == *ex.rewrite);
}

TEST_CASE("identity rewrite gives an all-None matrix") {
  const DialogueExample ex = fixtures::MakeExample({"今天好热"}, "去游泳吧", "去游泳吧");
  const EditMatrix m = DeriveEditMatrix(ex);
  CHECK(CountOps(m, EditOp::kNone) == m.M * m.N);
  const auto y = DeriveKeywordLabels(m).labels;
  CHECK(y.size() == static_cast<size_t>(m.M + m.N));
  CHECK(std::count(y.begin(), y.end(), 1) == 0);
}

TEST_CASE("insertion after the last query token") {
  const DialogueExample ex = fixtures::MakeExample({"我在看周杰伦的电影"}, "你也喜欢", "你也喜欢周杰伦");
  const EditMatrix m = DeriveEditMatrix(ex);
  CHECK(m.insert_after_last);
  CHECK(m.at(3, m.N - 1) == EditOp::kInsert);
  CHECK(ApplyEditMatrix(ex.query, ex.FlatContext(), m) == *ex.rewrite);
  CHECK(DumpEditMatrix(m, ex.FlatContext(), ex.query).find("insert-after-last") != std::string::npos);
}

TEST_CASE("unalignable rewrites") {
  auto kind = [](const DialogueExample& ex) {
    try {
      DeriveEditMatrix(ex);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  CHECK(kind(fixtures::MakeExample({"今天下雨"}, "他来吗", "小明来吗")) == ErrorKind::kUnalignable);
  CHECK(kind(fixtures::MakeExample({"今天下雨"}, "他来吗", "来吗")) == ErrorKind::kUnalignable);
  // An insertion before and after the final token cannot share column N-1.
  CHECK(kind(fixtures::MakeExample({"上海今天"}, "下雨", "下上海雨今天")) == ErrorKind::kUnalignable);
  CHECK(kind(fixtures::MakeExample({"x"}, "y", "")) == ErrorKind::kMissingGold);
}

TEST_CASE("derived matrices round trip through decode") {
  auto examples = GenerateSynthetic(300, 21);
  examples.push_back(fixtures::Coreference());
  examples.push_back(fixtures::Omission());
  for (const auto& ex : examples) {
    const EditMatrix m = DeriveEditMatrix(ex);
    REQUIRE(ApplyEditMatrix(ex.query, ex.FlatContext(), m) == *ex.rewrite);
    // Per column, Replace rows and Insert rows are each one contiguous run.
    for (int j = 0; j < m.N; ++j) {
      for (EditOp op : {EditOp::kReplace, EditOp::kInsert}) {
        int runs = 0;
        for (int i = 0; i < m.M; ++i) {
          if (m.at(i, j) == op && (i == 0 || m.at(i - 1, j) != op)) ++runs;
        }
        CHECK(runs <= 1);
      }
    }
    const auto y = DeriveKeywordLabels(m);
    CHECK(y == DeriveKeywordLabels(m));
    CHECK(y.labels.size() == static_cast<size_t>(m.M + m.N));
  }
}

TEST_CASE("matrix dump layout") {
  const DialogueExample ex = fixtures::MakeExample({"周杰伦"}, "他好", "周杰伦好");
  const std::string dump = DumpEditMatrix(DeriveEditMatrix(ex), ex.FlatContext(), ex.query);
  CHECK(dump == "\t他 好\n周\tR .\n杰\tR .\n伦\tR .\n");
}
