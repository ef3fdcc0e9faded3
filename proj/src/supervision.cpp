#include "rewrite_lab/supervision.hpp"

#include <algorithm>
#include <sstream>

#include "rewrite_lab/error.hpp"

namespace rewrite_lab {
namespace {

std::string Join(const Tokens& tokens, size_t begin, size_t end) {
  std::string out;
  for (size_t k = begin; k < end; ++k) out += tokens[k];
  return out;
}

}  // namespace

std::vector<int> EditMatrix::ClassIds() const {
  std::vector<int> ids(ops.size());
  std::transform(ops.begin(), ops.end(), ids.begin(), [](EditOp op) { return static_cast<int>(op); });
  return ids;
}

std::vector<IndexPair> LcsAlign(const Tokens& a, const Tokens& b) {
  const size_t n = a.size();
  const size_t m = b.size();
  // suffix[i][j] = LCS length of a[i:] and b[j:].
  std::vector<std::vector<int>> suffix(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = n; i-- > 0;) {
    for (size_t j = m; j-- > 0;) {
      suffix[i][j] = a[i] == b[j] ? suffix[i + 1][j + 1] + 1
                                  : std::max(suffix[i + 1][j], suffix[i][j + 1]);
    }
  }
  std::vector<IndexPair> pairs;
  size_t i = 0;
  size_t j = 0;
  while (i < n && j < m) {
    if (a[i] == b[j]) {
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
      ++i;
      ++j;
    } else if (suffix[i][j + 1] >= suffix[i + 1][j]) {
      // Keep a[i] available: skipping b[j] costs nothing.
      ++j;
    } else {
      ++i;
    }
  }
  return pairs;
}

int FindSpan(const Tokens& haystack, const Tokens& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return -1;
  auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end());
  return it == haystack.end() ? -1 : static_cast<int>(it - haystack.begin());
}

EditMatrix DeriveEditMatrix(const DialogueExample& example) {
  if (!example.rewrite) throw Error(ErrorKind::kMissingGold, "example has no rewrite");
  const Tokens context = example.FlatContext();
  const Tokens& query = example.query;
  const Tokens& rewrite = *example.rewrite;
  const int M = static_cast<int>(context.size());
  const int N = static_cast<int>(query.size());
  EditMatrix matrix(M, N);

  auto locate = [&](size_t r_begin, size_t r_end) {
    Tokens segment(rewrite.begin() + r_begin, rewrite.begin() + r_end);
    const int at = FindSpan(context, segment);
    if (at < 0) {
      throw Error(ErrorKind::kUnalignable,
                  "rewrite segment \"" + Join(rewrite, r_begin, r_end) + "\" not found in context");
    }
    return at;
  };

  // Walk the gaps between consecutive aligned pairs, plus the trailing gap.
  auto pairs = LcsAlign(query, rewrite);
  pairs.emplace_back(N, static_cast<int>(rewrite.size()));
  int q_prev = -1;
  int r_prev = -1;
  for (const auto& [q_next, r_next] : pairs) {
    const int q_begin = q_prev + 1;
    const int r_begin = r_prev + 1;
    const int q_len = q_next - q_begin;
    const int r_len = r_next - r_begin;
    if (r_len > 0) {
      const int at = locate(r_begin, r_next);
      if (q_len > 0) {
        for (int j = q_begin; j < q_next; ++j) {
          for (int i = at; i < at + r_len; ++i) matrix.at(i, j) = EditOp::kReplace;
        }
      } else if (q_next < N) {
        for (int i = at; i < at + r_len; ++i) matrix.at(i, q_next) = EditOp::kInsert;
      } else {
        if (N == 0) throw Error(ErrorKind::kUnalignable, "query is empty");
        for (int i = 0; i < M; ++i) {
          if (matrix.at(i, N - 1) == EditOp::kInsert) {
            throw Error(ErrorKind::kUnalignable,
                        "insertions both before and after the last query token");
          }
        }
        for (int i = at; i < at + r_len; ++i) matrix.at(i, N - 1) = EditOp::kInsert;
        matrix.insert_after_last = true;
      }
    } else if (q_len > 0) {
      throw Error(ErrorKind::kUnalignable,
                  "query segment \"" + Join(query, q_begin, q_next) + "\" is deleted by the rewrite");
    }
    q_prev = q_next;
    r_prev = r_next;
  }
  return matrix;
}

KeywordLabels DeriveKeywordLabels(const EditMatrix& matrix) {
  KeywordLabels out;
  out.labels.assign(static_cast<size_t>(matrix.M) + matrix.N, 0);
  for (int i = 0; i < matrix.M; ++i) {
    for (int j = 0; j < matrix.N; ++j) {
      if (matrix.at(i, j) != EditOp::kNone) {
        out.labels[i] = 1;
        out.labels[matrix.M + j] = 1;
      }
    }
  }
  return out;
}

std::string DumpEditMatrix(const EditMatrix& matrix, const Tokens& context, const Tokens& query) {
  static constexpr char kCell[] = {'.', 'R', 'I'};
  std::ostringstream out;
  out << '\t';
  for (int j = 0; j < matrix.N; ++j) out << (j ? " " : "") << query.at(j);
  out << '\n';
  for (int i = 0; i < matrix.M; ++i) {
    out << context.at(i) << '\t';
    for (int j = 0; j < matrix.N; ++j) {
      out << (j ? " " : "") << kCell[static_cast<int>(matrix.at(i, j))];
    }
    out << '\n';
  }
  if (matrix.insert_after_last) out << "insert-after-last\n";
  return out.str();
}

}  // namespace rewrite_lab
