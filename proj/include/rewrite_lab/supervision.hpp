#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rewrite_lab/corpus.hpp"

namespace rewrite_lab {

enum class EditOp : std::uint8_t { kNone = 0, kReplace = 1, kInsert = 2 };
inline constexpr int kNumEditOps = 3;

// M x N grid over (context token, query token) pairs.
//   (i, j) = Replace: context token i is part of the span substituting query token j.
//   (i, j) = Insert:  context token i is part of the span inserted before query token j.
// Insertions after the last query token are stored as Insert cells on column
// N-1 with insert_after_last set.
struct EditMatrix {
  int M = 0;
  int N = 0;
  std::vector<EditOp> ops;
  bool insert_after_last = false;

  EditMatrix() = default;
  EditMatrix(int m, int n) : M(m), N(n), ops(static_cast<size_t>(m) * n, EditOp::kNone) {}

  EditOp at(int i, int j) const { return ops[static_cast<size_t>(i) * N + j]; }
  EditOp& at(int i, int j) { return ops[static_cast<size_t>(i) * N + j]; }

  // Class ids in row-major cell order, the Y_mat of the matrix loss.
  std::vector<int> ClassIds() const;

  bool operator==(const EditMatrix&) const = default;
};

// Binary keyword labels over context tokens followed by query tokens.
struct KeywordLabels {
  std::vector<int> labels;

  bool operator==(const KeywordLabels&) const = default;
};

using IndexPair = std::pair<int, int>;

// Longest common subsequence of `a` and `b` as matched index pairs. Among
// maximal alignments the one using the earliest indices of `a` is returned.
std::vector<IndexPair> LcsAlign(const Tokens& a, const Tokens& b);

// First occurrence of `needle` as a contiguous run of `haystack`, or -1.
int FindSpan(const Tokens& haystack, const Tokens& needle);

// Derives the gold edit matrix from (context, query, rewrite). Throws
// Unalignable if a rewrite segment does not occur contiguously in the
// context, if the rewrite deletes query tokens, or if an insertion before and
// after the last query token would collide.
EditMatrix DeriveEditMatrix(const DialogueExample& example);

KeywordLabels DeriveKeywordLabels(const EditMatrix& matrix);

// Rows are context tokens, columns are query tokens, cells are ".", "R", "I".
std::string DumpEditMatrix(const EditMatrix& matrix, const Tokens& context, const Tokens& query);

}  // namespace rewrite_lab
