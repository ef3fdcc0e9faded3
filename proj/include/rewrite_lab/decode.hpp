#pragma once

#include <optional>
#include <vector>

#include "rewrite_lab/corpus.hpp"
#include "rewrite_lab/supervision.hpp"

namespace rewrite_lab {

// Half-open range of context indices.
struct Span {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

struct ColumnEdit {
  std::optional<Span> replace;
  std::optional<Span> insert_before;

  bool operator==(const ColumnEdit&) const = default;
};

struct EditPlan {
  std::vector<ColumnEdit> columns;
  // Insertion after the final query token.
  std::optional<Span> insert_after;

  bool empty() const;
  bool operator==(const EditPlan&) const = default;
};

// Per column, the longest contiguous Replace run (leftmost on ties) becomes
// the replacement span and likewise for Insert; stray cells are ignored.
EditPlan ExtractPlan(const EditMatrix& matrix);

// Left to right over query positions: the insertion span, then either the
// replacement span or the query token. Adjacent columns carrying the same
// replacement span are one multi-token substitution and emit it once.
Tokens ApplyPlan(const Tokens& query, const Tokens& context, const EditPlan& plan);

// Throws CorruptMatrix if the matrix does not match (|context|, |query|).
Tokens ApplyEditMatrix(const Tokens& query, const Tokens& context, const EditMatrix& matrix);

}  // namespace rewrite_lab
