#include "rewrite_lab/decode.hpp"

#include <string>

#include "rewrite_lab/error.hpp"

namespace rewrite_lab {
namespace {

std::optional<Span> LongestRun(const EditMatrix& matrix, int column, EditOp op) {
  std::optional<Span> best;
  int i = 0;
  while (i < matrix.M) {
    if (matrix.at(i, column) != op) {
      ++i;
      continue;
    }
    int end = i;
    while (end < matrix.M && matrix.at(end, column) == op) ++end;
    if (!best || end - i > best->size()) best = Span{i, end};
    i = end;
  }
  return best;
}

void Emit(Tokens& out, const Tokens& context, const Span& span) {
  if (span.begin < 0 || span.end > static_cast<int>(context.size()) || span.begin >= span.end) {
    throw Error(ErrorKind::kCorruptMatrix, "span [" + std::to_string(span.begin) + ", " +
                                               std::to_string(span.end) + ") outside context of " +
                                               std::to_string(context.size()));
  }
  out.insert(out.end(), context.begin() + span.begin, context.begin() + span.end);
}

}  // namespace

bool EditPlan::empty() const {
  if (insert_after) return false;
  for (const auto& c : columns) {
    if (c.replace || c.insert_before) return false;
  }
  return true;
}

EditPlan ExtractPlan(const EditMatrix& matrix) {
  EditPlan plan;
  plan.columns.resize(matrix.N);
  for (int j = 0; j < matrix.N; ++j) {
    plan.columns[j].replace = LongestRun(matrix, j, EditOp::kReplace);
    plan.columns[j].insert_before = LongestRun(matrix, j, EditOp::kInsert);
  }
  if (matrix.insert_after_last && matrix.N > 0) {
    plan.insert_after = plan.columns.back().insert_before;
    plan.columns.back().insert_before.reset();
  }
  return plan;
}

Tokens ApplyPlan(const Tokens& query, const Tokens& context, const EditPlan& plan) {
  if (plan.columns.size() != query.size()) {
    throw Error(ErrorKind::kCorruptMatrix, "plan has " + std::to_string(plan.columns.size()) +
                                               " columns for a query of " +
                                               std::to_string(query.size()));
  }
  Tokens out;
  for (size_t j = 0; j < query.size(); ++j) {
    const auto& col = plan.columns[j];
    if (col.insert_before) Emit(out, context, *col.insert_before);
    if (col.replace) {
      const bool continues = j > 0 && plan.columns[j - 1].replace == col.replace;
      if (!continues) Emit(out, context, *col.replace);
    } else {
      out.push_back(query[j]);
    }
  }
  if (plan.insert_after) Emit(out, context, *plan.insert_after);
  return out;
}

Tokens ApplyEditMatrix(const Tokens& query, const Tokens& context, const EditMatrix& matrix) {
  if (matrix.M != static_cast<int>(context.size()) || matrix.N != static_cast<int>(query.size()) ||
      matrix.ops.size() != static_cast<size_t>(matrix.M) * matrix.N) {
    throw Error(ErrorKind::kCorruptMatrix,
                "matrix " + std::to_string(matrix.M) + "x" + std::to_string(matrix.N) +
                    " does not match context " + std::to_string(context.size()) + " x query " +
                    std::to_string(query.size()));
  }
  return ApplyPlan(query, context, ExtractPlan(matrix));
}

}  // namespace rewrite_lab
