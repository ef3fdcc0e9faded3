#pragma once

#include <string>
#include <vector>

#include "rewrite_lab/corpus.hpp"

namespace rewrite_lab {

// Aggregation: BLEU is corpus-level, ROUGE is macro-averaged over sentences,
// restoration P/R/F is micro-averaged over the corpus.
struct EvalReport {
  double bleu1 = 0, bleu2 = 0, bleu4 = 0;
  double rouge1 = 0, rouge2 = 0, rougeL = 0;
  double em = 0;
  double p1 = 0, r1 = 0, f1 = 0;
  double p2 = 0, r2 = 0, f2 = 0;
  double p3 = 0, r3 = 0, f3 = 0;
  int size = 0;

  static const char* CsvHeader();
  std::string CsvRow() const;
  std::string Table() const;
  // Every value, in CsvHeader order (without size).
  std::vector<double> Values() const;
};

// Cumulative corpus BLEU up to order n: geometric mean of clipped i-gram
// precisions (i = 1..n) times the brevity penalty exp(1 - ref/cand) when the
// candidates are shorter. An order with no candidate and no reference
// n-grams is skipped (precision 1); an order with reference n-grams but no
// candidate n-grams has precision 0.
double Bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n);

// Mean over sentences of clipped n-gram matches / reference n-gram count.
// References shorter than n are skipped; with nothing left the score is 1.
double RougeN(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n);

// Mean over sentences of the LCS F-measure with beta = 1.2.
double RougeL(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

inline constexpr double kRougeLBeta = 1.2;

double ExactMatch(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

struct Prf {
  double p = 0, r = 0, f = 0;
};

// Restoration scores. A sentence's restored tokens are those whose surface
// occurs in (sentence - query) as a multiset difference; an n-gram is
// restored when it contains at least one restored token. Precision compares
// the candidate's restored n-grams with the reference's (clipped), recall the
// other way round, both micro-averaged. If neither side restores anything the
// result is (1, 1, 1); if only the candidate restores nothing, f = 0.
Prf RestorationPrf(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                   const std::vector<Tokens>& queries, int n);

EvalReport Evaluate(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                    const std::vector<Tokens>& queries);

// Length of the longest common subsequence.
int LcsLength(const Tokens& a, const Tokens& b);

}  // namespace rewrite_lab
