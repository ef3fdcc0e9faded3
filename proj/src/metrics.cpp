#include "rewrite_lab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "rewrite_lab/error.hpp"

namespace rewrite_lab {
namespace {

using NgramCounts = std::unordered_map<std::string, int>;

std::string NgramKey(const Tokens& tokens, size_t start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    key += tokens[start + k];
    key += '\x1f';
  }
  return key;
}

NgramCounts CountNgrams(const Tokens& tokens, int n) {
  NgramCounts counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) ++counts[NgramKey(tokens, i, n)];
  return counts;
}

int ClippedMatches(const NgramCounts& candidate, const NgramCounts& reference) {
  int matches = 0;
  for (const auto& [gram, count] : candidate) {
    auto it = reference.find(gram);
    if (it != reference.end()) matches += std::min(count, it->second);
  }
  return matches;
}

int NgramTotal(const Tokens& tokens, int n) {
  return std::max(0, static_cast<int>(tokens.size()) - n + 1);
}

void CheckSizes(size_t a, size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorKind::kShape, std::string(what) + ": " + std::to_string(a) +
                                       " candidates for " + std::to_string(b) + " references");
  }
}

// Surfaces occurring more often in `sentence` than in `query`.
std::unordered_set<std::string> RestoredSurfaces(const Tokens& sentence, const Tokens& query) {
  std::unordered_map<std::string, int> budget;
  for (const auto& t : query) ++budget[t];
  std::unordered_set<std::string> restored;
  for (const auto& t : sentence) {
    auto it = budget.find(t);
    if (it != budget.end() && it->second > 0) {
      --it->second;
    } else {
      restored.insert(t);
    }
  }
  return restored;
}

NgramCounts RestoredNgrams(const Tokens& sentence, const Tokens& query, int n) {
  const auto restored = RestoredSurfaces(sentence, query);
  NgramCounts counts;
  for (size_t i = 0; i + n <= sentence.size(); ++i) {
    bool hit = false;
    for (int k = 0; k < n && !hit; ++k) hit = restored.count(sentence[i + k]) > 0;
    if (hit) ++counts[NgramKey(sentence, i, n)];
  }
  return counts;
}

int Total(const NgramCounts& counts) {
  int total = 0;
  for (const auto& [gram, count] : counts) total += count;
  return total;
}

}  // namespace

int LcsLength(const Tokens& a, const Tokens& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double Bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n) {
  CheckSizes(candidates.size(), references.size(), "Bleu");
  if (n < 1) throw Error(ErrorKind::kConfig, "BLEU order must be >= 1");
  long cand_len = 0;
  long ref_len = 0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    cand_len += static_cast<long>(candidates[s].size());
    ref_len += static_cast<long>(references[s].size());
  }
  if (cand_len == 0) return ref_len == 0 ? 1.0 : 0.0;

  double log_sum = 0;
  for (int order = 1; order <= n; ++order) {
    long matched = 0;
    long cand_total = 0;
    long ref_total = 0;
    for (size_t s = 0; s < candidates.size(); ++s) {
      matched += ClippedMatches(CountNgrams(candidates[s], order), CountNgrams(references[s], order));
      cand_total += NgramTotal(candidates[s], order);
      ref_total += NgramTotal(references[s], order);
    }
    if (cand_total == 0) {
      if (ref_total == 0) continue;
      return 0.0;
    }
    if (matched == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(cand_total));
  }
  const double brevity =
      cand_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / cand_len) : 1.0;
  return brevity * std::exp(log_sum / n);
}

double RougeN(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int n) {
  CheckSizes(candidates.size(), references.size(), "RougeN");
  if (n < 1) throw Error(ErrorKind::kConfig, "ROUGE order must be >= 1");
  double sum = 0;
  int counted = 0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    const int ref_total = NgramTotal(references[s], n);
    if (ref_total == 0) continue;
    sum += static_cast<double>(
               ClippedMatches(CountNgrams(candidates[s], n), CountNgrams(references[s], n))) /
           ref_total;
    ++counted;
  }
  return counted == 0 ? 1.0 : sum / counted;
}

double RougeL(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  CheckSizes(candidates.size(), references.size(), "RougeL");
  if (candidates.empty()) return 1.0;
  const double beta2 = kRougeLBeta * kRougeLBeta;
  double sum = 0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    const auto& c = candidates[s];
    const auto& r = references[s];
    if (c.empty() || r.empty()) {
      sum += c.empty() && r.empty() ? 1.0 : 0.0;
      continue;
    }
    const int lcs = LcsLength(c, r);
    if (lcs == 0) continue;
    const double p = static_cast<double>(lcs) / c.size();
    const double rec = static_cast<double>(lcs) / r.size();
    sum += (1 + beta2) * p * rec / (rec + beta2 * p);
  }
  return sum / candidates.size();
}

double ExactMatch(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  CheckSizes(candidates.size(), references.size(), "ExactMatch");
  if (candidates.empty()) return 1.0;
  int hits = 0;
  for (size_t s = 0; s < candidates.size(); ++s) hits += candidates[s] == references[s];
  return static_cast<double>(hits) / candidates.size();
}

Prf RestorationPrf(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                   const std::vector<Tokens>& queries, int n) {
  CheckSizes(candidates.size(), references.size(), "RestorationPrf");
  CheckSizes(queries.size(), references.size(), "RestorationPrf");
  if (n < 1) throw Error(ErrorKind::kConfig, "restoration order must be >= 1");
  long matched = 0;
  long cand_total = 0;
  long ref_total = 0;
  for (size_t s = 0; s < candidates.size(); ++s) {
    const auto cand = RestoredNgrams(candidates[s], queries[s], n);
    const auto ref = RestoredNgrams(references[s], queries[s], n);
    matched += ClippedMatches(cand, ref);
    cand_total += Total(cand);
    ref_total += Total(ref);
  }
  Prf out;
  if (cand_total == 0 && ref_total == 0) return Prf{1.0, 1.0, 1.0};
  out.p = cand_total == 0 ? 0.0 : static_cast<double>(matched) / cand_total;
  out.r = ref_total == 0 ? 1.0 : static_cast<double>(matched) / ref_total;
  out.f = out.p + out.r == 0 ? 0.0 : 2 * out.p * out.r / (out.p + out.r);
  return out;
}

EvalReport Evaluate(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                    const std::vector<Tokens>& queries) {
  EvalReport report;
  report.size = static_cast<int>(candidates.size());
  report.bleu1 = Bleu(candidates, references, 1);
  report.bleu2 = Bleu(candidates, references, 2);
  report.bleu4 = Bleu(candidates, references, 4);
  report.rouge1 = RougeN(candidates, references, 1);
  report.rouge2 = RougeN(candidates, references, 2);
  report.rougeL = RougeL(candidates, references);
  report.em = ExactMatch(candidates, references);
  auto set = [&](int n, double& p, double& r, double& f) {
    const Prf prf = RestorationPrf(candidates, references, queries, n);
    p = prf.p;
    r = prf.r;
    f = prf.f;
  };
  set(1, report.p1, report.r1, report.f1);
  set(2, report.p2, report.r2, report.f2);
  set(3, report.p3, report.r3, report.f3);
  return report;
}

const char* EvalReport::CsvHeader() {
  return "bleu1,bleu2,bleu4,rouge1,rouge2,rougeL,em,p1,r1,f1,p2,r2,f2,p3,r3,f3,size";
}

std::vector<double> EvalReport::Values() const {
  return {bleu1, bleu2, bleu4, rouge1, rouge2, rougeL, em, p1, r1, f1, p2, r2, f2, p3, r3, f3};
}

std::string EvalReport::CsvRow() const {
  std::ostringstream out;
  char buf[32];
  for (double v : Values()) {
    std::snprintf(buf, sizeof(buf), "%.6f,", v);
    out << buf;
  }
  out << size;
  return out.str();
}

std::string EvalReport::Table() const {
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "examples %d  (BLEU corpus-level, ROUGE macro-averaged, restoration micro-averaged)\n"
                "  EM      %6.2f\n"
                "  BLEU    B1 %6.2f  B2 %6.2f  B4 %6.2f\n"
                "  ROUGE   R1 %6.2f  R2 %6.2f  RL %6.2f\n"
                "  n=1     P %6.2f  R %6.2f  F %6.2f\n"
                "  n=2     P %6.2f  R %6.2f  F %6.2f\n"
                "  n=3     P %6.2f  R %6.2f  F %6.2f\n",
                size, 100 * em, 100 * bleu1, 100 * bleu2, 100 * bleu4, 100 * rouge1, 100 * rouge2,
                100 * rougeL, 100 * p1, 100 * r1, 100 * f1, 100 * p2, 100 * r2, 100 * f2, 100 * p3,
                100 * r3, 100 * f3);
  return buf;
}

}  // namespace rewrite_lab
