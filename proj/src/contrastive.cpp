#include "rewrite_lab/contrastive.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "rewrite_lab/error.hpp"

namespace rewrite_lab {

const char* NegativeStrategyName(NegativeStrategy strategy) {
  switch (strategy) {
    case NegativeStrategy::kRandomDeletion: return "rd";
    case NegativeStrategy::kOrigin: return "origin";
    case NegativeStrategy::kSpanErase: return "se";
  }
  return "rd";
}

NegativeStrategy ParseNegativeStrategy(const std::string& name) {
  if (name == "rd") return NegativeStrategy::kRandomDeletion;
  if (name == "origin") return NegativeStrategy::kOrigin;
  if (name == "se") return NegativeStrategy::kSpanErase;
  throw Error(ErrorKind::kConfig, "unknown negative strategy \"" + name + "\" (rd|origin|se)");
}

Tokens MakePositiveInput(const DialogueExample& example) {
  if (!example.rewrite) throw Error(ErrorKind::kMissingGold, "example has no gold rewrite");
  Tokens out{"[CLS]"};
  out.insert(out.end(), example.rewrite->begin(), example.rewrite->end());
  return out;
}

int DeletionCount(int n) {
  if (n < 2) return 0;
  return std::max(1, (2 * n + 5) / 10);
}

Tokens RandomDeletion(const Tokens& query, Rng& rng) {
  const int n = static_cast<int>(query.size());
  if (n < 2) {
    std::clog << "warning: query of length " << n << " cannot be corrupted by deletion\n";
    return query;
  }
  const int k = DeletionCount(n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.Below(n - i));
    std::swap(order[i], order[j]);
  }
  std::vector<bool> drop(n, false);
  for (int i = 0; i < k; ++i) drop[order[i]] = true;
  Tokens out;
  for (int i = 0; i < n; ++i) {
    if (!drop[i]) out.push_back(query[i]);
  }
  return out;
}

Tokens SpanErase(const DialogueExample& example) {
  const Tokens context = example.FlatContext();
  const Tokens& query = example.query;
  const size_t n = query.size();
  const size_t m = context.size();
  // run[i][j]: length of the common run ending at query[i-1], context[j-1].
  std::vector<std::vector<int>> run(n + 1, std::vector<int>(m + 1, 0));
  int best_len = 0;
  int best_start = 0;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      if (query[i - 1] != context[j - 1]) continue;
      run[i][j] = run[i - 1][j - 1] + 1;
      const int start = static_cast<int>(i) - run[i][j];
      if (run[i][j] > best_len || (run[i][j] == best_len && start < best_start)) {
        best_len = run[i][j];
        best_start = start;
      }
    }
  }
  if (best_len == 0) return query;
  Tokens out(query.begin(), query.begin() + best_start);
  out.insert(out.end(), query.begin() + best_start + best_len, query.end());
  if (out.empty()) out.push_back("[UNK]");
  return out;
}

Tokens HardNegative(const DialogueExample& example, NegativeStrategy strategy, Rng& rng) {
  switch (strategy) {
    case NegativeStrategy::kRandomDeletion: return RandomDeletion(example.query, rng);
    case NegativeStrategy::kOrigin: return example.query;
    case NegativeStrategy::kSpanErase: return SpanErase(example);
  }
  return example.query;
}

ContrastiveInputs MakeContrastiveInputs(std::span<const DialogueExample* const> examples,
                                        const Vocabulary& vocab, NegativeStrategy strategy,
                                        std::span<Rng> rngs) {
  if (rngs.size() < examples.size()) {
    throw Error(ErrorKind::kShape, "one rng stream per example is required");
  }
  ContrastiveInputs out;
  for (size_t k = 0; k < examples.size(); ++k) {
    const DialogueExample& ex = *examples[k];
    if (!ex.rewrite) throw Error(ErrorKind::kMissingGold, "contrastive batch needs gold rewrites");
    out.anchors.push_back(BuildJointInput(ex, vocab).ToEncoderInput());
    out.positives.push_back(BuildSequenceInput(*ex.rewrite, vocab));
    out.negatives.push_back(BuildSequenceInput(HardNegative(ex, strategy, rngs[k]), vocab));
  }
  return out;
}

template <typename T>
ContrastiveBatch<T> BuildContrastiveBatch(std::span<const DialogueExample* const> examples,
                                          const Vocabulary& vocab, NegativeStrategy strategy,
                                          const ModelParameters<T>& params, DropoutMode mode,
                                          Rng& dropout_rng, std::span<Rng> deletion_rngs) {
  const auto inputs = MakeContrastiveInputs(examples, vocab, strategy, deletion_rngs);
  Graph<T> g;
  ModelGraph<T> mg(g, params, nullptr);
  ContrastiveBatch<T> batch;
  auto intents = [&](const std::vector<EncoderInput>& seqs) {
    auto enc = mg.Encode(seqs, mode, &dropout_rng);
    return Matrix<T>(g.value(mg.Intents(enc.hidden, enc.ranges)));
  };
  batch.anchors = intents(inputs.anchors);
  batch.positives = intents(inputs.positives);
  batch.hard_negatives = intents(inputs.negatives);
  return batch;
}

template ContrastiveBatch<float> BuildContrastiveBatch<float>(
    std::span<const DialogueExample* const>, const Vocabulary&, NegativeStrategy,
    const ModelParameters<float>&, DropoutMode, Rng&, std::span<Rng>);
template ContrastiveBatch<double> BuildContrastiveBatch<double>(
    std::span<const DialogueExample* const>, const Vocabulary&, NegativeStrategy,
    const ModelParameters<double>&, DropoutMode, Rng&, std::span<Rng>);

}  // namespace rewrite_lab
