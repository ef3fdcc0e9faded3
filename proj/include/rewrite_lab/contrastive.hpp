#pragma once

#include <span>
#include <string>
#include <vector>

#include "rewrite_lab/corpus.hpp"
#include "rewrite_lab/model.hpp"
#include "rewrite_lab/rng.hpp"

namespace rewrite_lab {

// How hard negatives for the intent contrast are built from the query.
enum class NegativeStrategy { kRandomDeletion, kOrigin, kSpanErase };

// "rd", "origin", "se".
const char* NegativeStrategyName(NegativeStrategy strategy);
NegativeStrategy ParseNegativeStrategy(const std::string& name);

// [CLS] followed by the gold rewrite. Throws MissingGold without a rewrite.
Tokens MakePositiveInput(const DialogueExample& example);

// Number of tokens removed from a query of length n: max(1, round(0.2 n)),
// rounding halves up. Zero for n < 2.
int DeletionCount(int n);

// Removes DeletionCount(n) distinct positions chosen uniformly without
// replacement. A single-token query is returned unchanged with a warning.
Tokens RandomDeletion(const Tokens& query, Rng& rng);

// Removes the longest contiguous span shared by the query and the flattened
// context (leftmost in the query on ties). A query that would become empty is
// replaced by a single [UNK].
Tokens SpanErase(const DialogueExample& example);

// Corrupted query (without [CLS]) under `strategy`; `rng` is only consumed by
// random deletion.
Tokens HardNegative(const DialogueExample& example, NegativeStrategy strategy, Rng& rng);

struct ContrastiveInputs {
  std::vector<EncoderInput> anchors;    // joint context + query
  std::vector<EncoderInput> positives;  // [CLS] + rewrite
  std::vector<EncoderInput> negatives;  // [CLS] + corrupted query
};

// `rngs` holds one stream per example (keyed by seed, epoch and example
// index in training).
ContrastiveInputs MakeContrastiveInputs(std::span<const DialogueExample* const> examples,
                                        const Vocabulary& vocab, NegativeStrategy strategy,
                                        std::span<Rng> rngs);

template <typename T>
struct ContrastiveBatch {
  Matrix<T> anchors;         // B x H
  Matrix<T> positives;       // B x H
  Matrix<T> hard_negatives;  // B x H
};

// Encodes anchors, positives and hard negatives through the same encoder.
// Easy negatives are the other rows of the batch, used by LossIcon.
template <typename T>
ContrastiveBatch<T> BuildContrastiveBatch(std::span<const DialogueExample* const> examples,
                                          const Vocabulary& vocab, NegativeStrategy strategy,
                                          const ModelParameters<T>& params, DropoutMode mode,
                                          Rng& dropout_rng, std::span<Rng> deletion_rngs);

}  // namespace rewrite_lab
