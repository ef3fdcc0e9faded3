#pragma once

// One training objective evaluation on a batch: two dropout passes of the
// joint context/query input, supervised losses on both, the intent contrast
// on the first pass and the twin consistency term, combined with the loss
// weights. Shared by the trainer (float) and the gradient checks (double).

#include <span>
#include <vector>

#include "rewrite_lab/contrastive.hpp"
#include "rewrite_lab/corpus.hpp"
#include "rewrite_lab/losses.hpp"
#include "rewrite_lab/model.hpp"
#include "rewrite_lab/supervision.hpp"

namespace rewrite_lab {

// An example with its derived supervision, ready for the model.
struct PreparedExample {
  const DialogueExample* example = nullptr;
  JointInput joint;
  std::vector<int> gold_cells;     // M*N edit classes, row-major
  std::vector<int> gold_keywords;  // M+N binary labels
};

// Derives supervision for every example with a rewrite and context. Examples
// that cannot be aligned (or have no context) are skipped; their indices are
// returned in `dropped`.
std::vector<PreparedExample> PrepareExamples(const std::vector<DialogueExample>& examples,
                                             const Vocabulary& vocab, std::vector<int>* dropped);

struct ObjectiveOptions {
  LossWeights weights;
  NegativeStrategy strategy = NegativeStrategy::kRandomDeletion;
  // Average the intent contrast over both dropout passes instead of pass one.
  bool anchors_both_passes = false;
};

// Graph nodes of each component; invalid when the component was skipped
// because its coefficient is zero.
struct LossVars {
  Var mat1, mat2, det1, det2, icon, pcon, total;
};

template <typename T>
struct Objective {
  LossVars vars;
  LossBreakdown breakdown;  // accumulated in double precision
};

// `deletion_rngs` holds one stream per batch example (used by random
// deletion); `dropout_rng` supplies every dropout mask of the step.
template <typename T>
Objective<T> BuildObjective(ModelGraph<T>& model, std::span<const PreparedExample* const> batch,
                            const Vocabulary& vocab, const ObjectiveOptions& options,
                            Rng& dropout_rng, std::span<Rng> deletion_rngs);

}  // namespace rewrite_lab
