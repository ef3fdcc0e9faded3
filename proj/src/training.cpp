#include "rewrite_lab/training.hpp"

#include <iostream>

#include "rewrite_lab/error.hpp"

namespace rewrite_lab {
namespace {

template <typename T>
Matrix<T> Scalar(double v) {
  Matrix<T> m(1, 1);
  m(0, 0) = static_cast<T>(v);
  return m;
}

// Loss nodes compute their gradient eagerly and scale it by the incoming
// gradient on the way back.
template <typename T>
Var MatLossNode(Graph<T>& g, Var probs, const std::vector<int>& gold, const ClassWeights& w,
                double* value) {
  Matrix<T> d;
  *value = LossMat(g.value(probs), std::span<const int>(gold), w, &d);
  return g.Custom(Scalar<T>(*value), [&g, probs, d = std::move(d)](const Matrix<T>& out) {
    g.grad(probs) += out(0, 0) * d;
  });
}

template <typename T>
Var DetLossNode(Graph<T>& g, Var probs, const std::vector<int>& gold, double* value) {
  Matrix<T> d;
  *value = LossDet(g.value(probs), std::span<const int>(gold), &d);
  return g.Custom(Scalar<T>(*value), [&g, probs, d = std::move(d)](const Matrix<T>& out) {
    g.grad(probs) += out(0, 0) * d;
  });
}

template <typename T>
Var IconNode(Graph<T>& g, Var anchors, Var positives, Var negatives, double tau, double* value) {
  IconGrads<T> d;
  *value = LossIcon(g.value(anchors), g.value(positives), g.value(negatives), tau, &d);
  return g.Custom(Scalar<T>(*value), [&g, anchors, positives, negatives,
                                      d = std::move(d)](const Matrix<T>& out) {
    g.grad(anchors) += out(0, 0) * d.anchors;
    g.grad(positives) += out(0, 0) * d.positives;
    g.grad(negatives) += out(0, 0) * d.negatives;
  });
}

template <typename T>
Var PconNode(Graph<T>& g, Var det1, Var det2, Var mat1, Var mat2, double* value) {
  PconGrads<T> d;
  *value = LossPcon(g.value(det1), g.value(det2), g.value(mat1), g.value(mat2), &d);
  return g.Custom(Scalar<T>(*value), [&g, det1, det2, mat1, mat2,
                                      d = std::move(d)](const Matrix<T>& out) {
    g.grad(det1) += out(0, 0) * d.det1;
    g.grad(det2) += out(0, 0) * d.det2;
    g.grad(mat1) += out(0, 0) * d.mat1;
    g.grad(mat2) += out(0, 0) * d.mat2;
  });
}

template <typename T>
Var Mean(Graph<T>& g, const std::vector<Var>& terms) {
  return g.WeightedSum(terms, std::vector<double>(terms.size(), 1.0 / terms.size()));
}

}  // namespace

std::vector<PreparedExample> PrepareExamples(const std::vector<DialogueExample>& examples,
                                             const Vocabulary& vocab, std::vector<int>* dropped) {
  std::vector<PreparedExample> out;
  for (size_t k = 0; k < examples.size(); ++k) {
    const DialogueExample& ex = examples[k];
    auto drop = [&](const std::string& why) {
      std::clog << "warning: dropping example " << k;
      if (ex.line > 0) std::clog << " (line " << ex.line << ")";
      std::clog << ": " << why << '\n';
      if (dropped) dropped->push_back(static_cast<int>(k));
    };
    if (!ex.rewrite) {
      drop("no gold rewrite");
      continue;
    }
    PreparedExample p;
    p.example = &ex;
    p.joint = BuildJointInput(ex, vocab);
    if (p.joint.M() == 0) {
      drop("empty context");
      continue;
    }
    try {
      const EditMatrix matrix = DeriveEditMatrix(ex);
      p.gold_cells = matrix.ClassIds();
      p.gold_keywords = DeriveKeywordLabels(matrix).labels;
    } catch (const Error& e) {
      drop(e.what());
      continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
Objective<T> BuildObjective(ModelGraph<T>& model, std::span<const PreparedExample* const> batch,
                            const Vocabulary& vocab, const ObjectiveOptions& options,
                            Rng& dropout_rng, std::span<Rng> deletion_rngs) {
  const LossWeights& w = options.weights;
  const size_t B = batch.size();
  if (B == 0) throw Error(ErrorKind::kShape, "empty batch");
  const bool need_det = w.alpha > 0 || w.gamma > 0;
  const bool need_icon = w.beta > 0;

  // Packed layout: CQ pass one, CQ pass two, then positives and negatives.
  std::vector<EncoderInput> inputs;
  std::vector<const JointInput*> joints;
  for (const auto* p : batch) joints.push_back(&p->joint);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto* p : batch) inputs.push_back(p->joint.ToEncoderInput());
  }
  if (need_icon) {
    std::vector<const DialogueExample*> raw;
    for (const auto* p : batch) raw.push_back(p->example);
    auto contrast = MakeContrastiveInputs(raw, vocab, options.strategy, deletion_rngs);
    for (auto* list : {&contrast.positives, &contrast.negatives}) {
      for (auto& in : *list) inputs.push_back(std::move(in));
    }
  }

  Graph<T>& g = model.graph();
  auto enc = model.Encode(inputs, DropoutMode::kActive, &dropout_rng);
  std::span<const RowRange> pass1(enc.ranges.data(), B);
  std::span<const RowRange> pass2(enc.ranges.data() + B, B);
  const auto mat1 = model.MatrixProbs(enc.hidden, pass1, joints);
  const auto mat2 = model.MatrixProbs(enc.hidden, pass2, joints);
  std::vector<Var> det1, det2;
  if (need_det) {
    for (size_t b = 0; b < B; ++b) {
      det1.push_back(model.DetectionProbs(enc.hidden, pass1[b], *joints[b]));
      det2.push_back(model.DetectionProbs(enc.hidden, pass2[b], *joints[b]));
    }
  }

  Objective<T> obj;
  LossBreakdown& lb = obj.breakdown;
  std::vector<Var> m1, m2, d1, d2, pc;
  for (size_t b = 0; b < B; ++b) {
    double v = 0;
    m1.push_back(MatLossNode(g, mat1[b], batch[b]->gold_cells, w.class_weights, &v));
    lb.l_mat_cq1 += v / B;
    m2.push_back(MatLossNode(g, mat2[b], batch[b]->gold_cells, w.class_weights, &v));
    lb.l_mat_cq2 += v / B;
    if (w.alpha > 0) {
      d1.push_back(DetLossNode(g, det1[b], batch[b]->gold_keywords, &v));
      lb.l_det_cq1 += v / B;
      d2.push_back(DetLossNode(g, det2[b], batch[b]->gold_keywords, &v));
      lb.l_det_cq2 += v / B;
    }
    if (w.gamma > 0) {
      pc.push_back(PconNode(g, det1[b], det2[b], mat1[b], mat2[b], &v));
      lb.l_pcon += v / B;
    }
  }
  obj.vars.mat1 = Mean(g, m1);
  obj.vars.mat2 = Mean(g, m2);
  if (w.alpha > 0) {
    obj.vars.det1 = Mean(g, d1);
    obj.vars.det2 = Mean(g, d2);
  }
  if (w.gamma > 0) obj.vars.pcon = Mean(g, pc);
  if (need_icon) {
    std::span<const RowRange> pos(enc.ranges.data() + 2 * B, B);
    std::span<const RowRange> neg(enc.ranges.data() + 3 * B, B);
    const Var positives = model.Intents(enc.hidden, pos);
    const Var negatives = model.Intents(enc.hidden, neg);
    double v = 0;
    Var icon1 = IconNode(g, model.Intents(enc.hidden, pass1), positives, negatives, w.tau, &v);
    if (options.anchors_both_passes) {
      double v2 = 0;
      Var icon2 = IconNode(g, model.Intents(enc.hidden, pass2), positives, negatives, w.tau, &v2);
      obj.vars.icon = g.WeightedSum({icon1, icon2}, {0.5, 0.5});
      lb.l_icon = 0.5 * (v + v2);
    } else {
      obj.vars.icon = icon1;
      lb.l_icon = v;
    }
  }

  std::vector<Var> terms{obj.vars.mat1, obj.vars.mat2};
  std::vector<double> coeffs{1.0, 1.0};
  if (obj.vars.det1.valid()) {
    terms.insert(terms.end(), {obj.vars.det1, obj.vars.det2});
    coeffs.insert(coeffs.end(), {w.alpha, w.alpha});
  }
  if (obj.vars.icon.valid()) {
    terms.push_back(obj.vars.icon);
    coeffs.push_back(w.beta);
  }
  if (obj.vars.pcon.valid()) {
    terms.push_back(obj.vars.pcon);
    coeffs.push_back(w.gamma);
  }
  obj.vars.total = g.WeightedSum(terms, coeffs);
  lb = LossFinal(lb, w);
  return obj;
}

template Objective<float> BuildObjective<float>(ModelGraph<float>&,
                                                std::span<const PreparedExample* const>,
                                                const Vocabulary&, const ObjectiveOptions&, Rng&,
                                                std::span<Rng>);
template Objective<double> BuildObjective<double>(ModelGraph<double>&,
                                                  std::span<const PreparedExample* const>,
                                                  const Vocabulary&, const ObjectiveOptions&, Rng&,
                                                  std::span<Rng>);

}  // namespace rewrite_lab
