#pragma once

// Training objectives. Every loss takes probabilities (or intent vectors)
// and optionally returns the gradient with respect to those inputs; the
// model graph wires these gradients into the encoder.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rewrite_lab/error.hpp"
#include "rewrite_lab/graph.hpp"

namespace rewrite_lab {

inline constexpr double kProbFloor = 1e-12;

using ClassWeights = std::array<double, 3>;

struct LossWeights {
  double alpha = 1.0;  // words detection
  double beta = 1.0;   // intent contrast
  double gamma = 1.0;  // twin consistency
  double tau = 0.5;
  ClassWeights class_weights = {1.0, 5.0, 5.0};

  void Validate() const;
};

struct LossBreakdown {
  double l_mat_cq1 = 0;
  double l_mat_cq2 = 0;
  double l_det_cq1 = 0;
  double l_det_cq2 = 0;
  double l_icon = 0;
  double l_pcon = 0;
  double l_final = 0;

  static const char* CsvHeader();
  std::string CsvRow() const;
};

// Assembles the weighted total from the component losses.
LossBreakdown LossFinal(LossBreakdown components, const LossWeights& weights);

namespace detail {

inline double ClampedNegLog(double p) { return -std::log(std::max(p, kProbFloor)); }
inline double ClampedNegLogGrad(double p) { return p > kProbFloor ? -1.0 / p : 0.0; }

template <typename T>
void CheckRows(const Matrix<T>& probs, std::span<const int> gold, int classes, const char* what) {
  if (probs.rows() != static_cast<Eigen::Index>(gold.size()) || probs.cols() != classes) {
    throw Error(ErrorKind::kShape, std::string(what) + ": " + std::to_string(probs.rows()) + "x" +
                                       std::to_string(probs.cols()) + " predictions for " +
                                       std::to_string(gold.size()) + " labels");
  }
}

}  // namespace detail

// Class-weighted mean cross-entropy over edit-matrix cells:
//   sum_c w[y_c] * -log P[c, y_c] / sum_c w[y_c]
template <typename T>
double LossMat(const Matrix<T>& probs, std::span<const int> gold, const ClassWeights& weights,
               Matrix<T>* d_probs = nullptr) {
  detail::CheckRows(probs, gold, 3, "LossMat");
  if (gold.empty()) throw Error(ErrorKind::kShape, "LossMat: empty matrix");
  double num = 0;
  double den = 0;
  for (size_t c = 0; c < gold.size(); ++c) {
    const double w = weights[gold[c]];
    num += w * detail::ClampedNegLog(static_cast<double>(probs(c, gold[c])));
    den += w;
  }
  if (d_probs) {
    *d_probs = Matrix<T>::Zero(probs.rows(), probs.cols());
    for (size_t c = 0; c < gold.size(); ++c) {
      (*d_probs)(c, gold[c]) = static_cast<T>(
          weights[gold[c]] * detail::ClampedNegLogGrad(static_cast<double>(probs(c, gold[c]))) /
          den);
    }
  }
  return num / den;
}

// Mean binary cross-entropy over (M + N) token rows of a (rows x 2) matrix.
template <typename T>
double LossDet(const Matrix<T>& probs, std::span<const int> gold, Matrix<T>* d_probs = nullptr) {
  detail::CheckRows(probs, gold, 2, "LossDet");
  if (gold.empty()) throw Error(ErrorKind::kShape, "LossDet: no tokens");
  const double n = static_cast<double>(gold.size());
  double total = 0;
  for (size_t r = 0; r < gold.size(); ++r) {
    total += detail::ClampedNegLog(static_cast<double>(probs(r, gold[r])));
  }
  if (d_probs) {
    *d_probs = Matrix<T>::Zero(probs.rows(), probs.cols());
    for (size_t r = 0; r < gold.size(); ++r) {
      (*d_probs)(r, gold[r]) =
          static_cast<T>(detail::ClampedNegLogGrad(static_cast<double>(probs(r, gold[r]))) / n);
    }
  }
  return total / n;
}

// KL(p||q) + KL(q||p) with entries clamped at kProbFloor. Optional gradients
// are with respect to the unclamped entries.
template <typename T>
double BiKl(std::span<const T> p, std::span<const T> q, T* d_p = nullptr, T* d_q = nullptr) {
  if (p.size() != q.size()) {
    throw Error(ErrorKind::kShape, "BiKl: support sizes " + std::to_string(p.size()) + " and " +
                                       std::to_string(q.size()));
  }
  double total = 0;
  for (size_t k = 0; k < p.size(); ++k) {
    const double pk = std::max(static_cast<double>(p[k]), kProbFloor);
    const double qk = std::max(static_cast<double>(q[k]), kProbFloor);
    const double log_ratio = std::log(pk / qk);
    total += (pk - qk) * log_ratio;
    if (d_p && static_cast<double>(p[k]) > kProbFloor) {
      d_p[k] += static_cast<T>(log_ratio + 1.0 - qk / pk);
    }
    if (d_q && static_cast<double>(q[k]) > kProbFloor) {
      d_q[k] += static_cast<T>(-log_ratio + 1.0 - pk / qk);
    }
  }
  return total;
}

// Mean over rows of BiKl(P.row(r), Q.row(r)).
template <typename T>
double BiKlRows(const Matrix<T>& p, const Matrix<T>& q, Matrix<T>* d_p = nullptr,
                Matrix<T>* d_q = nullptr) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw Error(ErrorKind::kShape, "BiKlRows: twin predictions differ in shape");
  }
  if (p.rows() == 0) return 0.0;
  if (d_p) *d_p = Matrix<T>::Zero(p.rows(), p.cols());
  if (d_q) *d_q = Matrix<T>::Zero(q.rows(), q.cols());
  double total = 0;
  const auto cols = static_cast<size_t>(p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    total += BiKl<T>(std::span<const T>(p.row(r).data(), cols),
                     std::span<const T>(q.row(r).data(), cols),
                     d_p ? d_p->row(r).data() : nullptr, d_q ? d_q->row(r).data() : nullptr);
  }
  const double n = static_cast<double>(p.rows());
  if (d_p) *d_p /= static_cast<T>(n);
  if (d_q) *d_q /= static_cast<T>(n);
  return total / n;
}

template <typename T>
struct PconGrads {
  Matrix<T> det1, det2, mat1, mat2;
};

// Half the sum of the mean Bi-KL over detection rows and over matrix cells
// of two dropout passes of the same example.
template <typename T>
double LossPcon(const Matrix<T>& det1, const Matrix<T>& det2, const Matrix<T>& mat1,
                const Matrix<T>& mat2, PconGrads<T>* grads = nullptr) {
  const double kl_det = BiKlRows(det1, det2, grads ? &grads->det1 : nullptr,
                                 grads ? &grads->det2 : nullptr);
  const double kl_mat = BiKlRows(mat1, mat2, grads ? &grads->mat1 : nullptr,
                                 grads ? &grads->mat2 : nullptr);
  if (grads) {
    grads->det1 *= T(0.5);
    grads->det2 *= T(0.5);
    grads->mat1 *= T(0.5);
    grads->mat2 *= T(0.5);
  }
  return 0.5 * (kl_det + kl_mat);
}

template <typename T>
struct IconGrads {
  Matrix<T> anchors, positives, negatives;
};

// NT-Xent over a batch of B (anchor, positive, hard negative) intent rows.
// For anchor i the denominator holds its positive plus the 3B-2 in-batch
// negatives: the other anchors, the other positives and every hard negative.
// Similarity is cosine; the result is the mean over anchors.
template <typename T>
double LossIcon(const Matrix<T>& anchors, const Matrix<T>& positives, const Matrix<T>& negatives,
                double tau, IconGrads<T>* grads = nullptr) {
  using MatD = Matrix<double>;
  const Eigen::Index B = anchors.rows();
  if (B == 0 || positives.rows() != B || negatives.rows() != B ||
      positives.cols() != anchors.cols() || negatives.cols() != anchors.cols()) {
    throw Error(ErrorKind::kShape, "LossIcon: anchors, positives and negatives must be B x H");
  }
  if (!(tau > 0)) throw Error(ErrorKind::kConfig, "LossIcon: temperature must be positive");

  auto normalize = [](const Matrix<T>& x, MatD& unit, std::vector<double>& norms) {
    unit = x.template cast<double>();
    norms.resize(unit.rows());
    for (Eigen::Index r = 0; r < unit.rows(); ++r) {
      norms[r] = unit.row(r).norm();
      if (!(norms[r] > 0) || !std::isfinite(norms[r])) {
        throw Error(ErrorKind::kDegenerateVector, "LossIcon: zero-norm intent vector");
      }
      unit.row(r) /= norms[r];
    }
  };
  MatD a, p, n;
  std::vector<double> na, np, nn;
  normalize(anchors, a, na);
  normalize(positives, p, np);
  normalize(negatives, n, nn);

  const MatD sim_aa = a * a.transpose() / tau;
  const MatD sim_ap = a * p.transpose() / tau;
  const MatD sim_an = a * n.transpose() / tau;

  // d loss / d logit for each of the three similarity blocks.
  MatD g_aa = MatD::Zero(B, B), g_ap = MatD::Zero(B, B), g_an = MatD::Zero(B, B);
  double total = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    double mx = sim_ap(i, i);
    for (Eigen::Index j = 0; j < B; ++j) {
      if (j != i) mx = std::max({mx, sim_aa(i, j), sim_ap(i, j)});
      mx = std::max(mx, sim_an(i, j));
    }
    double z = 0;
    for (Eigen::Index j = 0; j < B; ++j) {
      if (j != i) z += std::exp(sim_aa(i, j) - mx);
      z += std::exp(sim_ap(i, j) - mx);  // includes the positive at j == i
      z += std::exp(sim_an(i, j) - mx);
    }
    total += -(sim_ap(i, i) - mx) + std::log(z);
    for (Eigen::Index j = 0; j < B; ++j) {
      if (j != i) g_aa(i, j) = std::exp(sim_aa(i, j) - mx) / z;
      g_ap(i, j) = std::exp(sim_ap(i, j) - mx) / z;
      g_an(i, j) = std::exp(sim_an(i, j) - mx) / z;
    }
    g_ap(i, i) -= 1.0;
  }
  const double loss = total / static_cast<double>(B);
  if (!grads) return loss;

  const double scale = 1.0 / (tau * static_cast<double>(B));
  g_aa *= scale;
  g_ap *= scale;
  g_an *= scale;
  // Gradients with respect to the unit vectors.
  MatD du_a = g_aa * a + g_aa.transpose() * a + g_ap * p + g_an * n;
  MatD du_p = g_ap.transpose() * a;
  MatD du_n = g_an.transpose() * a;

  auto back = [](const MatD& unit, const std::vector<double>& norms, const MatD& du,
                 Matrix<T>& out) {
    out.resize(unit.rows(), unit.cols());
    for (Eigen::Index r = 0; r < unit.rows(); ++r) {
      const double radial = du.row(r).dot(unit.row(r));
      out.row(r) = ((du.row(r) - radial * unit.row(r)) / norms[r]).template cast<T>();
    }
  };
  back(a, na, du_a, grads->anchors);
  back(p, np, du_p, grads->positives);
  back(n, nn, du_n, grads->negatives);
  return loss;
}

}  // namespace rewrite_lab
