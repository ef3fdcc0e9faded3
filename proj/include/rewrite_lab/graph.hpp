#pragma once

// Minimal reverse-mode tape over row-major Eigen matrices. Nodes are appended
// in evaluation order; Backward() replays their closures in reverse.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rewrite_lab/error.hpp"
#include "rewrite_lab/rng.hpp"

namespace rewrite_lab {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Contiguous run of rows belonging to one sequence in a packed batch.
struct RowRange {
  int offset = 0;
  int length = 0;
};

template <typename T>
class Graph {
 public:
  using Mat = Matrix<T>;

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf referencing an external parameter. After Backward() its gradient is
  // added into *grad_sink (which must outlive the graph).
  Var Param(const Mat& value, Mat* grad_sink) {
    Node n;
    n.external = &value;
    n.grad_sink = grad_sink;
    return Push(std::move(n));
  }

  Var Constant(Mat value) {
    Node n;
    n.value = std::move(value);
    return Push(std::move(n));
  }

  const Mat& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  // Gradient buffer of a node, zero-initialized on first access.
  Mat& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Mat& val = value(v);
      n.grad = Mat::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  // grad(v) += e, assigning on first use to skip the zero fill.
  template <typename Expr>
  void Accumulate(Var v, const Expr& e) {
    Mat& dst = nodes_[v.id].grad;
    if (dst.size() == 0) {
      dst.noalias() = e;
    } else {
      dst.noalias() += e;
    }
  }

  bool has_grad(Var v) const { return nodes_[v.id].grad.size() != 0; }

  int size() const { return static_cast<int>(nodes_.size()); }

  // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
  void Backward(Var root) {
    if (value(root).size() != 1) throw Error(ErrorKind::kShape, "Backward needs a scalar root");
    grad(root)(0, 0) = T(1);
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward();
      if (n.grad_sink) *n.grad_sink += n.grad;
    }
  }

  // Node whose value is computed by the caller; `backward` receives the
  // output gradient and must push into the inputs via grad().
  Var Custom(Mat value, std::function<void(const Mat&)> backward) {
    Node n;
    n.value = std::move(value);
    const int id = size();
    if (backward) {
      n.backward = [this, id, fn = std::move(backward)] { fn(nodes_[id].grad); };
    }
    return Push(std::move(n));
  }

  Var MatMul(Var a, Var b) {
    Mat out = value(a) * value(b);
    return Custom(std::move(out), [this, a, b](const Mat& g) {
      Accumulate(a, g * value(b).transpose());
      Accumulate(b, value(a).transpose() * g);
    });
  }

  Var Add(Var a, Var b) {
    Mat out = value(a) + value(b);
    return Custom(std::move(out), [this, a, b](const Mat& g) {
      Accumulate(a, g);
      Accumulate(b, g);
    });
  }

  Var Scale(Var x, T factor) {
    Mat out = factor * value(x);
    return Custom(std::move(out), [this, x, factor](const Mat& g) { Accumulate(x, factor * g); });
  }

  // x (R x C) + bias (1 x C) broadcast over rows.
  Var AddRow(Var x, Var bias) {
    Mat out = value(x);
    out.rowwise() += value(bias).row(0);
    return Custom(std::move(out), [this, x, bias](const Mat& g) {
      Accumulate(x, g);
      Accumulate(bias, g.colwise().sum());
    });
  }

  Var Affine(Var x, Var weight, Var bias) { return AddRow(MatMul(x, weight), bias); }

  // Weighted sum of 1x1 nodes.
  Var WeightedSum(const std::vector<Var>& terms, const std::vector<double>& weights) {
    Mat out = Mat::Zero(1, 1);
    for (size_t k = 0; k < terms.size(); ++k) out(0, 0) += T(weights[k]) * value(terms[k])(0, 0);
    return Custom(std::move(out), [this, terms, weights](const Mat& g) {
      for (size_t k = 0; k < terms.size(); ++k) {
        if (weights[k] != 0.0) grad(terms[k])(0, 0) += T(weights[k]) * g(0, 0);
      }
    });
  }

  // Row gather, used both for embedding lookup and for selecting positions.
  Var GatherRows(Var table, std::vector<int> rows) {
    const Mat& src = value(table);
    Mat out(static_cast<Eigen::Index>(rows.size()), src.cols());
    for (size_t r = 0; r < rows.size(); ++r) out.row(r) = src.row(rows[r]);
    return Custom(std::move(out), [this, table, rows = std::move(rows)](const Mat& g) {
      Mat& dst = grad(table);
      for (size_t r = 0; r < rows.size(); ++r) dst.row(rows[r]) += g.row(r);
    });
  }

  // Tanh approximation of GELU; smooth everywhere, which keeps finite
  // difference checks clean.
  Var Gelu(Var x) {
    constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
    constexpr T kA = T(0.044715);
    const auto v = value(x).array();
    const auto t = (kC * (v + kA * v.cube())).tanh().eval();
    Mat out = (T(0.5) * v * (T(1) + t)).matrix();
    Mat deriv = (T(0.5) * (T(1) + t) +
                 T(0.5) * v * (T(1) - t.square()) * kC * (T(1) + T(3) * kA * v.square()))
                    .matrix();
    return Custom(std::move(out), [this, x, deriv = std::move(deriv)](const Mat& g) {
      Accumulate(x, g.cwiseProduct(deriv));
    });
  }

  // Row-wise layer norm with scale (1 + scale_offset) and shift.
  Var LayerNorm(Var x, Var scale_offset, Var shift, T eps = T(1e-5)) {
    const Mat& in = value(x);
    const Eigen::Index rows = in.rows();
    const Eigen::Index cols = in.cols();
    Mat xhat(rows, cols);
    std::vector<T> inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const T mean = in.row(r).mean();
      const T var = (in.row(r).array() - mean).square().mean();
      inv_std[r] = T(1) / std::sqrt(var + eps);
      xhat.row(r) = (in.row(r).array() - mean) * inv_std[r];
    }
    const auto gain = (value(scale_offset).array() + T(1)).matrix().eval();
    Mat out = xhat;
    for (Eigen::Index r = 0; r < rows; ++r) {
      out.row(r) = xhat.row(r).cwiseProduct(gain.row(0)) + value(shift).row(0);
    }
    return Custom(std::move(out), [this, x, scale_offset, shift, xhat = std::move(xhat),
                                   inv_std = std::move(inv_std), gain](const Mat& g) {
      grad(scale_offset) += g.cwiseProduct(xhat).colwise().sum();
      grad(shift) += g.colwise().sum();
      Mat& dx = grad(x);
      const auto n = static_cast<T>(xhat.cols());
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        const auto dxhat = g.row(r).cwiseProduct(gain.row(0)).eval();
        const T sum = dxhat.sum();
        const T dot = dxhat.dot(xhat.row(r));
        dx.row(r).array() +=
            inv_std[r] / n * (n * dxhat.array() - sum - xhat.row(r).array() * dot);
      }
    });
  }

  // Inverted dropout: kept activations are scaled by 1 / (1 - rate). Each
  // 64-bit draw decides two elements, one per 32-bit half.
  Var Dropout(Var x, double rate, Rng& rng) {
    if (rate <= 0.0) return x;
    const Mat& in = value(x);
    Mat mask(in.rows(), in.cols());
    const T keep_scale = T(1.0 / (1.0 - rate));
    const auto threshold = static_cast<std::uint64_t>(rate * 4294967296.0);
    T* m = mask.data();
    const Eigen::Index n = mask.size();
    for (Eigen::Index i = 0; i < n; i += 2) {
      const std::uint64_t bits = rng.NextU64();
      m[i] = (bits & 0xffffffffu) < threshold ? T(0) : keep_scale;
      if (i + 1 < n) m[i + 1] = (bits >> 32) < threshold ? T(0) : keep_scale;
    }
    Mat out = in.cwiseProduct(mask);
    return Custom(std::move(out), [this, x, mask = std::move(mask)](const Mat& g) {
      Accumulate(x, g.cwiseProduct(mask));
    });
  }

  Var SoftmaxRows(Var x) {
    const Mat& in = value(x);
    Mat out(in.rows(), in.cols());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
      const T mx = in.row(r).maxCoeff();
      out.row(r) = (in.row(r).array() - mx).exp();
      out.row(r) /= out.row(r).sum();
    }
    const int id = size();
    return Custom(std::move(out), [this, x, id](const Mat& g) {
      const Mat& y = nodes_[id].value;
      Mat& dx = grad(x);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const T dot = g.row(r).dot(y.row(r));
        dx.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
      }
    });
  }

  // Column-wise concatenation; used to fuse projections into one product.
  Var ConcatCols(const std::vector<Var>& parts) {
    Eigen::Index cols = 0;
    for (Var p : parts) cols += value(p).cols();
    Mat out(value(parts.front()).rows(), cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      out.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return Custom(std::move(out), [this, parts](const Mat& g) {
      Eigen::Index at = 0;
      for (Var p : parts) {
        const Eigen::Index c = value(p).cols();
        Accumulate(p, g.middleCols(at, c));
        at += c;
      }
    });
  }

  // Multi-head scaled dot-product self-attention restricted to each range of
  // rows. `qkv` is (rows x 3H): queries, keys and values side by side, with H
  // divisible by `heads`.
  Var SegmentAttention(Var qkv, std::vector<RowRange> ranges, int heads) {
    const Mat& X = value(qkv);
    const Eigen::Index width = X.cols() / 3;
    const Eigen::Index dh = width / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    Mat out(X.rows(), width);
    std::vector<Mat> probs;
    probs.reserve(ranges.size() * heads);
    for (const auto& range : ranges) {
      for (int h = 0; h < heads; ++h) {
        const auto qs = X.block(range.offset, h * dh, range.length, dh);
        const auto ks = X.block(range.offset, width + h * dh, range.length, dh);
        const auto vs = X.block(range.offset, 2 * width + h * dh, range.length, dh);
        Mat scores = (qs * ks.transpose()) * scale;
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
          const T mx = scores.row(r).maxCoeff();
          scores.row(r) = (scores.row(r).array() - mx).exp();
          scores.row(r) /= scores.row(r).sum();
        }
        out.block(range.offset, h * dh, range.length, dh).noalias() = scores * vs;
        probs.push_back(std::move(scores));
      }
    }
    return Custom(std::move(out), [this, qkv, ranges = std::move(ranges), heads, width, dh, scale,
                                   probs = std::move(probs)](const Mat& g) {
      const Mat& X = value(qkv);
      Mat& dX = grad(qkv);
      size_t p = 0;
      for (const auto& range : ranges) {
        for (int h = 0; h < heads; ++h, ++p) {
          const Eigen::Index r0 = range.offset;
          const Eigen::Index n = range.length;
          const Eigen::Index cq = h * dh, ck = width + h * dh, cv = 2 * width + h * dh;
          const Mat& A = probs[p];
          const auto go = g.block(r0, h * dh, n, dh);
          dX.block(r0, cv, n, dh).noalias() += A.transpose() * go;
          Mat dA = go * X.block(r0, cv, n, dh).transpose();
          for (Eigen::Index r = 0; r < dA.rows(); ++r) {
            const T dot = dA.row(r).dot(A.row(r));
            dA.row(r).array() = A.row(r).array() * (dA.row(r).array() - dot);
          }
          dA *= scale;
          dX.block(r0, cq, n, dh).noalias() += dA * X.block(r0, ck, n, dh);
          dX.block(r0, ck, n, dh).noalias() += dA.transpose() * X.block(r0, cq, n, dh);
        }
      }
    });
  }

  // Pairwise class scores for one example of the edit-matrix head:
  //   out[i*N + j, c] = Cr[ci] . A[qj, c*H:(c+1)*H] + CU[ci, c] + QV[qj, c] + b[c]
  // where ci = ctx.offset + i indexes the context rows and qj = qry.offset + j
  // the query rows (already multiplied by the bilinear weights) of the batch.
  Var PairScores(Var crows, Var a, Var cu, Var qv, Var bias, RowRange ctx, RowRange qry,
                 int classes) {
    const Mat& Cr = value(crows);
    const Mat& A = value(a);
    const Eigen::Index width = Cr.cols();
    const int M = ctx.length;
    const int N = qry.length;
    Mat out(static_cast<Eigen::Index>(M) * N, classes);
    const auto cblock = Cr.middleRows(ctx.offset, M);
    for (int c = 0; c < classes; ++c) {
      const Mat scores = cblock * A.block(qry.offset, c * width, N, width).transpose();  // M x N
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
          out(i * N + j, c) = scores(i, j) + value(cu)(ctx.offset + i, c) +
                              value(qv)(qry.offset + j, c) + value(bias)(0, c);
        }
      }
    }
    return Custom(std::move(out), [this, crows, a, cu, qv, bias, ctx, qry, classes,
                                   width](const Mat& g) {
      const int M = ctx.length;
      const int N = qry.length;
      Mat& dC = grad(crows);
      Mat& dA = grad(a);
      Mat& dCU = grad(cu);
      Mat& dQV = grad(qv);
      Mat& db = grad(bias);
      const Mat& Cr = value(crows);
      const Mat& A = value(a);
      Mat gs(M, N);
      for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < M; ++i) {
          for (int j = 0; j < N; ++j) gs(i, j) = g(i * N + j, c);
        }
        dC.middleRows(ctx.offset, M).noalias() += gs * A.block(qry.offset, c * width, N, width);
        dA.block(qry.offset, c * width, N, width).noalias() +=
            gs.transpose() * Cr.middleRows(ctx.offset, M);
        dCU.block(ctx.offset, c, M, 1) += gs.rowwise().sum();
        dQV.block(qry.offset, c, N, 1) += gs.colwise().sum().transpose();
        db(0, c) += gs.sum();
      }
    });
  }

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    Mat* grad_sink = nullptr;
    std::function<void()> backward;
  };

  Var Push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace rewrite_lab
