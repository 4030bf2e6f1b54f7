#pragma once

#include <functional>
#include <utility>

#include "memreasoner/core.hpp"

namespace memr {

// Reverse-mode tape. Nodes hold values; backward closures scatter adjoints to
// parents. A Var is an index into the tape. Values are always computed; grads
// are allocated lazily during backward, so inference pays no gradient cost.
class Tape {
 public:
  using Var = int;

  struct Node {
    Mat value;
    Mat grad;                                   // allocated on demand
    std::function<void(Tape&, Node&)> backward; // empty for leaves
    bool needs_grad = false;
  };

  void clear() { nodes_.clear(); }
  size_t size() const { return nodes_.size(); }

  const Mat& val(Var v) const { return nodes_[v].value; }
  Mat& grad(Var v) { return nodes_[v].grad; }
  Node& node(Var v) { return nodes_[v]; }

  Var input(Mat value, bool needs_grad = false) {
    return push(std::move(value), needs_grad, {});
  }

  Var constant(Mat value) { return input(std::move(value), false); }

  // ---- elementwise / linear ----

  Var add(Var a, Var b) {
    Mat out = val(a) + val(b);
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      t.accum(b, n.grad);
    });
  }

  Var sub(Var a, Var b) {
    Mat out = val(a) - val(b);
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
      t.accum(a, n.grad);
      t.accum_scaled(b, n.grad, -1.0);
    });
  }

  Var scale(Var a, double s) {
    Mat out = s * val(a);
    return push(std::move(out), needs(a), [a, s](Tape& t, Node& n) {
      t.accum_scaled(a, n.grad, s);
    });
  }

  // a + s*b
  Var add_scaled(Var a, Var b, double s) {
    Mat out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += s * val(b).data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b, s](Tape& t, Node& n) {
      t.accum(a, n.grad);
      t.accum_scaled(b, n.grad, s);
    });
  }

  Var hadamard(Var a, Var b) {
    Mat out = val(a);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= val(b).data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
      if (t.needs(a)) {
        Mat g = n.grad;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= t.val(b).data[i];
        t.accum(a, g);
      }
      if (t.needs(b)) {
        Mat g = n.grad;
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] *= t.val(a).data[i];
        t.accum(b, g);
      }
    });
  }

  Var matmul(Var a, Var b) {
    Mat out = memr::matmul(val(a), val(b));
    return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
      if (t.needs(a)) t.accum(a, memr::matmul(n.grad, t.val(b).transposed()));
      if (t.needs(b)) t.accum(b, memr::matmul(t.val(a).transposed(), n.grad));
    });
  }

  Var transpose(Var a) {
    Mat out = val(a).transposed();
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      t.accum(a, n.grad.transposed());
    });
  }

  Var add_diag(Var a, double lambda) {
    Mat out = val(a);
    for (int i = 0; i < out.rows; ++i) out(i, i) += lambda;
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) { t.accum(a, n.grad); });
  }

  // ---- nonlinearities ----

  Var sigmoid(Var a) {
    Mat out = val(a);
    for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.data.size(); ++i) {
        double y = n.value.data[i];
        g.data[i] *= y * (1.0 - y);
      }
      t.accum(a, g);
    });
  }

  Var tanh_(Var a) {
    Mat out = val(a);
    for (double& x : out.data) x = std::tanh(x);
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.data.size(); ++i) {
        double y = n.value.data[i];
        g.data[i] *= 1.0 - y * y;
      }
      t.accum(a, g);
    });
  }

  Var relu(Var a) {
    Mat out = val(a);
    for (double& x : out.data) x = x > 0.0 ? x : 0.0;
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.data.size(); ++i)
        if (t.val(a).data[i] <= 0.0) g.data[i] = 0.0;
      t.accum(a, g);
    });
  }

  Var sqrt_(Var a) {
    Mat out = val(a);
    for (double& x : out.data) x = std::sqrt(x);
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.data.size(); ++i) {
        double y = n.value.data[i];
        g.data[i] *= y > 1e-30 ? 0.5 / y : 0.0;
      }
      t.accum(a, g);
    });
  }

  // ---- structure ----

  Var concat_cols(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    Mat out(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) out(i, j) = A(i, j);
      for (int j = 0; j < B.cols; ++j) out(i, A.cols + j) = B(i, j);
    }
    int ac = A.cols;
    return push(std::move(out), needs(a) || needs(b), [a, b, ac](Tape& t, Node& n) {
      if (t.needs(a)) {
        Mat g(n.grad.rows, ac);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < ac; ++j) g(i, j) = n.grad(i, j);
        t.accum(a, g);
      }
      if (t.needs(b)) {
        Mat g(n.grad.rows, n.grad.cols - ac);
        for (int i = 0; i < g.rows; ++i)
          for (int j = 0; j < g.cols; ++j) g(i, j) = n.grad(i, ac + j);
        t.accum(b, g);
      }
    });
  }

  Var slice_cols(Var a, int c0, int c1) {
    const Mat& A = val(a);
    Mat out(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i)
      for (int j = c0; j < c1; ++j) out(i, j - c0) = A(i, j);
    return push(std::move(out), needs(a), [a, c0](Tape& t, Node& n) {
      Mat g(t.val(a).rows, t.val(a).cols);
      for (int i = 0; i < n.grad.rows; ++i)
        for (int j = 0; j < n.grad.cols; ++j) g(i, c0 + j) = n.grad(i, j);
      t.accum(a, g);
    });
  }

  Var row(Var a, int i) {
    Mat out = val(a).row(i);
    return push(std::move(out), needs(a), [a, i](Tape& t, Node& n) {
      Mat g(t.val(a).rows, t.val(a).cols);
      for (int j = 0; j < n.grad.cols; ++j) g(i, j) = n.grad(0, j);
      t.accum(a, g);
    });
  }

  // Stack 1xC rows into an NxC matrix.
  Var concat_rows(const std::vector<Var>& rows) {
    int c = val(rows[0]).cols;
    Mat out(static_cast<int>(rows.size()), c);
    bool ng = false;
    for (size_t i = 0; i < rows.size(); ++i) {
      out.set_row(static_cast<int>(i), val(rows[i]));
      ng = ng || needs(rows[i]);
    }
    std::vector<Var> rs = rows;
    return push(std::move(out), ng, [rs](Tape& t, Node& n) {
      for (size_t i = 0; i < rs.size(); ++i)
        if (t.needs(rs[i])) t.accum(rs[i], n.grad.row(static_cast<int>(i)));
    });
  }

  // Broadcast-add a 1xC row to each row of an NxC matrix.
  Var add_row_broadcast(Var a, Var r) {
    const Mat& A = val(a);
    const Mat& R = val(r);
    Mat out = A;
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out(i, j) += R(0, j);
    return push(std::move(out), needs(a) || needs(r), [a, r](Tape& t, Node& n) {
      t.accum(a, n.grad);
      if (t.needs(r)) {
        Mat g(1, n.grad.cols);
        for (int i = 0; i < n.grad.rows; ++i)
          for (int j = 0; j < n.grad.cols; ++j) g(0, j) += n.grad(i, j);
        t.accum(r, g);
      }
    });
  }

  // Gather embedding rows by token id.
  Var gather_rows(Var table, const std::vector<int>& ids) {
    const Mat& T = val(table);
    Mat out(static_cast<int>(ids.size()), T.cols);
    for (size_t i = 0; i < ids.size(); ++i) out.set_row(static_cast<int>(i), T.row(ids[i]));
    std::vector<int> idv = ids;
    return push(std::move(out), needs(table), [table, idv](Tape& t, Node& n) {
      Mat g(t.val(table).rows, t.val(table).cols);
      for (size_t i = 0; i < idv.size(); ++i)
        for (int j = 0; j < n.grad.cols; ++j) g(idv[i], j) += n.grad(static_cast<int>(i), j);
      t.accum(table, g);
    });
  }

  // ---- reductions ----

  Var sum_rows(Var a) {  // NxC -> Nx1
    const Mat& A = val(a);
    Mat out(A.rows, 1);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) out(i, 0) += A(i, j);
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      Mat g(t.val(a).rows, t.val(a).cols);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < g.cols; ++j) g(i, j) = n.grad(i, 0);
      t.accum(a, g);
    });
  }

  Var sum_all(Var a) {  // -> 1x1
    double s = 0.0;
    for (double x : val(a).data) s += x;
    return push(Mat(1, 1, {s}), needs(a), [a](Tape& t, Node& n) {
      Mat g(t.val(a).rows, t.val(a).cols);
      for (double& x : g.data) x = n.grad(0, 0);
      t.accum(a, g);
    });
  }

  Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size())); }

  // ---- softmax / losses ----

  Var softmax_rows(Var a) {
    Mat out = val(a);
    for (int i = 0; i < out.rows; ++i) {
      double mx = out(i, 0);
      for (int j = 1; j < out.cols; ++j) mx = std::max(mx, out(i, j));
      double z = 0.0;
      for (int j = 0; j < out.cols; ++j) {
        out(i, j) = std::exp(out(i, j) - mx);
        z += out(i, j);
      }
      for (int j = 0; j < out.cols; ++j) out(i, j) /= z;
    }
    return push(std::move(out), needs(a), [a](Tape& t, Node& n) {
      Mat g = n.grad;
      for (int i = 0; i < g.rows; ++i) {
        double d = 0.0;
        for (int j = 0; j < g.cols; ++j) d += g(i, j) * n.value(i, j);
        for (int j = 0; j < g.cols; ++j) g(i, j) = (g(i, j) - d) * n.value(i, j);
      }
      t.accum(a, g);
    });
  }

  // Mean cross-entropy of rows of logits against target ids. Fused backward:
  // (softmax - onehot) / n.
  Var cross_entropy_rows(Var logits, const std::vector<int>& targets) {
    const Mat& L = val(logits);
    int n = L.rows;
    double loss = 0.0;
    Mat probs = L;
    for (int i = 0; i < n; ++i) {
      double mx = probs(i, 0);
      for (int j = 1; j < probs.cols; ++j) mx = std::max(mx, probs(i, j));
      double z = 0.0;
      for (int j = 0; j < probs.cols; ++j) z += std::exp(probs(i, j) - mx);
      double lse = mx + std::log(z);
      loss += lse - L(i, targets[i]);
      for (int j = 0; j < probs.cols; ++j) probs(i, j) = std::exp(probs(i, j) - mx) / z;
    }
    loss /= n;
    std::vector<int> tg = targets;
    Mat pc = std::move(probs);
    return push(Mat(1, 1, {loss}), needs(logits), [logits, tg, pc, n](Tape& t, Node& nd) {
      Mat g = pc;
      for (int i = 0; i < n; ++i) g(i, tg[i]) -= 1.0;
      double s = nd.grad(0, 0) / n;
      for (double& x : g.data) x *= s;
      t.accum(logits, g);
    });
  }

  // LayerNorm over each row, with gain/bias rows g,b (1xC).
  Var layernorm_rows(Var a, Var gain, Var bias, double eps = 1e-5) {
    const Mat& A = val(a);
    int C = A.cols;
    Mat out(A.rows, C);
    Mat norm(A.rows, C);   // cached normalized values
    Mat inv_sd(A.rows, 1);
    for (int i = 0; i < A.rows; ++i) {
      double mu = 0.0;
      for (int j = 0; j < C; ++j) mu += A(i, j);
      mu /= C;
      double var = 0.0;
      for (int j = 0; j < C; ++j) var += (A(i, j) - mu) * (A(i, j) - mu);
      var /= C;
      double is = 1.0 / std::sqrt(var + eps);
      inv_sd(i, 0) = is;
      for (int j = 0; j < C; ++j) {
        norm(i, j) = (A(i, j) - mu) * is;
        out(i, j) = norm(i, j) * val(gain)(0, j) + val(bias)(0, j);
      }
    }
    Mat nc = std::move(norm);
    Mat ic = std::move(inv_sd);
    bool ng = needs(a) || needs(gain) || needs(bias);
    return push(std::move(out), ng, [a, gain, bias, nc, ic](Tape& t, Node& n) {
      int C = nc.cols;
      if (t.needs(gain)) {
        Mat gg(1, C);
        for (int i = 0; i < nc.rows; ++i)
          for (int j = 0; j < C; ++j) gg(0, j) += n.grad(i, j) * nc(i, j);
        t.accum(gain, gg);
      }
      if (t.needs(bias)) {
        Mat gb(1, C);
        for (int i = 0; i < nc.rows; ++i)
          for (int j = 0; j < C; ++j) gb(0, j) += n.grad(i, j);
        t.accum(bias, gb);
      }
      if (t.needs(a)) {
        Mat gx(nc.rows, C);
        for (int i = 0; i < nc.rows; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < C; ++j) {
            double dy = n.grad(i, j) * t.val(gain)(0, j);
            m1 += dy;
            m2 += dy * nc(i, j);
          }
          m1 /= C;
          m2 /= C;
          for (int j = 0; j < C; ++j) {
            double dy = n.grad(i, j) * t.val(gain)(0, j);
            gx(i, j) = (dy - m1 - nc(i, j) * m2) * ic(i, 0);
          }
        }
        t.accum(a, gx);
      }
    });
  }

  // Solve S X = B for symmetric positive (semi-)definite S. Pivots below a
  // relative cutoff are treated as exactly rank-deficient and the corresponding
  // solution components are zeroed, which yields the minimum-norm solution for
  // factor-aligned null spaces (the lambda = 0 corner; lambda > 0 never
  // triggers it).
  Var spd_solve(Var s, Var b) {
    Mat L = cholesky(val(s));
    Mat X = chol_solve(L, val(b));
    Mat Lc = L;
    return push(std::move(X), needs(s) || needs(b), [s, b, Lc](Tape& t, Node& n) {
      Mat gb = chol_solve(Lc, n.grad);  // S^-1 gbar (S symmetric)
      if (t.needs(b)) t.accum(b, gb);
      if (t.needs(s)) {
        Mat gs = memr::matmul(gb, n.value.transposed());
        for (double& x : gs.data) x = -x;
        t.accum(s, gs);
      }
    });
  }

  // ---- backward ----

  void backward(Var loss_node) {
    Node& last = nodes_[loss_node];
    last.grad = Mat(last.value.rows, last.value.cols);
    for (double& x : last.grad.data) x = 1.0;
    for (int i = loss_node; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, n);
    }
  }

  bool needs(Var v) const { return nodes_[v].needs_grad; }

  void accum(Var v, const Mat& g) {
    if (!nodes_[v].needs_grad) return;
    Node& n = nodes_[v];
    if (n.grad.empty()) n.grad = Mat(n.value.rows, n.value.cols);
    for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
  }

  void accum_scaled(Var v, const Mat& g, double s) {
    if (!nodes_[v].needs_grad) return;
    Node& n = nodes_[v];
    if (n.grad.empty()) n.grad = Mat(n.value.rows, n.value.cols);
    for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += s * g.data[i];
  }

  // Cholesky with rank-deficiency skip. Returns lower triangular L with
  // L(j,j) = 0 marking dead pivots.
  static Mat cholesky(const Mat& S) {
    int n = S.rows;
    Mat L(n, n);
    double max_diag = 0.0;
    for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(S(i, i)));
    double cutoff = max_diag * 1e-13;
    for (int j = 0; j < n; ++j) {
      double d = S(j, j);
      for (int k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
      if (d <= cutoff) {
        L(j, j) = 0.0;  // dead pivot
        continue;
      }
      double lj = std::sqrt(d);
      L(j, j) = lj;
      for (int i = j + 1; i < n; ++i) {
        double v = S(i, j);
        for (int k = 0; k < j; ++k) v -= L(i, k) * L(j, k);
        L(i, j) = v / lj;
      }
    }
    return L;
  }

  static Mat chol_solve(const Mat& L, const Mat& B) {
    int n = L.rows;
    int k = B.cols;
    Mat Y(n, k);
    for (int i = 0; i < n; ++i) {
      if (L(i, i) == 0.0) continue;  // dead pivot -> component 0
      for (int c = 0; c < k; ++c) {
        double v = B(i, c);
        for (int j = 0; j < i; ++j) v -= L(i, j) * Y(j, c);
        Y(i, c) = v / L(i, i);
      }
    }
    Mat X(n, k);
    for (int i = n - 1; i >= 0; --i) {
      if (L(i, i) == 0.0) continue;
      for (int c = 0; c < k; ++c) {
        double v = Y(i, c);
        for (int j = i + 1; j < n; ++j) v -= L(j, i) * X(j, c);
        X(i, c) = v / L(i, i);
      }
    }
    return X;
  }

 private:
  Var push(Mat value, bool needs_grad, std::function<void(Tape&, Node&)> bw) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

using Var = Tape::Var;

}  // namespace memr
