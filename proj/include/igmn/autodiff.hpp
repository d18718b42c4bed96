#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "igmn/matrix.hpp"

namespace igmn::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Matrix values. One tape per forward pass; nodes are
// created in topological order, so backward() is a single reverse sweep.
// Every op is deterministic with a fixed accumulation order.
class Tape {
 public:
  Var input(Matrix v) { return push_var(std::move(v), {}); }

  Var zeros(int rows, int cols) { return input(Matrix(rows, cols)); }

  const Matrix& val(Var x) const { return nodes_[check(x)].v; }

  // Gradient of the last backward() target w.r.t. x (zeros if x is off-path).
  Matrix grad(Var x) const {
    const Node& n = nodes_[check(x)];
    if (n.g.empty()) return Matrix(n.v.rows, n.v.cols);
    return n.g;
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- arithmetic ----

  Var add(Var a, Var b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    require(A.same_shape(B), "add: shape mismatch");
    Matrix out = A;
    for (int i = 0; i < out.size(); ++i) out.d[i] += B.d[i];
    return push_var(std::move(out), [a, b](Tape& t, const Matrix& g) {
      t.accum(a, g);
      t.accum(b, g);
    });
  }

  Var sub(Var a, Var b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    require(A.same_shape(B), "sub: shape mismatch");
    Matrix out = A;
    for (int i = 0; i < out.size(); ++i) out.d[i] -= B.d[i];
    return push_var(std::move(out), [a, b](Tape& t, const Matrix& g) {
      t.accum(a, g);
      Matrix neg = g;
      for (double& x : neg.d) x = -x;
      t.accum(b, neg);
    });
  }

  Var mul(Var a, Var b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    require(A.same_shape(B), "mul: shape mismatch");
    Matrix out = A;
    for (int i = 0; i < out.size(); ++i) out.d[i] *= B.d[i];
    return push_var(std::move(out), [a, b](Tape& t, const Matrix& g) {
      Matrix ga = g, gb = g;
      const Matrix& A2 = t.val(a);
      const Matrix& B2 = t.val(b);
      for (int i = 0; i < g.size(); ++i) {
        ga.d[i] *= B2.d[i];
        gb.d[i] *= A2.d[i];
      }
      t.accum(a, ga);
      t.accum(b, gb);
    });
  }

  Var scale(Var a, double s) {
    Matrix out = val(a);
    for (double& x : out.d) x *= s;
    return push_var(std::move(out), [a, s](Tape& t, const Matrix& g) {
      Matrix ga = g;
      for (double& x : ga.d) x *= s;
      t.accum(a, ga);
    });
  }

  Var add_const(Var a, Matrix c) {
    const Matrix& A = val(a);
    require(A.same_shape(c), "add_const: shape mismatch");
    Matrix out = A;
    for (int i = 0; i < out.size(); ++i) out.d[i] += c.d[i];
    return push_var(std::move(out), [a](Tape& t, const Matrix& g) { t.accum(a, g); });
  }

  Var mul_const(Var a, Matrix c) {
    const Matrix& A = val(a);
    require(A.same_shape(c), "mul_const: shape mismatch");
    Matrix out = A;
    for (int i = 0; i < out.size(); ++i) out.d[i] *= c.d[i];
    return push_var(std::move(out), [a, c](Tape& t, const Matrix& g) {
      Matrix ga = g;
      for (int i = 0; i < g.size(); ++i) ga.d[i] *= c.d[i];
      t.accum(a, ga);
    });
  }

  // Broadcast-add a 1 x C bias to every row of an N x C matrix.
  Var add_bias(Var a, Var bias) {
    const Matrix& A = val(a);
    const Matrix& B = val(bias);
    require(B.rows == 1 && B.cols == A.cols, "add_bias: bias must be 1 x cols");
    Matrix out = A;
    for (int r = 0; r < A.rows; ++r)
      for (int c = 0; c < A.cols; ++c) out(r, c) += B(0, c);
    return push_var(std::move(out), [a, bias](Tape& t, const Matrix& g) {
      t.accum(a, g);
      Matrix gb(1, g.cols);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) gb(0, c) += g(r, c);
      t.accum(bias, gb);
    });
  }

  // ---- matrix products ----

  Var matmul(Var a, Var b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    require(A.cols == B.rows, "matmul: inner dims differ");
    return push_var(igmn::matmul(A, false, B, false), [a, b](Tape& t, const Matrix& g) {
      t.accum(a, igmn::matmul(g, false, t.val(b), true));
      t.accum(b, igmn::matmul(t.val(a), true, g, false));
    });
  }

  // A * B^T
  Var matmul_nt(Var a, Var b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    require(A.cols == B.cols, "matmul_nt: inner dims differ");
    return push_var(igmn::matmul(A, false, B, true), [a, b](Tape& t, const Matrix& g) {
      t.accum(a, igmn::matmul(g, false, t.val(b), false));
      t.accum(b, igmn::matmul(g, true, t.val(a), false));
    });
  }

  // A^T * B
  Var matmul_tn(Var a, Var b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    require(A.rows == B.rows, "matmul_tn: inner dims differ");
    return push_var(igmn::matmul(A, true, B, false), [a, b](Tape& t, const Matrix& g) {
      t.accum(a, igmn::matmul(t.val(b), false, g, true));
      t.accum(b, igmn::matmul(t.val(a), false, g, false));
    });
  }

  // ---- pointwise nonlinearities ----

  Var relu(Var a) {
    Matrix out = val(a);
    for (double& x : out.d) x = x > 0.0 ? x : 0.0;
    return push_var(std::move(out), [a](Tape& t, const Matrix& g) {
      Matrix ga = g;
      const Matrix& A = t.val(a);
      for (int i = 0; i < g.size(); ++i)
        if (A.d[i] <= 0.0) ga.d[i] = 0.0;
      t.accum(a, ga);
    });
  }

  Var sigmoid(Var a) {
    Matrix out = val(a);
    for (double& x : out.d) x = 1.0 / (1.0 + std::exp(-x));
    const int id = push(std::move(out), {});
    nodes_[id].back = [a, id](Tape& t, const Matrix& g) {
      Matrix ga = g;
      const Matrix& s = t.nodes_[id].v;
      for (int i = 0; i < g.size(); ++i) ga.d[i] *= s.d[i] * (1.0 - s.d[i]);
      t.accum(a, ga);
    };
    return {id};
  }

  Var log(Var a) {
    Matrix out = val(a);
    for (double& x : out.d) x = std::log(x);
    return push_var(std::move(out), [a](Tape& t, const Matrix& g) {
      Matrix ga = g;
      const Matrix& A = t.val(a);
      for (int i = 0; i < g.size(); ++i) ga.d[i] /= A.d[i];
      t.accum(a, ga);
    });
  }

  Var clamp(Var a, double lo, double hi) {
    Matrix out = val(a);
    for (double& x : out.d) x = std::min(hi, std::max(lo, x));
    return push_var(std::move(out), [a, lo, hi](Tape& t, const Matrix& g) {
      Matrix ga = g;
      const Matrix& A = t.val(a);
      for (int i = 0; i < g.size(); ++i)
        if (A.d[i] <= lo || A.d[i] >= hi) ga.d[i] = 0.0;
      t.accum(a, ga);
    });
  }

  // ---- row-wise structured ops ----

  // Softmax along each row; columns with key_mask == 0 get exactly zero
  // weight. Rows must keep at least one unmasked column (callers skip
  // attention entirely when every key is masked).
  Var softmax_rows(Var a, const std::vector<std::uint8_t>* key_mask = nullptr) {
    const Matrix& A = val(a);
    if (key_mask) {
      require(static_cast<int>(key_mask->size()) == A.cols, "softmax_rows: mask size mismatch");
      bool any = false;
      for (auto m : *key_mask) any = any || m;
      require(any, "softmax_rows: all keys masked");
    }
    Matrix out(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < A.cols; ++c)
        if (!key_mask || (*key_mask)[c]) mx = std::max(mx, A(r, c));
      double z = 0.0;
      for (int c = 0; c < A.cols; ++c)
        if (!key_mask || (*key_mask)[c]) z += std::exp(A(r, c) - mx);
      for (int c = 0; c < A.cols; ++c)
        out(r, c) = (!key_mask || (*key_mask)[c]) ? std::exp(A(r, c) - mx) / z : 0.0;
    }
    std::vector<std::uint8_t> mask = key_mask ? *key_mask : std::vector<std::uint8_t>();
    const int id = push(std::move(out), {});
    nodes_[id].back = [a, id, mask](Tape& t, const Matrix& g) {
      const Matrix& w = t.nodes_[id].v;
      Matrix ga(g.rows, g.cols);
      for (int r = 0; r < g.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < g.cols; ++c) dot += w(r, c) * g(r, c);
        for (int c = 0; c < g.cols; ++c) {
          if (!mask.empty() && !mask[c]) continue;
          ga(r, c) = w(r, c) * (g(r, c) - dot);
        }
      }
      t.accum(a, ga);
    };
    return {id};
  }

  Var log_softmax_rows(Var a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < A.cols; ++c) mx = std::max(mx, A(r, c));
      double z = 0.0;
      for (int c = 0; c < A.cols; ++c) z += std::exp(A(r, c) - mx);
      const double lz = std::log(z) + mx;
      for (int c = 0; c < A.cols; ++c) out(r, c) = A(r, c) - lz;
    }
    const int id = push(std::move(out), {});
    nodes_[id].back = [a, id](Tape& t, const Matrix& g) {
      const Matrix& ls = t.nodes_[id].v;
      Matrix ga(g.rows, g.cols);
      for (int r = 0; r < g.rows; ++r) {
        double gsum = 0.0;
        for (int c = 0; c < g.cols; ++c) gsum += g(r, c);
        for (int c = 0; c < g.cols; ++c) ga(r, c) = g(r, c) - std::exp(ls(r, c)) * gsum;
      }
      t.accum(a, ga);
    };
    return {id};
  }

  // Per-row standardization over channels: (x - mean) / sqrt(max(var, eps0)).
  // No learnable affine, so normalizing twice is a fixed point.
  Var layer_norm_rows(Var a) {
    constexpr double kVarFloor = 1e-12;
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    std::vector<double> inv_std(A.rows);
    std::vector<std::uint8_t> floored(A.rows);
    for (int r = 0; r < A.rows; ++r) {
      double mu = 0.0;
      for (int c = 0; c < A.cols; ++c) mu += A(r, c);
      mu /= A.cols;
      double var = 0.0;
      for (int c = 0; c < A.cols; ++c) var += (A(r, c) - mu) * (A(r, c) - mu);
      var /= A.cols;
      floored[r] = var < kVarFloor;
      const double s = std::sqrt(std::max(var, kVarFloor));
      inv_std[r] = 1.0 / s;
      for (int c = 0; c < A.cols; ++c) out(r, c) = (A(r, c) - mu) * inv_std[r];
    }
    const int id = push(std::move(out), {});
    nodes_[id].back = [a, id, inv_std, floored](Tape& t, const Matrix& g) {
      const Matrix& y = t.nodes_[id].v;
      Matrix ga(g.rows, g.cols);
      for (int r = 0; r < g.rows; ++r) {
        double gmean = 0.0, gy = 0.0;
        for (int c = 0; c < g.cols; ++c) {
          gmean += g(r, c);
          gy += g(r, c) * y(r, c);
        }
        gmean /= g.cols;
        gy /= g.cols;
        for (int c = 0; c < g.cols; ++c) {
          double v = g(r, c) - gmean;
          if (!floored[r]) v -= y(r, c) * gy;
          ga(r, c) = v * inv_std[r];
        }
      }
      t.accum(a, ga);
    };
    return {id};
  }

  // ---- shape ops ----

  Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    const int rows = val(parts[0]).rows;
    int cols = 0;
    for (Var p : parts) {
      require(val(p).rows == rows, "concat_cols: row mismatch");
      cols += val(p).cols;
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Var p : parts) {
      const Matrix& P = val(p);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < P.cols; ++c) out(r, off + c) = P(r, c);
      off += P.cols;
    }
    return push_var(std::move(out), [parts](Tape& t, const Matrix& g) {
      int off2 = 0;
      for (Var p : parts) {
        const Matrix& P = t.val(p);
        Matrix gp(P.rows, P.cols);
        for (int r = 0; r < P.rows; ++r)
          for (int c = 0; c < P.cols; ++c) gp(r, c) = g(r, off2 + c);
        t.accum(p, gp);
        off2 += P.cols;
      }
    });
  }

  Var vstack(const std::vector<Var>& parts) {
    require(!parts.empty(), "vstack: empty");
    const int cols = val(parts[0]).cols;
    int rows = 0;
    for (Var p : parts) {
      require(val(p).cols == cols, "vstack: col mismatch");
      rows += val(p).rows;
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Var p : parts) {
      const Matrix& P = val(p);
      for (int r = 0; r < P.rows; ++r)
        for (int c = 0; c < cols; ++c) out(off + r, c) = P(r, c);
      off += P.rows;
    }
    return push_var(std::move(out), [parts](Tape& t, const Matrix& g) {
      int off2 = 0;
      for (Var p : parts) {
        const Matrix& P = t.val(p);
        Matrix gp(P.rows, P.cols);
        for (int r = 0; r < P.rows; ++r)
          for (int c = 0; c < P.cols; ++c) gp(r, c) = g(off2 + r, c);
        t.accum(p, gp);
        off2 += P.rows;
      }
    });
  }

  // Rows re-indexed by `idx`; duplicates allowed, backward scatter-adds.
  Var gather_rows(Var a, std::vector<int> idx) {
    const Matrix& A = val(a);
    Matrix out(static_cast<int>(idx.size()), A.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      require(idx[r] >= 0 && idx[r] < A.rows, "gather_rows: index out of range");
      for (int c = 0; c < A.cols; ++c) out(static_cast<int>(r), c) = A(idx[r], c);
    }
    return push_var(std::move(out), [a, idx](Tape& t, const Matrix& g) {
      const Matrix& A2 = t.val(a);
      Matrix ga(A2.rows, A2.cols);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < g.cols; ++c) ga(idx[r], c) += g(static_cast<int>(r), c);
      t.accum(a, ga);
    });
  }

  Var gather_cols(Var a, std::vector<int> idx) {
    const Matrix& A = val(a);
    Matrix out(A.rows, static_cast<int>(idx.size()));
    for (int r = 0; r < A.rows; ++r)
      for (std::size_t c = 0; c < idx.size(); ++c) {
        require(idx[c] >= 0 && idx[c] < A.cols, "gather_cols: index out of range");
        out(r, static_cast<int>(c)) = A(r, idx[c]);
      }
    return push_var(std::move(out), [a, idx](Tape& t, const Matrix& g) {
      const Matrix& A2 = t.val(a);
      Matrix ga(A2.rows, A2.cols);
      for (int r = 0; r < g.rows; ++r)
        for (std::size_t c = 0; c < idx.size(); ++c) ga(r, idx[c]) += g(r, static_cast<int>(c));
      t.accum(a, ga);
    });
  }

  Var row(Var a, int r) { return gather_rows(a, {r}); }

  // ---- reductions ----

  Var sum_all(Var a) {
    const Matrix& A = val(a);
    double s = 0.0;
    for (double x : A.d) s += x;
    Matrix out(1, 1);
    out(0, 0) = s;
    return push_var(std::move(out), [a](Tape& t, const Matrix& g) {
      const Matrix& A2 = t.val(a);
      Matrix ga(A2.rows, A2.cols, g(0, 0));
      t.accum(a, ga);
    });
  }

  Var mean_all(Var a) { return scale(sum_all(a), 1.0 / val(a).size()); }

  // N x C -> N x 1 row sums.
  Var sum_cols(Var a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, 1);
    for (int r = 0; r < A.rows; ++r)
      for (int c = 0; c < A.cols; ++c) out(r, 0) += A(r, c);
    return push_var(std::move(out), [a](Tape& t, const Matrix& g) {
      const Matrix& A2 = t.val(a);
      Matrix ga(A2.rows, A2.cols);
      for (int r = 0; r < A2.rows; ++r)
        for (int c = 0; c < A2.cols; ++c) ga(r, c) = g(r, 0);
      t.accum(a, ga);
    });
  }

  // Per-column max over rows (spatial max pooling); ties route the gradient
  // to the first maximal row for determinism.
  Var colmax(Var a) {
    const Matrix& A = val(a);
    require(A.rows >= 1, "colmax: empty");
    Matrix out(1, A.cols);
    std::vector<int> arg(A.cols, 0);
    for (int c = 0; c < A.cols; ++c) {
      double best = A(0, c);
      for (int r = 1; r < A.rows; ++r)
        if (A(r, c) > best) {
          best = A(r, c);
          arg[c] = r;
        }
      out(0, c) = best;
    }
    return push_var(std::move(out), [a, arg](Tape& t, const Matrix& g) {
      const Matrix& A2 = t.val(a);
      Matrix ga(A2.rows, A2.cols);
      for (int c = 0; c < A2.cols; ++c) ga(arg[c], c) += g(0, c);
      t.accum(a, ga);
    });
  }

  // ---- fitting it together ----

  // x * W + broadcast bias; W is (in x out).
  Var linear(Var x, Var w, Var bias) { return add_bias(matmul(x, w), bias); }

  void backward(Var target) {
    const Node& tn = nodes_[check(target)];
    require(tn.v.rows == 1 && tn.v.cols == 1, "backward: target must be scalar");
    for (Node& n : nodes_) n.g = Matrix();
    Matrix seed(1, 1);
    seed(0, 0) = 1.0;
    nodes_[target.id].g = seed;
    for (int i = target.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.g.empty() || !n.back) continue;
      n.back(*this, n.g);
    }
  }

 private:
  struct Node {
    Matrix v;
    Matrix g;
    std::function<void(Tape&, const Matrix&)> back;
  };

  int check(Var x) const {
    require(x.valid() && x.id < static_cast<int>(nodes_.size()), "invalid Var");
    return x.id;
  }

  static void require(bool ok, const char* msg) {
    if (!ok) throw std::logic_error(std::string("autodiff: ") + msg);
  }

  int push(Matrix v, std::function<void(Tape&, const Matrix&)> back) {
    nodes_.push_back(Node{std::move(v), Matrix(), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  Var push_var(Matrix v, std::function<void(Tape&, const Matrix&)> back) {
    return {push(std::move(v), std::move(back))};
  }

  void accum(Var x, const Matrix& g) {
    Node& n = nodes_[check(x)];
    if (n.g.empty()) n.g = Matrix(n.v.rows, n.v.cols);
    assert(n.g.same_shape(g));
    for (int i = 0; i < g.size(); ++i) n.g.d[i] += g.d[i];
  }

  std::vector<Node> nodes_;
};

}  // namespace igmn::ad
