#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace igmn {

// Dense row-major matrix of doubles. Row and column vectors are 1xN / Nx1.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> d;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), d(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return d[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return d[static_cast<std::size_t>(r) * cols + c];
  }

  int size() const { return rows * cols; }
  bool empty() const { return d.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(d.begin(), d.end(), v); }

  Matrix row(int r) const {
    Matrix out(1, cols);
    for (int c = 0; c < cols; ++c) out(0, c) = (*this)(r, c);
    return out;
  }
  void set_row(int r, const Matrix& v) {
    assert(v.rows == 1 && v.cols == cols);
    for (int c = 0; c < cols; ++c) (*this)(r, c) = v(0, c);
  }

  static Matrix row_vector(std::vector<double> v) {
    Matrix m;
    m.rows = 1;
    m.cols = static_cast<int>(v.size());
    m.d = std::move(v);
    return m;
  }
};

inline bool operator==(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.d == b.d;
}

// C = op(A) * op(B) with optional transposes; plain triple loop, sized for
// desk-scale graphs where every operand is tiny.
inline Matrix matmul(const Matrix& a, bool ta, const Matrix& b, bool tb) {
  const int m = ta ? a.cols : a.rows;
  const int k = ta ? a.rows : a.cols;
  const int k2 = tb ? b.cols : b.rows;
  const int n = tb ? b.rows : b.cols;
  assert(k == k2);
  (void)k2;
  Matrix c(m, n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = ta ? a(p, i) : a(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) c(i, j) += av * (tb ? b(j, p) : b(p, j));
    }
  return c;
}

}  // namespace igmn
