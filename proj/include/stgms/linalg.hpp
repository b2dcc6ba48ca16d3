#pragma once

// Dense and sparse kernels used by the solver stack.  Everything here is
// self-contained: banded LU with partial pivoting behind the sparse solve,
// Householder tridiagonalization + QL for symmetric eigenproblems, and a
// one-sided Jacobi SVD.  Problem sizes stay in the low thousands, so the
// classical unblocked algorithms are adequate and keep the kit dependency-free.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace stgms {

using std::size_t;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

//! Compressed row storage.  Built through SparseBuilder so duplicate
//! insertions sum deterministically.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr;  // size rows+1
  std::vector<int> col_idx;
  std::vector<double> vals;

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[col_idx[k]];
      y[i] = s;
    }
    return y;
  }

  void apply_to(const std::vector<double>& x, std::vector<double>& y) const {
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[col_idx[k]];
      y[i] = s;
    }
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : vals) m = std::max(m, std::abs(v));
    return m;
  }

  //! max_i sum_j |a_ij|, the natural scale for residual checks.
  double norm_inf_operator() const {
    double m = 0.0;
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += std::abs(vals[k]);
      m = std::max(m, s);
    }
    return m;
  }
};

class SparseBuilder {
 public:
  SparseBuilder(int rows, int cols) : rows_(rows), cols_(cols) {}

  void add(int i, int j, double v) {
    if (v == 0.0) return;
    entries_.push_back({i, j, v});
  }

  SparseMatrix build() {
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    SparseMatrix m;
    m.rows = rows_;
    m.cols = cols_;
    m.row_ptr.assign(static_cast<size_t>(rows_) + 1, 0);
    size_t k = 0;
    while (k < entries_.size()) {
      size_t k2 = k;
      double s = 0.0;
      while (k2 < entries_.size() && entries_[k2].i == entries_[k].i && entries_[k2].j == entries_[k].j) {
        s += entries_[k2].v;
        ++k2;
      }
      m.col_idx.push_back(entries_[k].j);
      m.vals.push_back(s);
      m.row_ptr[static_cast<size_t>(entries_[k].i) + 1]++;
      k = k2;
    }
    for (int i = 0; i < rows_; ++i) m.row_ptr[static_cast<size_t>(i) + 1] += m.row_ptr[i];
    return m;
  }

 private:
  struct Entry {
    int i, j;
    double v;
  };
  int rows_, cols_;
  std::vector<Entry> entries_;
};

//! LU factorization of a band matrix with partial pivoting (row swaps widen
//! the stored upper band by kl, as in the LAPACK band layout).  Rows and
//! columns outside the band are treated as zero, so callers should order
//! unknowns to keep the profile tight.
class BandFactor {
 public:
  BandFactor() = default;

  //! Factor a CSR matrix.  Bandwidths are read off the sparsity pattern.
  explicit BandFactor(const SparseMatrix& a) {
    if (a.rows != a.cols) throw std::invalid_argument("BandFactor: matrix must be square");
    n_ = a.rows;
    kl_ = 0;
    ku_ = 0;
    for (int i = 0; i < n_; ++i)
      for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) {
        int j = a.col_idx[k];
        kl_ = std::max(kl_, i - j);
        ku_ = std::max(ku_, j - i);
      }
    allocate();
    for (int i = 0; i < n_; ++i)
      for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) at(i, a.col_idx[k]) = a.vals[k];
    factor();
  }

  int size() const { return n_; }
  int lower_bandwidth() const { return kl_; }

  void solve_in_place(std::vector<double>& b) const {
    if (static_cast<int>(b.size()) != n_) throw std::invalid_argument("BandFactor: rhs size mismatch");
    // forward: apply the recorded swaps and the unit lower factor
    for (int j = 0; j < n_ - 1; ++j) {
      int p = ipiv_[j];
      if (p != j) std::swap(b[j], b[p]);
      int imax = std::min(n_ - 1, j + kl_);
      const double bj = b[j];
      if (bj != 0.0)
        for (int i = j + 1; i <= imax; ++i) b[i] -= mult(i, j) * bj;
    }
    // back substitution with U (bandwidth kl+ku after pivoting)
    int kw = kl_ + ku_;
    for (int i = n_ - 1; i >= 0; --i) {
      double s = b[i];
      int jmax = std::min(n_ - 1, i + kw);
      for (int j = i + 1; j <= jmax; ++j) s -= atc(i, j) * b[j];
      b[i] = s / atc(i, i);
    }
  }

  std::vector<double> solve(std::vector<double> b) const {
    solve_in_place(b);
    return b;
  }

 private:
  int n_ = 0, kl_ = 0, ku_ = 0, ldab_ = 0;
  std::vector<double> ab_;   // band storage, column-major: entry (i,j) at ab_[j*ldab_ + kl_+ku_ + i-j]
  std::vector<int> ipiv_;

  void allocate() {
    ldab_ = 2 * kl_ + ku_ + 1;
    ab_.assign(static_cast<size_t>(ldab_) * n_, 0.0);
    ipiv_.assign(n_, 0);
  }

  double& at(int i, int j) { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }
  double atc(int i, int j) const { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }
  // multipliers are stored below the diagonal in the same layout
  double mult(int i, int j) const { return atc(i, j); }

  void factor() {
    int kw = kl_ + ku_;
    for (int j = 0; j < n_; ++j) {
      int imax = std::min(n_ - 1, j + kl_);
      int p = j;
      double best = std::abs(atc(j, j));
      for (int i = j + 1; i <= imax; ++i) {
        double v = std::abs(atc(i, j));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      ipiv_[j] = p;
      if (best == 0.0) throw std::runtime_error("BandFactor: singular matrix at column " + std::to_string(j));
      if (p != j) {
        int jend = std::min(n_ - 1, j + kw);
        for (int c = j; c <= jend; ++c) std::swap(at(j, c), at(p, c));
      }
      const double piv = atc(j, j);
      int jend = std::min(n_ - 1, j + kw);
      for (int i = j + 1; i <= imax; ++i) {
        double m = atc(i, j) / piv;
        at(i, j) = m;
        if (m != 0.0)
          for (int c = j + 1; c <= jend; ++c) at(i, c) -= m * atc(j, c);
      }
    }
  }
};

//! Direct sparse solve with one step of iterative refinement.  The residual
//! contract is ||Ax-b|| <= 1e-12 * (||A|| ||x|| + ||b||) in the inf norms.
inline std::vector<double> sparse_solve(const SparseMatrix& a, const std::vector<double>& b) {
  if (a.rows != a.cols) throw std::invalid_argument("sparse_solve: matrix must be square");
  if (static_cast<int>(b.size()) != a.rows) throw std::invalid_argument("sparse_solve: rhs size mismatch");
  BandFactor f(a);
  std::vector<double> x = f.solve(b);
  std::vector<double> r(b.size());
  a.apply_to(x, r);
  for (size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  std::vector<double> dx = f.solve(r);
  axpy(1.0, dx, x);
  a.apply_to(x, r);
  double res = 0.0;
  for (size_t i = 0; i < r.size(); ++i) res = std::max(res, std::abs(b[i] - r[i]));
  double scale = a.norm_inf_operator() * norm_inf(x) + norm_inf(b);
  if (res > 1e-12 * std::max(scale, 1e-300))
    throw std::runtime_error("sparse_solve: residual " + std::to_string(res) + " exceeds tolerance");
  return x;
}

//! Band factorization of a symmetrically permuted matrix, for reuse across
//! many right-hand sides.  perm[new] = old; callers pass an order that keeps
//! the band of P A P^T tight.  solve() applies one refinement step and
//! enforces the same residual contract as sparse_solve.
class PermutedBandFactor {
 public:
  PermutedBandFactor() = default;

  PermutedBandFactor(const SparseMatrix& a, std::vector<int> perm) : perm_(std::move(perm)) {
    if (a.rows != a.cols) throw std::invalid_argument("PermutedBandFactor: matrix must be square");
    if (static_cast<int>(perm_.size()) != a.rows)
      throw std::invalid_argument("PermutedBandFactor: permutation size mismatch");
    inv_.assign(perm_.size(), -1);
    for (size_t k = 0; k < perm_.size(); ++k) {
      int old = perm_[k];
      if (old < 0 || old >= a.rows || inv_[old] != -1)
        throw std::invalid_argument("PermutedBandFactor: invalid permutation");
      inv_[old] = static_cast<int>(k);
    }
    SparseBuilder builder(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i)
      for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
        builder.add(inv_[i], inv_[a.col_idx[k]], a.vals[k]);
    pa_ = builder.build();
    factor_ = BandFactor(pa_);
    anorm_ = pa_.norm_inf_operator();
  }

  int size() const { return factor_.size(); }
  int lower_bandwidth() const { return factor_.lower_bandwidth(); }

  std::vector<double> solve(const std::vector<double>& b) const {
    if (b.size() != perm_.size()) throw std::invalid_argument("PermutedBandFactor: rhs size mismatch");
    std::vector<double> pb(b.size());
    for (size_t k = 0; k < perm_.size(); ++k) pb[k] = b[static_cast<size_t>(perm_[k])];
    std::vector<double> px = factor_.solve(pb);
    std::vector<double> r(pb.size());
    pa_.apply_to(px, r);
    for (size_t i = 0; i < r.size(); ++i) r[i] = pb[i] - r[i];
    factor_.solve_in_place(r);
    axpy(1.0, r, px);
    pa_.apply_to(px, r);
    double res = 0.0;
    for (size_t i = 0; i < r.size(); ++i) res = std::max(res, std::abs(pb[i] - r[i]));
    double scale = anorm_ * norm_inf(px) + norm_inf(pb);
    if (res > 1e-12 * std::max(scale, 1e-300))
      throw std::runtime_error("PermutedBandFactor: residual " + std::to_string(res) + " exceeds tolerance");
    std::vector<double> x(px.size());
    for (size_t k = 0; k < perm_.size(); ++k) x[static_cast<size_t>(perm_[k])] = px[k];
    return x;
  }

 private:
  std::vector<int> perm_, inv_;
  SparseMatrix pa_;
  BandFactor factor_;
  double anorm_ = 0.0;
};

//! Row-major dense matrix, sized for coarse systems and spectral work.
struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  DenseMatrix() = default;
  DenseMatrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  double max_abs() const {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
  }

  DenseMatrix transposed() const {
    DenseMatrix t(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t(j, i) = (*this)(i, j);
    return t;
  }
};

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  DenseMatrix c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.a[static_cast<size_t>(k) * b.cols];
      double* crow = &c.a[static_cast<size_t>(i) * c.cols];
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  return c;
}

//! Dense LU with partial pivoting; used for coarse systems (dim <= a few
//! thousand) where fill makes band storage pointless.
class DenseFactor {
 public:
  explicit DenseFactor(DenseMatrix m) : lu_(std::move(m)) {
    if (lu_.rows != lu_.cols) throw std::invalid_argument("DenseFactor: matrix must be square");
    n_ = lu_.rows;
    piv_.resize(n_);
    for (int j = 0; j < n_; ++j) {
      int p = j;
      double best = std::abs(lu_(j, j));
      for (int i = j + 1; i < n_; ++i)
        if (std::abs(lu_(i, j)) > best) {
          best = std::abs(lu_(i, j));
          p = i;
        }
      piv_[j] = p;
      if (best == 0.0) throw std::runtime_error("DenseFactor: singular matrix at column " + std::to_string(j));
      if (p != j)
        for (int c = 0; c < n_; ++c) std::swap(lu_(j, c), lu_(p, c));
      double inv = 1.0 / lu_(j, j);
      for (int i = j + 1; i < n_; ++i) {
        double m = lu_(i, j) * inv;
        lu_(i, j) = m;
        if (m != 0.0) {
          const double* rj = &lu_.a[static_cast<size_t>(j) * n_];
          double* ri = &lu_.a[static_cast<size_t>(i) * n_];
          for (int c = j + 1; c < n_; ++c) ri[c] -= m * rj[c];
        }
      }
    }
  }

  void solve_in_place(std::vector<double>& b) const {
    // all swaps first: the factorization swaps whole rows, so the stored
    // multiplier columns match the fully pivoted order, not the step order
    for (int j = 0; j < n_; ++j)
      if (piv_[j] != j) std::swap(b[j], b[piv_[j]]);
    for (int j = 0; j < n_; ++j) {
      double bj = b[j];
      if (bj != 0.0)
        for (int i = j + 1; i < n_; ++i) b[i] -= lu_(i, j) * bj;
    }
    for (int i = n_ - 1; i >= 0; --i) {
      double s = b[i];
      for (int j = i + 1; j < n_; ++j) s -= lu_(i, j) * b[j];
      b[i] = s / lu_(i, i);
    }
  }

  std::vector<double> solve(std::vector<double> b) const {
    solve_in_place(b);
    return b;
  }

 private:
  DenseMatrix lu_;
  std::vector<int> piv_;
  int n_ = 0;
};

struct SymEigResult {
  std::vector<double> values;  // ascending
  DenseMatrix vectors;         // column k is the eigenvector for values[k]
};

namespace detail {

// Householder reduction to tridiagonal form with accumulated transform.
inline void tridiagonalize(DenseMatrix& z, std::vector<double>& d, std::vector<double>& e) {
  int n = z.rows;
  d.assign(n, 0.0);
  e.assign(n, 0.0);
  for (int i = n - 1; i >= 1; --i) {
    int l = i - 1;
    double h = 0.0, scale = 0.0;
    if (l > 0) {
      for (int k = 0; k <= l; ++k) scale += std::abs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (int k = 0; k <= l; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j <= l; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += z(j, k) * z(i, k);
          for (int k = j + 1; k <= l; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        double hh = f / (h + h);
        for (int j = 0; j <= l; ++j) {
          f = z(i, j);
          e[j] = g = e[j] - hh * f;
          for (int k = 0; k <= j; ++k) z(j, k) -= f * e[k] + g * z(i, k);
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (int i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (int j = 0; j < i; ++j) {
        double g = 0.0;
        for (int k = 0; k < i; ++k) g += z(i, k) * z(k, j);
        for (int k = 0; k < i; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (int j = 0; j < i; ++j) z(j, i) = z(i, j) = 0.0;
  }
}

// QL with implicit shifts on the tridiagonal (d, e), rotations accumulated in z.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e, DenseMatrix& z) {
  int n = static_cast<int>(d.size());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (iter++ == 60) throw std::runtime_error("sym_eig: QL failed to converge");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (int k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace detail

//! Eigendecomposition of a symmetric matrix; eigenvalues ascending, vectors
//! orthonormal.  Asymmetry beyond 1e-12 (relative to the largest entry, with
//! a unit floor) is rejected rather than silently symmetrized.
inline SymEigResult sym_eig(const DenseMatrix& a) {
  if (a.rows != a.cols) throw std::invalid_argument("sym_eig: matrix must be square");
  int n = a.rows;
  double scale = std::max(1.0, a.max_abs());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * scale)
        throw std::invalid_argument("sym_eig: matrix asymmetry exceeds 1e-12 at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
  SymEigResult res;
  if (n == 0) return res;
  DenseMatrix z = a;
  // use the symmetrized values so roundoff-level asymmetry cannot leak through
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) z(i, j) = z(j, i) = 0.5 * (a(i, j) + a(j, i));
  std::vector<double> d, e;
  detail::tridiagonalize(z, d, e);
  detail::tridiagonal_ql(d, e, z);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return d[x] < d[y]; });
  res.values.resize(n);
  res.vectors = DenseMatrix(n, n);
  for (int k = 0; k < n; ++k) {
    res.values[k] = d[order[k]];
    for (int i = 0; i < n; ++i) res.vectors(i, k) = z(i, order[k]);
  }
  return res;
}

struct SvdResult {
  DenseMatrix u;                // m x k with k = min(m, n)
  std::vector<double> sigma;    // descending, size k
  DenseMatrix v;                // n x k, A = U diag(sigma) V^T
};

//! Thin SVD by one-sided Jacobi on columns.  For m < n the transpose is
//! decomposed and the factors swapped back.
inline SvdResult svd(const DenseMatrix& a) {
  if (a.rows < a.cols) {
    SvdResult t = svd(a.transposed());
    SvdResult r;
    r.u = std::move(t.v);
    r.v = std::move(t.u);
    r.sigma = std::move(t.sigma);
    return r;
  }
  int m = a.rows, n = a.cols;
  DenseMatrix g = a;  // columns rotated in place
  DenseMatrix v(n, n);
  for (int i = 0; i < n; ++i) v(i, i) = 1.0;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool converged = true;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (int i = 0; i < m; ++i) {
          double gp = g(i, p), gq = g(i, q);
          alpha += gp * gp;
          beta += gq * gq;
          gamma += gp * gq;
        }
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        converged = false;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        for (int i = 0; i < m; ++i) {
          double gp = g(i, p), gq = g(i, q);
          g(i, p) = c * gp - s * gq;
          g(i, q) = s * gp + c * gq;
        }
        for (int i = 0; i < n; ++i) {
          double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    if (converged) break;
  }
  std::vector<double> sig(n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += g(i, j) * g(i, j);
    sig[j] = std::sqrt(s);
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return sig[x] > sig[y]; });
  SvdResult res;
  res.sigma.resize(n);
  res.u = DenseMatrix(m, n);
  res.v = DenseMatrix(n, n);
  for (int k = 0; k < n; ++k) {
    int j = order[k];
    res.sigma[k] = sig[j];
    if (sig[j] > 0.0)
      for (int i = 0; i < m; ++i) res.u(i, k) = g(i, j) / sig[j];
    for (int i = 0; i < n; ++i) res.v(i, k) = v(i, j);
  }
  return res;
}

}  // namespace stgms
