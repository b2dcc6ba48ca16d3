#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "stgms/linalg.hpp"

using namespace stgms;

namespace {

// dense Gaussian elimination with partial pivoting, kept independent of the
// library code so it can serve as a reference
std::vector<double> dense_reference_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  int n = static_cast<int>(b.size());
  for (int j = 0; j < n; ++j) {
    int p = j;
    for (int i = j + 1; i < n; ++i)
      if (std::abs(a[i][j]) > std::abs(a[p][j])) p = i;
    std::swap(a[j], a[p]);
    std::swap(b[j], b[p]);
    for (int i = j + 1; i < n; ++i) {
      double m = a[i][j] / a[j][j];
      for (int k = j; k < n; ++k) a[i][k] -= m * a[j][k];
      b[i] -= m * b[j];
    }
  }
  std::vector<double> x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

double dense_reference_det(std::vector<std::vector<double>> a) {
  int n = static_cast<int>(a.size());
  double det = 1.0;
  for (int j = 0; j < n; ++j) {
    int p = j;
    for (int i = j + 1; i < n; ++i)
      if (std::abs(a[i][j]) > std::abs(a[p][j])) p = i;
    if (p != j) {
      std::swap(a[j], a[p]);
      det = -det;
    }
    if (a[j][j] == 0.0) return 0.0;
    det *= a[j][j];
    for (int i = j + 1; i < n; ++i) {
      double m = a[i][j] / a[j][j];
      for (int k = j; k < n; ++k) a[i][k] -= m * a[j][k];
    }
  }
  return det;
}

// cyclic Jacobi eigenvalue iteration, an independent route to the spectrum
std::vector<double> jacobi_reference_eigenvalues(std::vector<std::vector<double>> a) {
  int n = static_cast<int>(a.size());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (a[p][q] == 0.0) continue;
        double theta = 0.5 * std::atan2(2.0 * a[p][q], a[q][q] - a[p][p]);
        double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < n; ++k) {
          double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.begin(), ev.end());
  return ev;
}

std::vector<std::vector<double>> to_dense(const SparseMatrix& a) {
  std::vector<std::vector<double>> d(a.rows, std::vector<double>(a.cols, 0.0));
  for (int i = 0; i < a.rows; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) d[i][a.col_idx[k]] = a.vals[k];
  return d;
}

}  // namespace

TEST_CASE("sparse identity solve returns the right-hand side") {
  SparseBuilder b(4, 4);
  for (int i = 0; i < 4; ++i) b.add(i, i, 1.0);
  SparseMatrix a = b.build();
  std::vector<double> rhs = {1.0, -2.0, 3.5, 0.25};
  auto x = sparse_solve(a, rhs);
  for (int i = 0; i < 4; ++i) CHECK(x[i] == Catch::Approx(rhs[i]).margin(1e-14));
}

TEST_CASE("two by two system solved by hand") {
  SparseBuilder b(2, 2);
  b.add(0, 0, 2.0);
  b.add(0, 1, 1.0);
  b.add(1, 0, 1.0);
  b.add(1, 1, 3.0);
  auto x = sparse_solve(b.build(), {3.0, 4.0});
  CHECK(x[0] == Catch::Approx(1.0).margin(1e-13));
  CHECK(x[1] == Catch::Approx(1.0).margin(1e-13));
}

TEST_CASE("builder sums duplicate entries and sorts columns") {
  SparseBuilder b(2, 2);
  b.add(0, 1, 1.0);
  b.add(0, 0, 2.0);
  b.add(0, 1, 3.0);
  b.add(1, 1, 1.0);
  SparseMatrix a = b.build();
  REQUIRE(a.row_ptr[1] - a.row_ptr[0] == 2);
  CHECK(a.col_idx[0] == 0);
  CHECK(a.col_idx[1] == 1);
  CHECK(a.vals[1] == Catch::Approx(4.0));
}

TEST_CASE("random sparse SPD system matches dense reference") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int n = 200;
  // band-limited SPD: diagonally dominant with a few off-diagonals
  SparseBuilder b(n, n);
  std::vector<std::vector<double>> offs(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < std::min(n, i + 8); ++j)
      if (unif(rng) > 0.2) offs[i][j] = offs[j][i] = unif(rng);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i && offs[i][j] != 0.0) {
        b.add(i, j, offs[i][j]);
        row += std::abs(offs[i][j]);
      }
    b.add(i, i, row + 1.0 + std::abs(unif(rng)));
    offs[i][i] = 0.0;
  }
  SparseMatrix a = b.build();
  std::vector<double> rhs(n);
  for (auto& v : rhs) v = unif(rng);
  auto x = sparse_solve(a, rhs);
  auto xref = dense_reference_solve(to_dense(a), rhs);
  for (int i = 0; i < n; ++i) CHECK(x[i] == Catch::Approx(xref[i]).margin(1e-10));
}

TEST_CASE("permuted band factorization agrees with direct solve") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int n = 60;
  SparseBuilder b(n, n);
  for (int i = 0; i < n; ++i) {
    b.add(i, i, 4.0 + unif(rng));
    if (i + 3 < n) b.add(i, i + 3, unif(rng));
    if (i >= 5) b.add(i, i - 5, unif(rng));
  }
  SparseMatrix a = b.build();
  // a scrambling permutation that the factor must undo
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = (i * 37) % n;
  PermutedBandFactor f(a, perm);
  std::vector<double> rhs(n);
  for (auto& v : rhs) v = unif(rng);
  auto x = f.solve(rhs);
  auto xref = dense_reference_solve(to_dense(a), rhs);
  for (int i = 0; i < n; ++i) CHECK(x[i] == Catch::Approx(xref[i]).margin(1e-10));
}

TEST_CASE("dense factor survives row orders that force pivoting") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int n : {3, 7, 40}) {
    // diagonally dominant rows dealt out in scrambled order, so partial
    // pivoting has to cross-swap rows instead of marching down the diagonal
    std::vector<std::vector<double>> rows(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n)));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = unif(rng);
      rows[static_cast<size_t>(i)][static_cast<size_t>(i)] = n + 1.0;
    }
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    DenseMatrix m(n, n);
    std::vector<std::vector<double>> md(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      md[static_cast<size_t>(i)] = rows[static_cast<size_t>(order[static_cast<size_t>(i)])];
      for (int j = 0; j < n; ++j) m(i, j) = md[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    DenseFactor f(m);
    std::vector<double> rhs(static_cast<size_t>(n));
    for (int trial = 0; trial < 3; ++trial) {
      for (auto& v : rhs) v = unif(rng);
      std::vector<double> x = f.solve(rhs);
      std::vector<double> xref = dense_reference_solve(md, rhs);
      for (int i = 0; i < n; ++i) CHECK(x[static_cast<size_t>(i)] == Catch::Approx(xref[static_cast<size_t>(i)]).margin(1e-10));
      for (int i = 0; i < n; ++i) {
        double r = -rhs[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) r += m(i, j) * x[static_cast<size_t>(j)];
        CHECK(std::abs(r) <= 1e-11 * (n + 1.0));
      }
    }
  }
}

TEST_CASE("dense factor rejects singular matrices") {
  DenseMatrix m(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = i + 1.0;  // rank one
  CHECK_THROWS_AS(DenseFactor(m), std::runtime_error);
}

TEST_CASE("band factor rejects singular matrices") {
  SparseBuilder b(2, 2);
  b.add(0, 0, 1.0);
  b.add(0, 1, 2.0);
  b.add(1, 0, 2.0);
  b.add(1, 1, 4.0);
  CHECK_THROWS_AS(sparse_solve(b.build(), {1.0, 1.0}), std::runtime_error);
}

TEST_CASE("symmetric eigensolver on a diagonal matrix") {
  DenseMatrix a(3, 3);
  a(0, 0) = 3.0;
  a(1, 1) = -1.0;
  a(2, 2) = 2.0;
  auto r = sym_eig(a);
  CHECK(r.values[0] == Catch::Approx(-1.0).margin(1e-13));
  CHECK(r.values[1] == Catch::Approx(2.0).margin(1e-13));
  CHECK(r.values[2] == Catch::Approx(3.0).margin(1e-13));
}

TEST_CASE("symmetric eigensolver on the exchange matrix") {
  DenseMatrix a(2, 2);
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  auto r = sym_eig(a);
  CHECK(r.values[0] == Catch::Approx(-1.0).margin(1e-13));
  CHECK(r.values[1] == Catch::Approx(1.0).margin(1e-13));
}

TEST_CASE("symmetric eigensolver invariants on random matrices") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int n = 50;
  DenseMatrix a(n, n);
  std::vector<std::vector<double>> ad(n, std::vector<double>(n));
  double trace = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double v = unif(rng);
      a(i, j) = a(j, i) = v;
      ad[i][j] = ad[j][i] = v;
      if (i == j) trace += v;
    }
  auto r = sym_eig(a);
  double tr = 0.0, det = 1.0;
  for (int k = 0; k < n; ++k) {
    tr += r.values[k];
    det *= r.values[k];
    if (k > 0) CHECK(r.values[k] >= r.values[k - 1]);
  }
  CHECK(tr == Catch::Approx(trace).margin(1e-9));
  double dref = dense_reference_det(ad);
  CHECK(det == Catch::Approx(dref).epsilon(1e-9));
  // residual ||A Q - Q diag|| and orthonormality
  double resid = 0.0, ortho = 0.0, anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      anorm = std::max(anorm, std::abs(ad[i][j]));
      double s = 0.0, g = 0.0;
      for (int k = 0; k < n; ++k) {
        s += ad[i][k] * r.vectors(k, j);
        g += r.vectors(k, i) * r.vectors(k, j);
      }
      resid = std::max(resid, std::abs(s - r.vectors(i, j) * r.values[j]));
      ortho = std::max(ortho, std::abs(g - (i == j ? 1.0 : 0.0)));
    }
  CHECK(resid <= 1e-10 * n * anorm);
  CHECK(ortho <= 1e-12 * n);
}

TEST_CASE("symmetric eigensolver matches an independent Jacobi iteration") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  const int n = 20;
  DenseMatrix a(n, n);
  std::vector<std::vector<double>> ad(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      double v = unif(rng);
      a(i, j) = a(j, i) = v;
      ad[i][j] = ad[j][i] = v;
    }
  auto r = sym_eig(a);
  auto ref = jacobi_reference_eigenvalues(ad);
  for (int k = 0; k < n; ++k) CHECK(r.values[k] == Catch::Approx(ref[k]).margin(1e-9));
}

TEST_CASE("eigensolver rejects asymmetric input") {
  DenseMatrix a(2, 2);
  a(0, 1) = 1.0;
  a(1, 0) = 0.5;
  CHECK_THROWS_AS(sym_eig(a), std::invalid_argument);
}

TEST_CASE("svd of a rank one outer product") {
  const int m = 6, n = 4;
  DenseMatrix a(m, n);
  std::vector<double> u = {1, 2, 3, 4, 5, 6}, v = {1, -1, 2, 0.5};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = u[i] * v[j];
  auto r = svd(a);
  double nu = 0.0, nv = 0.0;
  for (double x : u) nu += x * x;
  for (double x : v) nv += x * x;
  CHECK(r.sigma[0] == Catch::Approx(std::sqrt(nu * nv)).epsilon(1e-12));
  for (size_t k = 1; k < r.sigma.size(); ++k) CHECK(r.sigma[k] <= 1e-10 * r.sigma[0]);
}

TEST_CASE("svd of an orthogonal matrix has unit singular values") {
  // Householder reflector I - 2 w w^T / (w^T w)
  const int n = 5;
  std::vector<double> w = {1, 2, -1, 0.5, 3};
  double ww = 0.0;
  for (double x : w) ww += x * x;
  DenseMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - 2.0 * w[i] * w[j] / ww;
  auto r = svd(a);
  for (double s : r.sigma) CHECK(s == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("svd squares match the Gram spectrum on a random rectangle") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int m = 30, n = 20;
  DenseMatrix a(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = unif(rng);
  auto r = svd(a);
  DenseMatrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += a(k, i) * a(k, j);
      g(i, j) = s;
    }
  auto ge = sym_eig(g);
  REQUIRE(r.sigma.size() == static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) CHECK(r.sigma[k] * r.sigma[k] == Catch::Approx(ge.values[n - 1 - k]).margin(1e-9));
  // thin reconstruction A = U diag V^T
  double err = 0.0, anorm = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += r.u(i, k) * r.sigma[k] * r.v(j, k);
      err = std::max(err, std::abs(s - a(i, j)));
      anorm = std::max(anorm, std::abs(a(i, j)));
    }
  CHECK(err <= 1e-10 * n * anorm);
}

TEST_CASE("svd handles wide matrices through the transposed path") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int m = 8, n = 15;
  DenseMatrix a(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = unif(rng);
  auto r = svd(a);
  REQUIRE(r.sigma.size() == static_cast<size_t>(m));
  double err = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < m; ++k) s += r.u(i, k) * r.sigma[k] * r.v(j, k);
      err = std::max(err, std::abs(s - a(i, j)));
    }
  CHECK(err <= 1e-10 * m);
}
