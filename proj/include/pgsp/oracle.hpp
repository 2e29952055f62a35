#pragma once

// Dense reference implementation of the whole pipeline for small instances
// (m + n <= 200). Deliberately shares no numerics with the sparse path: plain
// row-major arrays, textbook products and a Householder tridiagonalization
// followed by implicit QL for the symmetric eigenproblem.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace pgsp::oracle {

constexpr std::size_t kMaxDim = 200;

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Mat multiply(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::invalid_argument("oracle::multiply: shape mismatch");
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

/// Eigenvalues ascending with matching eigenvector columns.
struct SymmetricEigen {
  std::vector<double> values;
  Mat vectors;
};

/// Symmetric eigendecomposition: Householder reduction to tridiagonal form,
/// then the implicit QL algorithm with accumulated rotations.
inline SymmetricEigen symmetric_eigen(const Mat& a) {
  if (a.rows != a.cols) throw std::invalid_argument("oracle::symmetric_eigen: matrix not square");
  const std::size_t n = a.rows;
  SymmetricEigen out;
  out.vectors = a;
  out.values.assign(n, 0.0);
  if (n == 0) return out;
  Mat& v = out.vectors;
  std::vector<double>& d = out.values;
  std::vector<double> e(n, 0.0);

  // Householder tridiagonalization.
  for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);
  for (std::size_t i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (std::size_t j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (std::size_t k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (std::size_t k = j + 1; k < i; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (std::size_t j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (std::size_t j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (std::size_t k = j; k < i; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  // Accumulate the transformations.
  for (std::size_t i = 0; i + 1 < n; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (std::size_t j = 0; j <= i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;

  // Implicit QL on the tridiagonal matrix.
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    std::size_t m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 100) throw std::runtime_error("oracle::symmetric_eigen: QL did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (std::size_t ii = m; ii-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[ii];
          h = c * p;
          r = std::hypot(p, e[ii]);
          e[ii + 1] = s * r;
          if (r == 0.0) {
            s = 0.0;
            c = 1.0;
          } else {
            s = e[ii] / r;
            c = p / r;
            // In the subnormal range hypot loses bits; keep the rotation orthogonal.
            const double cs = std::hypot(c, s);
            s /= cs;
            c /= cs;
          }
          p = c * d[ii] - s * g;
          d[ii + 1] = h + s * (c * g + s * d[ii]);
          for (std::size_t k = 0; k < n; ++k) {
            h = v(k, ii + 1);
            v(k, ii + 1) = s * v(k, ii) + c * h;
            v(k, ii) = c * v(k, ii) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }

  // Sort ascending.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
  SymmetricEigen sorted;
  sorted.values.resize(n);
  sorted.vectors = Mat(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    sorted.values[c] = d[order[c]];
    for (std::size_t r = 0; r < n; ++r) sorted.vectors(r, c) = v(r, order[c]);
  }
  return sorted;
}

struct OracleConfig {
  std::size_t k = 0;
  double phi = 0.0;
  double beta = 0.0;
};

/// Every intermediate of the pipeline, densely.
struct DenseModel {
  std::size_t m = 0;
  std::size_t n = 0;
  Mat r;
  Mat s_ui;
  Mat s_u;
  Mat s_i;
  Mat a;
  std::vector<double> eigenvalues_a;  // descending
  Mat eigenvectors;                   // columns match eigenvalues_a
  Mat projector;                      // U_k U_k^T
  Mat r_tilde;                        // S_U || R
  std::vector<double> col_degrees;    // D~
  Mat r_norm;                         // R~ D~^beta
  Mat filtered;                       // R~_norm H
  Mat r_hat;                          // m x n prediction
};

/// Runs the whole pipeline densely on a 0/1 matrix.
inline DenseModel oracle_run(const std::vector<std::vector<int>>& interactions, const OracleConfig& cfg) {
  DenseModel dm;
  dm.m = interactions.size();
  dm.n = dm.m == 0 ? 0 : interactions[0].size();
  const std::size_t m = dm.m, n = dm.n, N = m + n;
  if (m == 0 || n == 0) throw std::invalid_argument("oracle_run: empty interaction matrix");
  if (N > kMaxDim) throw std::invalid_argument("oracle_run: m + n exceeds the oracle cap of 200");
  if (cfg.k < 1 || cfg.k > N) throw std::invalid_argument("oracle_run: k out of range");
  if (!(cfg.phi >= 0.0 && cfg.phi <= 1.0) || !(cfg.beta <= 0.0))
    throw std::invalid_argument("oracle_run: invalid phi or beta");

  dm.r = Mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    if (interactions[i].size() != n) throw std::invalid_argument("oracle_run: ragged interaction matrix");
    for (std::size_t j = 0; j < n; ++j) dm.r(i, j) = interactions[i][j] ? 1.0 : 0.0;
  }

  std::vector<double> du(m, 0.0), di(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      du[i] += dm.r(i, j);
      di[j] += dm.r(i, j);
    }
  dm.s_ui = Mat(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (dm.r(i, j) != 0.0) dm.s_ui(i, j) = 1.0 / std::sqrt(du[i] * di[j]);

  const Mat s_ui_t = transpose(dm.s_ui);
  dm.s_u = multiply(dm.s_ui, s_ui_t);
  dm.s_i = multiply(s_ui_t, dm.s_ui);

  dm.a = Mat(N, N);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) dm.a(i, j) = dm.s_u(i, j);
    for (std::size_t j = 0; j < n; ++j) {
      dm.a(i, m + j) = dm.s_ui(i, j);
      dm.a(m + j, i) = dm.s_ui(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dm.a(m + i, m + j) = dm.s_i(i, j);

  SymmetricEigen eig = symmetric_eigen(dm.a);
  dm.eigenvalues_a.resize(N);
  dm.eigenvectors = Mat(N, N);
  for (std::size_t c = 0; c < N; ++c) {
    const std::size_t src = N - 1 - c;
    dm.eigenvalues_a[c] = eig.values[src];
    for (std::size_t r = 0; r < N; ++r) dm.eigenvectors(r, c) = eig.vectors(r, src);
  }

  dm.projector = Mat(N, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < cfg.k; ++c) s += dm.eigenvectors(i, c) * dm.eigenvectors(j, c);
      dm.projector(i, j) = s;
    }

  dm.r_tilde = Mat(m, N);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) dm.r_tilde(i, j) = dm.s_u(i, j);
    for (std::size_t j = 0; j < n; ++j) dm.r_tilde(i, m + j) = dm.r(i, j);
  }
  dm.col_degrees.assign(N, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < N; ++j) dm.col_degrees[j] += dm.r_tilde(i, j);

  dm.r_norm = dm.r_tilde;
  for (std::size_t j = 0; j < N; ++j) {
    const double d = dm.col_degrees[j];
    const double sc = d > 0.0 ? std::pow(d, cfg.beta) : 0.0;
    for (std::size_t i = 0; i < m; ++i) dm.r_norm(i, j) *= sc;
  }

  Mat h(N, N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) h(i, j) = (1.0 - cfg.phi) * dm.projector(i, j) + cfg.phi * dm.a(i, j);
  dm.filtered = multiply(dm.r_norm, h);

  dm.r_hat = Mat(m, n);
  for (std::size_t j = 0; j < n; ++j) {
    const double d = dm.col_degrees[m + j];
    const double back = d > 0.0 ? std::pow(d, -cfg.beta) : 0.0;
    for (std::size_t i = 0; i < m; ++i) dm.r_hat(i, j) = dm.filtered(i, m + j) * back;
  }
  return dm;
}

}  // namespace pgsp::oracle
