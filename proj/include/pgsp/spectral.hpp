#pragma once

// Truncated spectral basis of the augmented graph.
//
// A = [[S S^T, S], [S^T, S^T S]] with S = S_UI. For a singular triplet
// (sigma, u, v) of S, (u; v)/sqrt(2) is an eigenvector of A with eigenvalue
// sigma^2 + sigma and (u; -v)/sqrt(2) one with sigma^2 - sigma. Every other
// direction lies in the null space of A. The top of A's spectrum therefore
// comes from the leading singular triplets of S, which are computed with a
// block Lanczos bidiagonalization on the smaller side of S, full
// reorthogonalization and thick restarts.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "pgsp/error.hpp"
#include "pgsp/graph.hpp"
#include "pgsp/sparse.hpp"

namespace pgsp {

struct SolverOptions {
  /// Ritz residual bound relative to the largest singular value.
  double tolerance = 1e-8;
  /// Block size; 0 picks one from the graph's connected components.
  Index block_size = 0;
  /// Restart cap; 0 means 30 * k.
  Index max_restarts = 0;
};

struct SingularTriplets {
  std::vector<double> sigma;
  Eigen::MatrixXd left;   // m x count
  Eigen::MatrixXd right;  // n x count
  std::vector<double> residuals;
  /// All Ritz values of the final projection, descending.
  std::vector<double> ritz_values;
  Index restarts = 0;
  bool exhausted = false;  // Krylov space spans the whole smaller side
};

namespace detail {

// Column-major block products against CSR.
inline Eigen::MatrixXd spmm(const SparseMatrix& a, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), x.cols());
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& v = a.values();
  for (Index c = 0; c < x.cols(); ++c) {
    const double* xc = x.col(c).data();
    double* oc = out.col(c).data();
    for (Index i = 0; i < a.rows(); ++i) {
      double acc = 0.0;
      for (Index p = rp[i]; p < rp[i + 1]; ++p) acc += v[p] * xc[ci[p]];
      oc[i] = acc;
    }
  }
  return out;
}

inline Eigen::VectorXd gaussian_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

// Two passes of classical Gram-Schmidt against basis.leftCols(count).
inline void project_out(const Eigen::MatrixXd& basis, Index count, Eigen::Ref<Eigen::VectorXd> w) {
  if (count == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::VectorXd c = basis.leftCols(count).transpose() * w;
    w.noalias() -= basis.leftCols(count) * c;
  }
}

// Appends an orthonormalized copy of candidates' columns to basis starting at
// column `at`, writing exactly `width` columns. Columns that are numerically
// dependent are replaced with random directions.
inline void append_orthonormal(Eigen::MatrixXd& basis, Index at, const Eigen::MatrixXd& candidates, Index width,
                               double breakdown, std::mt19937_64& rng) {
  Index used = 0;
  for (Index j = 0; j < width; ++j) {
    Eigen::VectorXd w;
    double nrm = 0.0;
    while (used < candidates.cols()) {
      w = candidates.col(used++);
      project_out(basis, at + j, w);
      nrm = w.norm();
      if (nrm > breakdown) break;
      nrm = 0.0;
    }
    while (nrm <= breakdown) {
      w = gaussian_vector(basis.rows(), rng);
      project_out(basis, at + j, w);
      nrm = w.norm();
      if (nrm <= 1e-8) throw Error("no room left for a new basis direction");
    }
    basis.col(at + j) = w / nrm;
  }
}

// Number of connected components that contain at least one edge.
inline Index edge_components(const SparseMatrix& s) {
  const Index m = s.rows();
  std::vector<Index> parent(static_cast<std::size_t>(m + s.cols()));
  std::iota(parent.begin(), parent.end(), Index{0});
  auto find = [&](Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (Index i = 0; i < m; ++i)
    for (Index j : s.row_cols(i)) parent[find(i)] = find(m + j);
  std::vector<char> root(parent.size(), 0);
  Index count = 0;
  for (Index i = 0; i < m; ++i) {
    if (s.row_cols(i).empty()) continue;
    Index r = find(i);
    if (!root[r]) {
      root[r] = 1;
      ++count;
    }
  }
  return count;
}

}  // namespace detail

/// Leading singular triplets of s (m x n); s_t must be its transpose.
/// full = true runs the Krylov space to the whole smaller side and returns
/// every triplet.
inline SingularTriplets truncated_svd(const SparseMatrix& s, const SparseMatrix& s_t, Index count,
                                      std::uint64_t seed, const SolverOptions& opts = {}, bool full = false) {
  // The start block lives on the smaller side so a full run exhausts it.
  const bool transposed = s.cols() > s.rows();
  const SparseMatrix& op = transposed ? s_t : s;
  const SparseMatrix& op_t = transposed ? s : s_t;
  const Index small = op.cols();
  if (small == 0) throw InvalidArgument("truncated_svd: empty operator");
  if (full) count = small;
  if (count < 1 || count > small) throw InvalidArgument("truncated_svd: count out of range");

  Index block = opts.block_size;
  if (block <= 0) block = std::clamp<Index>(detail::edge_components(s) + 1, 8, 256);
  block = std::min(block, small);
  // keep and work are whole multiples of the block so every residual block
  // is captured completely by the next basis block; only a run that
  // exhausts the smaller side may end on a partial block.
  const Index keep = block * ((count + block - 1) / block + 1);
  const Index work = full ? small : std::min(small, 2 * keep);
  const Index max_restarts = opts.max_restarts > 0 ? opts.max_restarts : 30 * count;

  const double frob = std::sqrt(std::accumulate(op.values().begin(), op.values().end(), 0.0,
                                                [](double a, double v) { return a + v * v; }));
  const double breakdown = 1e-12 * std::max(frob, 1e-300);

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd p_basis(small, work);
  Eigen::MatrixXd q_basis(op.rows(), work);
  Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(work, work);  // q_i^T op p_j

  Eigen::MatrixXd next(small, block);
  for (Index c = 0; c < block; ++c) next.col(c) = detail::gaussian_vector(small, rng);

  Index cur = 0;
  Index last_begin = 0;
  Index last_width = 0;
  Index restarts = 0;
  Eigen::MatrixXd residual;

  while (true) {
    while (cur < work) {
      const Index width = std::min(block, work - cur);
      detail::append_orthonormal(p_basis, cur, next, width, breakdown, rng);

      Eigen::MatrixXd w = detail::spmm(op, p_basis.middleCols(cur, width));
      for (Index j = 0; j < width; ++j) {
        Eigen::VectorXd col = w.col(j);
        for (int pass = 0; pass < 2; ++pass) {
          const Index prior = cur + j;
          if (prior == 0) break;
          Eigen::VectorXd c = q_basis.leftCols(prior).transpose() * col;
          col.noalias() -= q_basis.leftCols(prior) * c;
          proj.block(0, cur + j, prior, 1) += c;
        }
        const double nrm = col.norm();
        if (nrm > breakdown) {
          q_basis.col(cur + j) = col / nrm;
          proj(cur + j, cur + j) = nrm;
        } else {
          Eigen::VectorXd r = detail::gaussian_vector(op.rows(), rng);
          detail::project_out(q_basis, cur + j, r);
          q_basis.col(cur + j) = r.normalized();
          proj(cur + j, cur + j) = 0.0;
        }
      }

      last_begin = cur;
      last_width = width;
      cur += width;

      residual = detail::spmm(op_t, q_basis.middleCols(last_begin, width));
      for (int pass = 0; pass < 2; ++pass)
        residual.noalias() -= p_basis.leftCols(cur) * (p_basis.leftCols(cur).transpose() * residual);
      if (cur == small) residual.setZero();
      next = residual;
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(proj.topLeftCorner(cur, cur), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const Eigen::MatrixXd& u = svd.matrixU();
    const Eigen::MatrixXd& v = svd.matrixV();

    std::vector<double> res(static_cast<std::size_t>(count));
    bool converged = true;
    const double scale = std::max(sv(0), 1e-300);
    for (Index i = 0; i < count; ++i) {
      res[i] = (residual * u.block(last_begin, i, last_width, 1)).norm();
      if (res[i] > opts.tolerance * scale) converged = false;
    }

    if (converged || cur == small) {
      SingularTriplets out;
      out.sigma.assign(sv.data(), sv.data() + count);
      out.ritz_values.assign(sv.data(), sv.data() + cur);
      out.residuals = std::move(res);
      out.restarts = restarts;
      out.exhausted = cur == small;
      Eigen::MatrixXd big_side = q_basis.leftCols(cur) * u.leftCols(count);
      Eigen::MatrixXd small_side = p_basis.leftCols(cur) * v.leftCols(count);
      if (transposed) {
        out.left = std::move(small_side);
        out.right = std::move(big_side);
      } else {
        out.left = std::move(big_side);
        out.right = std::move(small_side);
      }
      return out;
    }
    if (restarts >= max_restarts)
      throw ConvergenceError("singular value solver hit the restart cap", std::move(res));

    // Thick restart: keep the leading Ritz vectors and continue from the
    // residual block, which is already orthogonal to them.
    Eigen::MatrixXd p_keep = p_basis.leftCols(cur) * v.leftCols(keep);
    Eigen::MatrixXd q_keep = q_basis.leftCols(cur) * u.leftCols(keep);
    p_basis.leftCols(keep) = p_keep;
    q_basis.leftCols(keep) = q_keep;
    proj.setZero();
    for (Index i = 0; i < keep; ++i) proj(i, i) = sv(i);
    cur = keep;
    ++restarts;
  }
}

/// Top-k eigenpairs of the augmented graph A.
struct SpectralBasis {
  Index users = 0;
  Index items = 0;
  Index k = 0;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  DenseMatrix vectors;                // (m+n) x k, orthonormal columns
  std::vector<double> eigenvalues_a;  // descending
  bool tie_at_cutoff = false;
  double max_residual = 0.0;
  Index restarts = 0;

  Index dim() const { return users + items; }

  /// Eigenvalues of L = I - A, ascending.
  std::vector<double> laplacian_eigenvalues() const {
    std::vector<double> l(eigenvalues_a.size());
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = 1.0 - eigenvalues_a[i];
    return l;
  }
};

namespace detail {

constexpr double kRankThreshold = 1e-10;

inline void assemble_pair(DenseMatrix& out, Index col, const Eigen::MatrixXd& left, const Eigen::MatrixXd& right,
                          Index t, double sign) {
  const Index m = left.rows();
  const double inv = 1.0 / std::sqrt(2.0);
  for (Index i = 0; i < m; ++i) out(i, col) = inv * left(i, t);
  for (Index j = 0; j < right.rows(); ++j) out(m + j, col) = sign * inv * right(j, t);
}

inline bool near_tie(double a, double b) { return std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)); }

}  // namespace detail

/// Top-k eigenpairs of A, k in [1, m+n]. When k exceeds the number of
/// positive eigenvalues the full spectrum is assembled from every singular
/// triplet plus an orthonormal completion of the null space.
inline SpectralBasis truncated_eigenbasis(const AugmentedGraph& graph, Index k, std::uint64_t seed,
                                          const SolverOptions& opts = {}) {
  const Index m = graph.users();
  const Index n = graph.items();
  const Index dim = m + n;
  if (k < 1 || k > dim) throw InvalidArgument("k must be in [1, m+n]");
  const auto& sim = graph.similarity();
  const Index small = std::min(m, n);

  SpectralBasis basis;
  basis.users = m;
  basis.items = n;
  basis.k = k;
  basis.seed = seed;
  basis.tolerance = opts.tolerance;

  if (k < small) {
    // One extra triplet so a tie at the cut-off can be detected.
    SingularTriplets t = truncated_svd(*sim.s_ui, *sim.s_ui_t, k + 1, seed, opts);
    if (t.sigma[k - 1] > detail::kRankThreshold) {
      basis.vectors.resize(dim, k);
      basis.eigenvalues_a.resize(static_cast<std::size_t>(k));
      for (Index i = 0; i < k; ++i) {
        detail::assemble_pair(basis.vectors, i, t.left, t.right, i, 1.0);
        basis.eigenvalues_a[i] = t.sigma[i] * t.sigma[i] + t.sigma[i];
      }
      const double next = t.sigma[k] * t.sigma[k] + t.sigma[k];
      basis.tie_at_cutoff = detail::near_tie(basis.eigenvalues_a[k - 1], next);
      basis.max_residual = *std::max_element(t.residuals.begin(), t.residuals.begin() + k);
      basis.restarts = t.restarts;
      return basis;
    }
  }

  if (dim > 20000)
    throw InvalidArgument("k reaches past the positive spectrum; a full decomposition is limited to m+n <= 20000");
  SingularTriplets t = truncated_svd(*sim.s_ui, *sim.s_ui_t, small, seed, opts, /*full=*/true);
  Index rank = 0;
  while (rank < small && t.sigma[rank] > detail::kRankThreshold) ++rank;

  DenseMatrix all(dim, dim);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(dim));
  for (Index i = 0; i < rank; ++i) {
    detail::assemble_pair(all, 2 * i, t.left, t.right, i, 1.0);
    detail::assemble_pair(all, 2 * i + 1, t.left, t.right, i, -1.0);
    values.push_back(t.sigma[i] * t.sigma[i] + t.sigma[i]);
    values.push_back(t.sigma[i] * t.sigma[i] - t.sigma[i]);
  }
  // Null space of A: the orthogonal complement of the assembled vectors.
  const Index nonnull = 2 * rank;
  if (nonnull < dim) {
    Eigen::MatrixXd assembled = all.leftCols(nonnull);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(assembled);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
    all.rightCols(dim - nonnull) = q.rightCols(dim - nonnull);
    values.resize(static_cast<std::size_t>(dim), 0.0);
  }

  std::vector<Index> order(static_cast<std::size_t>(dim));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });

  basis.vectors.resize(dim, k);
  basis.eigenvalues_a.resize(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    basis.vectors.col(i) = all.col(order[i]);
    basis.eigenvalues_a[i] = values[order[i]];
  }
  if (k < dim) basis.tie_at_cutoff = detail::near_tie(values[order[k - 1]], values[order[k]]);
  basis.max_residual = t.residuals.empty() ? 0.0 : *std::max_element(t.residuals.begin(), t.residuals.end());
  basis.restarts = t.restarts;
  return basis;
}

/// X U_k U_k^T as two thin products; the (m+n)^2 projector is never formed.
inline DenseMatrix ideal_lowpass_apply(const SpectralBasis& basis, const DenseMatrix& x) {
  if (x.cols() != basis.dim()) throw DimensionError("ideal_lowpass_apply: cols != m+n");
  DenseMatrix coeffs = x * basis.vectors;
  return coeffs * basis.vectors.transpose();
}

struct SpectralDiagnostics {
  double total_variation = 0.0;
  double energy = 0.0;
  double rayleigh = 0.0;
};

/// x^T L x with L = I - A.
inline double total_variation(const AugmentedGraph& graph, std::span<const double> x) {
  auto ax = graph.apply(x);
  double xx = 0.0, xax = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    xax += x[i] * ax[i];
  }
  return xx - xax;
}

/// Throws for the zero signal, whose Rayleigh quotient is undefined; use
/// total_variation() directly in that case.
inline SpectralDiagnostics diagnostics(const AugmentedGraph& graph, std::span<const double> x) {
  SpectralDiagnostics d;
  d.total_variation = total_variation(graph, x);
  for (double v : x) d.energy += v * v;
  if (d.energy == 0.0) throw InvalidArgument("Rayleigh quotient undefined for the zero signal");
  d.rayleigh = d.total_variation / d.energy;
  return d;
}

}  // namespace pgsp
