#pragma once

// Compressed-sparse-row primitives. Every product emits rows with strictly
// increasing column indices and accumulates in a fixed order, so results are
// bit-reproducible across runs and thread counts.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "pgsp/error.hpp"

namespace pgsp {

using Index = std::int64_t;

/// Row-major dense matrix; carrier for spectral bases and signal blocks.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DenseVector = Eigen::VectorXd;

/// Binary user x item interaction matrix with implicit unit values.
class InteractionMatrix {
public:
  InteractionMatrix() = default;

  /// Builds from (user, item) pairs. Duplicates collapse to one entry and are
  /// counted in duplicates().
  InteractionMatrix(Index rows, Index cols, std::vector<std::pair<Index, Index>> pairs)
      : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw InvalidArgument("negative dimension");
    for (const auto& [u, i] : pairs) {
      if (u < 0 || u >= rows || i < 0 || i >= cols)
        throw InvalidArgument("interaction index out of range");
    }
    std::sort(pairs.begin(), pairs.end());
    auto last = std::unique(pairs.begin(), pairs.end());
    duplicates_ = static_cast<Index>(std::distance(last, pairs.end()));
    pairs.erase(last, pairs.end());

    row_ptr_.assign(static_cast<std::size_t>(rows) + 1, 0);
    col_idx_.reserve(pairs.size());
    for (const auto& [u, i] : pairs) {
      ++row_ptr_[static_cast<std::size_t>(u) + 1];
      col_idx_.push_back(i);
    }
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(col_idx_.size()); }
  Index duplicates() const noexcept { return duplicates_; }

  std::span<const Index> row(Index i) const {
    return {col_idx_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }
  Index row_degree(Index i) const { return row_ptr_[i + 1] - row_ptr_[i]; }

  bool contains(Index i, Index j) const {
    auto r = row(i);
    return std::binary_search(r.begin(), r.end(), j);
  }

  std::vector<double> row_degrees() const {
    std::vector<double> d(static_cast<std::size_t>(rows_));
    for (Index i = 0; i < rows_; ++i) d[i] = static_cast<double>(row_degree(i));
    return d;
  }
  std::vector<double> col_degrees() const {
    std::vector<double> d(static_cast<std::size_t>(cols_), 0.0);
    for (Index j : col_idx_) d[j] += 1.0;
    return d;
  }

  const std::vector<Index>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<Index>& col_idx() const noexcept { return col_idx_; }

private:
  Index rows_ = 0;
  Index cols_ = 0;
  Index duplicates_ = 0;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
};

/// Real-valued CSR matrix.
class SparseMatrix {
public:
  SparseMatrix() = default;

  SparseMatrix(Index rows, Index cols, std::vector<Index> row_ptr, std::vector<Index> col_idx,
               std::vector<double> values)
      : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    if (row_ptr_.size() != static_cast<std::size_t>(rows_) + 1 || col_idx_.size() != values_.size() ||
        row_ptr_.back() != static_cast<Index>(col_idx_.size()))
      throw InvalidArgument("inconsistent CSR arrays");
    for (Index i = 0; i < rows_; ++i) {
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        if (col_idx_[p] < 0 || col_idx_[p] >= cols_) throw InvalidArgument("column index out of range");
        if (p > row_ptr_[i] && col_idx_[p] <= col_idx_[p - 1])
          throw InvalidArgument("column indices must be strictly increasing within a row");
        if (!std::isfinite(values_[p])) throw InvalidArgument("non-finite weight");
      }
    }
  }

  static SparseMatrix identity(Index n) {
    std::vector<Index> rp(static_cast<std::size_t>(n) + 1), ci(static_cast<std::size_t>(n));
    std::iota(rp.begin(), rp.end(), Index{0});
    std::iota(ci.begin(), ci.end(), Index{0});
    return SparseMatrix(n, n, std::move(rp), std::move(ci), std::vector<double>(n, 1.0));
  }

  /// Drops exact zeros of a dense matrix.
  static SparseMatrix from_dense(const DenseMatrix& d) {
    std::vector<Index> rp{0}, ci;
    std::vector<double> v;
    for (Index i = 0; i < d.rows(); ++i) {
      for (Index j = 0; j < d.cols(); ++j) {
        if (d(i, j) != 0.0) {
          ci.push_back(j);
          v.push_back(d(i, j));
        }
      }
      rp.push_back(static_cast<Index>(ci.size()));
    }
    return SparseMatrix(d.rows(), d.cols(), std::move(rp), std::move(ci), std::move(v));
  }

  static SparseMatrix from_interactions(const InteractionMatrix& r) {
    return SparseMatrix(r.rows(), r.cols(), r.row_ptr(), r.col_idx(),
                        std::vector<double>(r.col_idx().size(), 1.0));
  }

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(col_idx_.size()); }

  const std::vector<Index>& row_ptr() const noexcept { return row_ptr_; }
  const std::vector<Index>& col_idx() const noexcept { return col_idx_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::span<const Index> row_cols(Index i) const {
    return {col_idx_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }
  std::span<const double> row_vals(Index i) const {
    return {values_.data() + row_ptr_[i], static_cast<std::size_t>(row_ptr_[i + 1] - row_ptr_[i])};
  }

  double coeff(Index i, Index j) const {
    auto c = row_cols(i);
    auto it = std::lower_bound(c.begin(), c.end(), j);
    if (it == c.end() || *it != j) return 0.0;
    return values_[row_ptr_[i] + (it - c.begin())];
  }

  DenseMatrix to_dense() const {
    DenseMatrix d = DenseMatrix::Zero(rows_, cols_);
    for (Index i = 0; i < rows_; ++i)
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) d(i, col_idx_[p]) = values_[p];
    return d;
  }

  SparseMatrix transpose() const {
    std::vector<Index> rp(static_cast<std::size_t>(cols_) + 1, 0);
    for (Index c : col_idx_) ++rp[c + 1];
    std::partial_sum(rp.begin(), rp.end(), rp.begin());
    std::vector<Index> next(rp.begin(), rp.end() - 1);
    std::vector<Index> ci(col_idx_.size());
    std::vector<double> v(values_.size());
    // Rows are visited in ascending order, so transposed rows come out sorted.
    for (Index i = 0; i < rows_; ++i) {
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        Index dst = next[col_idx_[p]]++;
        ci[dst] = i;
        v[dst] = values_[p];
      }
    }
    SparseMatrix t;
    t.rows_ = cols_;
    t.cols_ = rows_;
    t.row_ptr_ = std::move(rp);
    t.col_idx_ = std::move(ci);
    t.values_ = std::move(v);
    return t;
  }

  /// Column sums (length cols()).
  std::vector<double> col_sums() const {
    std::vector<double> s(static_cast<std::size_t>(cols_), 0.0);
    for (std::size_t p = 0; p < col_idx_.size(); ++p) s[col_idx_[p]] += values_[p];
    return s;
  }

  /// Returns diag(left) * this * diag(right); either span may be empty to skip.
  SparseMatrix scaled(std::span<const double> left, std::span<const double> right) const {
    detail::require_dims(left.empty() || static_cast<Index>(left.size()) == rows_, "row scale length");
    detail::require_dims(right.empty() || static_cast<Index>(right.size()) == cols_, "column scale length");
    SparseMatrix out = *this;
    for (Index i = 0; i < rows_; ++i) {
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        double w = values_[p];
        if (!left.empty()) w *= left[i];
        if (!right.empty()) w *= right[col_idx_[p]];
        out.values_[p] = w;
      }
    }
    return out;
  }

  /// Columns [begin, end) as a new matrix with re-based indices.
  SparseMatrix col_slice(Index begin, Index end) const {
    detail::require_dims(0 <= begin && begin <= end && end <= cols_, "column slice out of range");
    std::vector<Index> rp{0}, ci;
    std::vector<double> v;
    for (Index i = 0; i < rows_; ++i) {
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        if (col_idx_[p] >= begin && col_idx_[p] < end) {
          ci.push_back(col_idx_[p] - begin);
          v.push_back(values_[p]);
        }
      }
      rp.push_back(static_cast<Index>(ci.size()));
    }
    return SparseMatrix(rows_, end - begin, std::move(rp), std::move(ci), std::move(v));
  }

private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

/// y = M x, summed in row order.
inline std::vector<double> sparse_matvec(const SparseMatrix& m, std::span<const double> x) {
  if (static_cast<Index>(x.size()) != m.cols()) throw DimensionError("sparse_matvec: x length != cols");
  std::vector<double> y(static_cast<std::size_t>(m.rows()), 0.0);
  const auto& rp = m.row_ptr();
  const auto& ci = m.col_idx();
  const auto& v = m.values();
  for (Index i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (Index p = rp[i]; p < rp[i + 1]; ++p) acc += v[p] * x[ci[p]];
    y[i] = acc;
  }
  return y;
}

/// Sparse times dense block: out = M * X.
inline DenseMatrix sparse_times_dense(const SparseMatrix& m, const DenseMatrix& x) {
  if (x.rows() != m.cols()) throw DimensionError("sparse_times_dense: inner dimension mismatch");
  DenseMatrix out = DenseMatrix::Zero(m.rows(), x.cols());
  const auto& rp = m.row_ptr();
  const auto& ci = m.col_idx();
  const auto& v = m.values();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index p = rp[i]; p < rp[i + 1]; ++p) out.row(i).noalias() += v[p] * x.row(ci[p]);
  return out;
}

namespace detail {

// Sparse accumulator for one output row; touched columns are sorted on flush.
class RowAccumulator {
public:
  explicit RowAccumulator(Index width) : dense_(static_cast<std::size_t>(width), 0.0),
                                         seen_(static_cast<std::size_t>(width), 0) {}

  void add(Index j, double w) {
    if (!seen_[j]) {
      seen_[j] = 1;
      touched_.push_back(j);
    }
    dense_[j] += w;
  }

  void flush(std::vector<Index>& ci, std::vector<double>& v) {
    std::sort(touched_.begin(), touched_.end());
    for (Index j : touched_) {
      ci.push_back(j);
      v.push_back(dense_[j]);
      dense_[j] = 0.0;
      seen_[j] = 0;
    }
    touched_.clear();
  }

private:
  std::vector<double> dense_;
  std::vector<char> seen_;
  std::vector<Index> touched_;
};

}  // namespace detail

/// General sparse product a * b.
inline SparseMatrix sparse_multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("sparse_multiply: inner dimension mismatch");
  detail::RowAccumulator acc(b.cols());
  std::vector<Index> rp{0}, ci;
  std::vector<double> v;
  for (Index i = 0; i < a.rows(); ++i) {
    auto ac = a.row_cols(i);
    auto av = a.row_vals(i);
    for (std::size_t p = 0; p < ac.size(); ++p) {
      auto bc = b.row_cols(ac[p]);
      auto bv = b.row_vals(ac[p]);
      for (std::size_t q = 0; q < bc.size(); ++q) acc.add(bc[q], av[p] * bv[q]);
    }
    acc.flush(ci, v);
    rp.push_back(static_cast<Index>(ci.size()));
  }
  return SparseMatrix(a.rows(), b.cols(), std::move(rp), std::move(ci), std::move(v));
}

/// P * P^T. Entry (i, r) sums over shared columns in ascending column order, so
/// the result is bit-exactly symmetric.
inline SparseMatrix sparse_gram_left(const SparseMatrix& p) {
  if (p.rows() == 0) throw InvalidArgument("sparse_gram_left: empty matrix");
  return sparse_multiply(p, p.transpose());
}

/// P^T * P.
inline SparseMatrix sparse_gram_right(const SparseMatrix& p) {
  if (p.cols() == 0) throw InvalidArgument("sparse_gram_right: empty matrix");
  SparseMatrix t = p.transpose();
  return sparse_multiply(t, p);
}

/// Upper bound on nnz(P P^T): sum over columns of (column nnz)^2.
inline double gram_left_nnz_bound(const SparseMatrix& p) {
  std::vector<double> cnt(static_cast<std::size_t>(p.cols()), 0.0);
  for (Index c : p.col_idx()) cnt[c] += 1.0;
  double s = 0.0;
  for (double c : cnt) s += c * c;
  return s;
}

/// [a | b]; b's column indices are shifted by a.cols().
inline SparseMatrix hconcat(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("hconcat: row count mismatch");
  std::vector<Index> rp{0}, ci;
  std::vector<double> v;
  ci.reserve(static_cast<std::size_t>(a.nnz() + b.nnz()));
  v.reserve(ci.capacity());
  for (Index i = 0; i < a.rows(); ++i) {
    auto ac = a.row_cols(i);
    auto av = a.row_vals(i);
    ci.insert(ci.end(), ac.begin(), ac.end());
    v.insert(v.end(), av.begin(), av.end());
    auto bc = b.row_cols(i);
    auto bv = b.row_vals(i);
    for (std::size_t q = 0; q < bc.size(); ++q) {
      ci.push_back(bc[q] + a.cols());
      v.push_back(bv[q]);
    }
    rp.push_back(static_cast<Index>(ci.size()));
  }
  return SparseMatrix(a.rows(), a.cols() + b.cols(), std::move(rp), std::move(ci), std::move(v));
}

}  // namespace pgsp
