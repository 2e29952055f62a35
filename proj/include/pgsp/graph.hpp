#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pgsp/error.hpp"
#include "pgsp/sparse.hpp"

namespace pgsp {

struct GraphOptions {
  /// Similarity blocks with at most this many rows may be materialized.
  Index materialize_max_rows = 20000;
  /// Materialize only if the nnz bound is at most this fraction of dense.
  double materialize_max_density = 0.25;
};

/// Symmetric Gram operator F * F^T, either materialized as CSR or applied
/// implicitly through its factor.
class GramOperator {
public:
  GramOperator(std::shared_ptr<const SparseMatrix> factor, std::shared_ptr<const SparseMatrix> factor_t,
               const GraphOptions& opts)
      : factor_(std::move(factor)), factor_t_(std::move(factor_t)) {
    const double dim = static_cast<double>(factor_->rows());
    if (factor_->rows() <= opts.materialize_max_rows &&
        gram_left_nnz_bound(*factor_) <= opts.materialize_max_density * dim * dim) {
      materialized_ = sparse_multiply(*factor_, *factor_t_);
    }
  }

  Index dim() const noexcept { return factor_->rows(); }
  bool materialized() const noexcept { return materialized_.has_value(); }
  const SparseMatrix& matrix() const {
    if (!materialized_) throw Error("similarity operator is implicit");
    return *materialized_;
  }

  std::vector<double> apply(std::span<const double> x) const {
    if (materialized_) return sparse_matvec(*materialized_, x);
    auto t = sparse_matvec(*factor_t_, x);
    return sparse_matvec(*factor_, t);
  }

  /// Row i with ascending column indices. Same accumulation order as the
  /// materialized product, so both paths agree bit-for-bit.
  void row(Index i, std::vector<Index>& cols, std::vector<double>& vals,
           detail::RowAccumulator& acc) const {
    cols.clear();
    vals.clear();
    if (materialized_) {
      auto c = materialized_->row_cols(i);
      auto v = materialized_->row_vals(i);
      cols.assign(c.begin(), c.end());
      vals.assign(v.begin(), v.end());
      return;
    }
    auto fc = factor_->row_cols(i);
    auto fv = factor_->row_vals(i);
    for (std::size_t p = 0; p < fc.size(); ++p) {
      auto tc = factor_t_->row_cols(fc[p]);
      auto tv = factor_t_->row_vals(fc[p]);
      for (std::size_t q = 0; q < tc.size(); ++q) acc.add(tc[q], fv[p] * tv[q]);
    }
    acc.flush(cols, vals);
  }

  DenseMatrix to_dense() const {
    if (materialized_) return materialized_->to_dense();
    DenseMatrix f = factor_->to_dense();
    return f * f.transpose();
  }

private:
  std::shared_ptr<const SparseMatrix> factor_;
  std::shared_ptr<const SparseMatrix> factor_t_;
  std::optional<SparseMatrix> materialized_;
};

/// Degree-normalized interaction matrix and the user/user, item/item
/// similarities derived from it.
struct NormalizedSimilarity {
  std::shared_ptr<const SparseMatrix> s_ui;    // m x n
  std::shared_ptr<const SparseMatrix> s_ui_t;  // n x m
  std::shared_ptr<const GramOperator> s_u;     // m x m
  std::shared_ptr<const GramOperator> s_i;     // n x n
  std::vector<double> degrees_user;
  std::vector<double> degrees_item;

  Index users() const { return s_ui->rows(); }
  Index items() const { return s_ui->cols(); }
};

namespace detail {
inline std::vector<double> inv_sqrt_degrees(const std::vector<double>& d) {
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i] > 0.0 ? 1.0 / std::sqrt(d[i]) : 0.0;
  return out;
}
}  // namespace detail

/// S_UI = D_U^{-1/2} R D_I^{-1/2}. Zero-degree users or items get zero rows or
/// columns.
inline NormalizedSimilarity build_normalized_interaction(const InteractionMatrix& r,
                                                         const GraphOptions& opts = {}) {
  if (r.nnz() == 0) throw InvalidArgument("no interactions");
  NormalizedSimilarity sim;
  sim.degrees_user = r.row_degrees();
  sim.degrees_item = r.col_degrees();
  const auto du = detail::inv_sqrt_degrees(sim.degrees_user);
  const auto di = detail::inv_sqrt_degrees(sim.degrees_item);
  auto s_ui = std::make_shared<const SparseMatrix>(SparseMatrix::from_interactions(r).scaled(du, di));
  auto s_ui_t = std::make_shared<const SparseMatrix>(s_ui->transpose());
  sim.s_u = std::make_shared<const GramOperator>(s_ui, s_ui_t, opts);
  sim.s_i = std::make_shared<const GramOperator>(s_ui_t, s_ui, opts);
  sim.s_ui = std::move(s_ui);
  sim.s_ui_t = std::move(s_ui_t);
  return sim;
}

/// The (m+n) x (m+n) operator [[S_U, S_UI], [S_UI^T, S_I]].
class AugmentedGraph {
public:
  explicit AugmentedGraph(std::shared_ptr<const NormalizedSimilarity> sim) : sim_(std::move(sim)) {}

  Index users() const { return sim_->users(); }
  Index items() const { return sim_->items(); }
  Index dim() const { return users() + items(); }
  const NormalizedSimilarity& similarity() const { return *sim_; }
  std::shared_ptr<const NormalizedSimilarity> similarity_ptr() const { return sim_; }

  /// A * (u; v) = (S_U u + S_UI v; S_UI^T u + S_I v).
  std::vector<double> apply(std::span<const double> x) const {
    if (static_cast<Index>(x.size()) != dim()) throw DimensionError("AugmentedGraph::apply: length != m+n");
    const Index m = users();
    auto u = x.subspan(0, static_cast<std::size_t>(m));
    auto v = x.subspan(static_cast<std::size_t>(m));
    auto top = sim_->s_u->apply(u);
    auto top2 = sparse_matvec(*sim_->s_ui, v);
    auto bottom = sparse_matvec(*sim_->s_ui_t, u);
    auto bottom2 = sim_->s_i->apply(v);
    std::vector<double> y(static_cast<std::size_t>(dim()));
    for (Index i = 0; i < m; ++i) y[i] = top[i] + top2[i];
    for (Index j = 0; j < items(); ++j) y[m + j] = bottom[j] + bottom2[j];
    return y;
  }

  /// X * A for a block of row signals (A is symmetric, so row i is A x_i).
  DenseMatrix right_multiply(const DenseMatrix& x) const {
    if (x.cols() != dim()) throw DimensionError("AugmentedGraph::right_multiply: cols != m+n");
    DenseMatrix out(x.rows(), x.cols());
    std::vector<double> buf(static_cast<std::size_t>(dim()));
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < dim(); ++j) buf[j] = x(i, j);
      auto y = apply(buf);
      for (Index j = 0; j < dim(); ++j) out(i, j) = y[j];
    }
    return out;
  }

  DenseMatrix to_dense() const {
    const Index m = users();
    DenseMatrix a(dim(), dim());
    DenseMatrix sui = sim_->s_ui->to_dense();
    a.topLeftCorner(m, m) = sim_->s_u->to_dense();
    a.topRightCorner(m, items()) = sui;
    a.bottomLeftCorner(items(), m) = sui.transpose();
    a.bottomRightCorner(items(), items()) = sim_->s_i->to_dense();
    return a;
  }

private:
  std::shared_ptr<const NormalizedSimilarity> sim_;
};

inline AugmentedGraph build_augmented_graph(std::shared_ptr<const NormalizedSimilarity> sim) {
  return AugmentedGraph(std::move(sim));
}

/// R~ = S_U || R together with the column degrees D~ and the D~^beta scalings.
/// Rows are generated on demand; materialize() builds the whole m x (m+n) CSR.
class PersonalizedSignalMatrix {
public:
  PersonalizedSignalMatrix(std::shared_ptr<const NormalizedSimilarity> sim, const InteractionMatrix& r,
                           double beta)
      : sim_(std::move(sim)), r_(r), beta_(beta) {
    if (!(beta <= 0.0)) throw InvalidArgument("beta must be <= 0");
    if (r.rows() != sim_->users() || r.cols() != sim_->items())
      throw DimensionError("interaction matrix does not match similarity");
    const Index m = r.rows();
    const Index n = r.cols();
    col_degrees_.resize(static_cast<std::size_t>(m + n));
    if (sim_->s_u->materialized()) {
      auto cs = sim_->s_u->matrix().col_sums();
      std::copy(cs.begin(), cs.end(), col_degrees_.begin());
    } else {
      // S_U is symmetric, so its column sums are S_UI (S_UI^T 1).
      std::vector<double> ones(static_cast<std::size_t>(m), 1.0);
      auto cs = sparse_matvec(*sim_->s_ui, sparse_matvec(*sim_->s_ui_t, ones));
      std::copy(cs.begin(), cs.end(), col_degrees_.begin());
    }
    auto id = r.col_degrees();
    std::copy(id.begin(), id.end(), col_degrees_.begin() + m);

    scale_.resize(col_degrees_.size());
    unscale_.resize(col_degrees_.size());
    for (std::size_t j = 0; j < col_degrees_.size(); ++j) {
      const double d = col_degrees_[j];
      scale_[j] = d > 0.0 ? std::pow(d, beta_) : 0.0;
      unscale_[j] = d > 0.0 ? std::pow(d, -beta_) : 0.0;
    }
  }

  Index rows() const { return r_.rows(); }
  Index cols() const { return r_.rows() + r_.cols(); }
  double beta() const { return beta_; }
  const std::vector<double>& col_degrees() const { return col_degrees_; }
  /// D~^beta diagonal (0 where D~ is 0).
  const std::vector<double>& scale() const { return scale_; }
  /// D~^{-beta} diagonal (0 where D~ is 0).
  const std::vector<double>& unscale() const { return unscale_; }
  const InteractionMatrix& interactions() const { return r_; }

  /// Row i of R~ (normalized = false) or R~ D~^beta (normalized = true).
  void row(Index i, bool normalized, std::vector<Index>& cols, std::vector<double>& vals,
           detail::RowAccumulator& acc) const {
    sim_->s_u->row(i, cols, vals, acc);
    const Index m = r_.rows();
    for (Index j : r_.row(i)) {
      cols.push_back(m + j);
      vals.push_back(1.0);
    }
    if (normalized)
      for (std::size_t p = 0; p < cols.size(); ++p) vals[p] *= scale_[cols[p]];
  }

  SparseMatrix materialize(bool normalized) const {
    detail::RowAccumulator acc(r_.rows());
    std::vector<Index> rp{0}, ci, c;
    std::vector<double> v, w;
    for (Index i = 0; i < rows(); ++i) {
      row(i, normalized, c, w, acc);
      ci.insert(ci.end(), c.begin(), c.end());
      v.insert(v.end(), w.begin(), w.end());
      rp.push_back(static_cast<Index>(ci.size()));
    }
    return SparseMatrix(rows(), cols(), std::move(rp), std::move(ci), std::move(v));
  }

private:
  std::shared_ptr<const NormalizedSimilarity> sim_;
  InteractionMatrix r_;
  double beta_;
  std::vector<double> col_degrees_;
  std::vector<double> scale_;
  std::vector<double> unscale_;
};

inline PersonalizedSignalMatrix build_personalized_signal(std::shared_ptr<const NormalizedSimilarity> sim,
                                                          const InteractionMatrix& r, double beta) {
  return PersonalizedSignalMatrix(std::move(sim), r, beta);
}

}  // namespace pgsp
