#pragma once

// Pre-processing, mixed-frequency graph convolution and post-processing.
//
// Scores for a user batch are produced without forming the m x (m+n) signal
// block. With s = D~^beta split into (s_user, s_item) and S = S_UI, a
// normalized signal row is x = ((S_U)_i . s_user, R_i . s_item), and
//   ideal:  x U_k U_item^T, where x U_k = S_i (S^T diag(s_user) U_user)
//                                        + R_i diag(s_item) U_item
//   linear: (x A)_items = ((S_U)_i . s_user + (R_i . s_item) S^T) S
// Both item blocks are then multiplied by D~^{-beta}.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "pgsp/error.hpp"
#include "pgsp/graph.hpp"
#include "pgsp/parallel.hpp"
#include "pgsp/sparse.hpp"
#include "pgsp/spectral.hpp"

namespace pgsp {

struct FilterConfig {
  Index k = 256;
  double phi = 0.3;
  double beta = -0.5;
  Index top_n = 20;

  void validate() const {
    if (k < 1) throw InvalidArgument("k must be >= 1");
    if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must be in [0, 1]");
    if (!(beta <= 0.0)) throw InvalidArgument("beta must be <= 0");
    if (top_n < 1) throw InvalidArgument("top_n must be >= 1");
  }
};

/// (1 - phi) X U_k U_k^T + phi X A for row signals X with m+n columns.
inline DenseMatrix mixed_filter_apply(const DenseMatrix& x, const SpectralBasis& basis, const AugmentedGraph& graph,
                                      double phi) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must be in [0, 1]");
  if (x.cols() != graph.dim() || basis.dim() != graph.dim())
    throw DimensionError("mixed_filter_apply: signal width must be m+n");
  DenseMatrix out = (1.0 - phi) * ideal_lowpass_apply(basis, x);
  out += phi * graph.right_multiply(x);
  return out;
}

struct PredictionMatrix {
  DenseMatrix scores;  // m x n
  bool masked = false;
};

struct ScoredItem {
  Index item = 0;
  double score = 0.0;
  bool operator==(const ScoredItem&) const = default;
};

struct RankedRecommendations {
  Index top_n = 0;
  std::vector<std::vector<ScoredItem>> lists;
};

/// Highest-scoring items not in train_items (sorted), ties by ascending item.
inline void rank_row(std::span<const double> scores, std::span<const Index> train_items, Index top_n,
                     std::vector<ScoredItem>& out, std::vector<ScoredItem>& scratch) {
  scratch.clear();
  std::size_t t = 0;
  for (Index j = 0; j < static_cast<Index>(scores.size()); ++j) {
    while (t < train_items.size() && train_items[t] < j) ++t;
    if (t < train_items.size() && train_items[t] == j) continue;
    scratch.push_back({j, scores[j]});
  }
  const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(top_n), scratch.size());
  auto better = [](const ScoredItem& a, const ScoredItem& b) {
    return a.score > b.score || (a.score == b.score && a.item < b.item);
  };
  std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(len), scratch.end(), better);
  out.assign(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(len));
}

inline RankedRecommendations rank_topn(const PredictionMatrix& p, const InteractionMatrix& train, Index top_n) {
  if (p.scores.rows() != train.rows() || p.scores.cols() != train.cols())
    throw DimensionError("rank_topn: prediction and training shapes differ");
  RankedRecommendations recs;
  recs.top_n = top_n;
  recs.lists.resize(static_cast<std::size_t>(train.rows()));
  std::vector<ScoredItem> scratch;
  for (Index u = 0; u < train.rows(); ++u) {
    std::span<const double> row(p.scores.row(u).data(), static_cast<std::size_t>(p.scores.cols()));
    rank_row(row, train.row(u), top_n, recs.lists[u], scratch);
  }
  return recs;
}

struct ModelOptions {
  GraphOptions graph;
  SolverOptions solver;
  Index batch_rows = 1024;
  unsigned threads = 1;
};

struct ModelTimings {
  double graph_ms = 0.0;
  double signal_ms = 0.0;
  double eigensolve_ms = 0.0;
  double projection_ms = 0.0;
  int eigensolves = 0;
};

namespace detail {
inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace detail

/// A built PGSP model: similarity graph, signal scalings and spectral basis
/// for one training matrix. Immutable and shareable across threads.
class PgspModel {
public:
  /// Computes the basis unless one is supplied. k is clamped to m+n.
  PgspModel(const InteractionMatrix& train, const FilterConfig& cfg, std::uint64_t seed,
            const ModelOptions& opts = {}, std::optional<SpectralBasis> basis = std::nullopt)
      : cfg_(cfg), opts_(opts) {
    cfg_.validate();
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    sim_ = std::make_shared<const NormalizedSimilarity>(build_normalized_interaction(train, opts.graph));
    graph_ = std::make_unique<AugmentedGraph>(sim_);
    timings_.graph_ms = detail::ms_since(t0);

    t0 = clock::now();
    signal_ = std::make_unique<PersonalizedSignalMatrix>(sim_, train, cfg_.beta);
    timings_.signal_ms = detail::ms_since(t0);

    cfg_.k = std::min(cfg_.k, graph_->dim());
    t0 = clock::now();
    if (basis) {
      if (basis->users != train.rows() || basis->items != train.cols() || basis->k != cfg_.k)
        throw DimensionError("supplied basis does not match the model");
      basis_ = std::move(*basis);
    } else {
      basis_ = truncated_eigenbasis(*graph_, cfg_.k, seed, opts.solver);
      timings_.eigensolves = 1;
    }
    timings_.eigensolve_ms = detail::ms_since(t0);

    t0 = clock::now();
    const Index m = train.rows();
    const Index n = train.cols();
    const auto& scale = signal_->scale();
    DenseMatrix scaled_user = basis_.vectors.topRows(m);
    for (Index i = 0; i < m; ++i) scaled_user.row(i) *= scale[i];
    user_coeffs_ = sparse_times_dense(*sim_->s_ui_t, scaled_user);
    item_basis_ = basis_.vectors.bottomRows(n);
    item_coeffs_ = item_basis_;
    for (Index j = 0; j < n; ++j) item_coeffs_.row(j) *= scale[m + j];
    timings_.projection_ms = detail::ms_since(t0);
  }

  const FilterConfig& config() const { return cfg_; }
  const SpectralBasis& basis() const { return basis_; }
  const AugmentedGraph& graph() const { return *graph_; }
  const PersonalizedSignalMatrix& signal() const { return *signal_; }
  const InteractionMatrix& train() const { return signal_->interactions(); }
  const ModelTimings& timings() const { return timings_; }
  Index users() const { return graph_->users(); }
  Index items() const { return graph_->items(); }

  /// Post-processed item scores of the ideal (phi = 0) and linear (phi = 1)
  /// filters for users [begin, end).
  void component_scores(Index begin, Index end, DenseMatrix& ideal, DenseMatrix& linear) const {
    if (begin < 0 || end > users() || begin > end) throw DimensionError("user range out of bounds");
    const Index m = users();
    const Index n = items();
    const Index rows = end - begin;
    const auto& sui = *sim_->s_ui;
    const auto& sui_t = *sim_->s_ui_t;
    const auto& scale = signal_->scale();
    const auto& unscale = signal_->unscale();
    const auto& r = train();

    DenseMatrix coeffs = DenseMatrix::Zero(rows, basis_.k);
    linear.setZero(rows, n);
    RowAccumulator su_acc(m), w_acc(m);
    std::vector<Index> su_cols, w_cols;
    std::vector<double> su_vals, w_vals;

    for (Index u = begin; u < end; ++u) {
      const Index row = u - begin;
      auto sc = sui.row_cols(u);
      auto sv = sui.row_vals(u);
      for (std::size_t p = 0; p < sc.size(); ++p) coeffs.row(row).noalias() += sv[p] * user_coeffs_.row(sc[p]);
      for (Index j : r.row(u)) coeffs.row(row) += item_coeffs_.row(j);

      sim_->s_u->row(u, su_cols, su_vals, su_acc);
      for (std::size_t p = 0; p < su_cols.size(); ++p) w_acc.add(su_cols[p], su_vals[p] * scale[su_cols[p]]);
      for (Index j : r.row(u)) {
        const double sj = scale[m + j];
        auto tc = sui_t.row_cols(j);
        auto tv = sui_t.row_vals(j);
        for (std::size_t q = 0; q < tc.size(); ++q) w_acc.add(tc[q], sj * tv[q]);
      }
      w_acc.flush(w_cols, w_vals);
      double* out = linear.row(row).data();
      for (std::size_t p = 0; p < w_cols.size(); ++p) {
        auto cc = sui.row_cols(w_cols[p]);
        auto cv = sui.row_vals(w_cols[p]);
        for (std::size_t q = 0; q < cc.size(); ++q) out[cc[q]] += w_vals[p] * cv[q];
      }
      w_cols.clear();
      w_vals.clear();
    }

    ideal.noalias() = coeffs * item_basis_.transpose();
    for (Index j = 0; j < n; ++j) {
      ideal.col(j) *= unscale[m + j];
      linear.col(j) *= unscale[m + j];
    }
  }

  /// Full m x n prediction for the given phi.
  PredictionMatrix predict(double phi) const {
    if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must be in [0, 1]");
    PredictionMatrix p;
    p.scores.resize(users(), items());
    const Index batch = std::max<Index>(1, opts_.batch_rows);
    const Index tasks = (users() + batch - 1) / batch;
    parallel_for(tasks, opts_.threads, [&](Index t) {
      const Index b = t * batch;
      const Index e = std::min(users(), b + batch);
      DenseMatrix ideal, linear;
      component_scores(b, e, ideal, linear);
      p.scores.middleRows(b, e - b) = (1.0 - phi) * ideal + phi * linear;
    });
    return p;
  }

  /// Top-n lists for every user, computed batch by batch.
  RankedRecommendations recommend(double phi, Index top_n) const {
    RankedRecommendations recs;
    recs.top_n = top_n;
    recs.lists.resize(static_cast<std::size_t>(users()));
    const Index batch = std::max<Index>(1, opts_.batch_rows);
    const Index tasks = (users() + batch - 1) / batch;
    parallel_for(tasks, opts_.threads, [&](Index t) {
      const Index b = t * batch;
      const Index e = std::min(users(), b + batch);
      DenseMatrix ideal, linear;
      component_scores(b, e, ideal, linear);
      DenseMatrix scores = (1.0 - phi) * ideal + phi * linear;
      std::vector<ScoredItem> scratch;
      for (Index u = b; u < e; ++u) {
        std::span<const double> row(scores.row(u - b).data(), static_cast<std::size_t>(items()));
        rank_row(row, train().row(u), top_n, recs.lists[u], scratch);
      }
    });
    return recs;
  }

private:
  using RowAccumulator = detail::RowAccumulator;

  FilterConfig cfg_;
  ModelOptions opts_;
  std::shared_ptr<const NormalizedSimilarity> sim_;
  std::unique_ptr<AugmentedGraph> graph_;
  std::unique_ptr<PersonalizedSignalMatrix> signal_;
  SpectralBasis basis_;
  DenseMatrix user_coeffs_;  // S_UI^T diag(s_user) U_user, n x k
  DenseMatrix item_coeffs_;  // diag(s_item) U_item, n x k
  DenseMatrix item_basis_;   // U_item, n x k
  ModelTimings timings_;
};

/// R^ = (mixed-filtered R~ D~^beta) D~^{-beta}, last n columns.
inline PredictionMatrix run_pgsp(const InteractionMatrix& r, const FilterConfig& cfg, std::uint64_t seed,
                                 const ModelOptions& opts = {}) {
  PgspModel model(r, cfg, seed, opts);
  return model.predict(cfg.phi);
}

/// One "user_id \t item_id \t rank \t score" line per recommendation; ranks
/// start at 1. Ids are translated through the given tables when non-empty.
inline void write_recommendations_tsv(std::ostream& os, const RankedRecommendations& recs,
                                      std::span<const std::int64_t> user_ids = {},
                                      std::span<const std::int64_t> item_ids = {}) {
  char buf[64];
  for (std::size_t u = 0; u < recs.lists.size(); ++u) {
    const std::int64_t uid = user_ids.empty() ? static_cast<std::int64_t>(u) : user_ids[u];
    const auto& list = recs.lists[u];
    for (std::size_t p = 0; p < list.size(); ++p) {
      const std::int64_t iid = item_ids.empty() ? list[p].item : item_ids[list[p].item];
      std::snprintf(buf, sizeof buf, "%.10g", list[p].score);
      os << uid << '\t' << iid << '\t' << (p + 1) << '\t' << buf << '\n';
    }
  }
}

}  // namespace pgsp
