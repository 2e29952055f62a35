#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgsp/error.hpp"
#include "pgsp/parallel.hpp"
#include "pgsp/pipeline.hpp"
#include "pgsp/sparse.hpp"

namespace pgsp {

/// Train/test interactions over dense user and item indices.
struct Dataset {
  Index users = 0;
  Index items = 0;
  InteractionMatrix train;
  InteractionMatrix test;
  /// Set when `test` holds a validation split carved from the original train.
  std::optional<std::uint64_t> validation_seed;
  std::vector<std::int64_t> user_ids;  // dense index -> raw id
  std::vector<std::int64_t> item_ids;
  Index train_duplicates = 0;
  Index dropped_overlaps = 0;
};

/// One adjacency line: raw user id and its raw item ids.
struct AdjacencyLine {
  std::int64_t user = 0;
  std::vector<std::int64_t> items;
};

/// Parses "uid iid1 iid2 ..." lines. Blank lines are skipped; anything that is
/// not a non-negative integer raises ParseError with the 1-based line number.
inline std::vector<AdjacencyLine> parse_adjacency(std::istream& is) {
  std::vector<AdjacencyLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::vector<std::int64_t> values;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      const char* tok = p;
      while (p < end && *p != ' ' && *p != '\t' && *p != '\r') ++p;
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(tok, p, v);
      if (ec != std::errc() || ptr != p || v < 0)
        throw ParseError("malformed token '" + std::string(tok, p) + "'", lineno);
      values.push_back(v);
    }
    if (values.empty()) continue;
    out.push_back({values.front(), {values.begin() + 1, values.end()}});
  }
  return out;
}

inline std::vector<AdjacencyLine> read_adjacency_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  try {
    return parse_adjacency(is);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

namespace detail {
inline std::unordered_map<std::int64_t, Index> dense_ids(std::vector<std::int64_t>& raw) {
  std::sort(raw.begin(), raw.end());
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
  std::unordered_map<std::int64_t, Index> map;
  map.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) map.emplace(raw[i], static_cast<Index>(i));
  return map;
}
}  // namespace detail

/// Builds a dataset from parsed train/test lines. Raw ids are remapped to
/// dense indices in ascending raw order, so already-dense ids keep their
/// values. Users or items seen only in test keep zero training degree.
/// Test pairs that also occur in train are dropped and counted.
inline Dataset make_dataset(const std::vector<AdjacencyLine>& train_lines,
                            const std::vector<AdjacencyLine>& test_lines) {
  Dataset ds;
  for (const auto* lines : {&train_lines, &test_lines})
    for (const auto& l : *lines) {
      ds.user_ids.push_back(l.user);
      ds.item_ids.insert(ds.item_ids.end(), l.items.begin(), l.items.end());
    }
  auto umap = detail::dense_ids(ds.user_ids);
  auto imap = detail::dense_ids(ds.item_ids);
  ds.users = static_cast<Index>(ds.user_ids.size());
  ds.items = static_cast<Index>(ds.item_ids.size());

  std::vector<std::pair<Index, Index>> pairs;
  for (const auto& l : train_lines)
    for (auto i : l.items) pairs.emplace_back(umap.at(l.user), imap.at(i));
  ds.train = InteractionMatrix(ds.users, ds.items, std::move(pairs));
  ds.train_duplicates = ds.train.duplicates();

  std::vector<std::pair<Index, Index>> test_pairs;
  for (const auto& l : test_lines) {
    const Index u = umap.at(l.user);
    for (auto i : l.items) {
      const Index j = imap.at(i);
      if (ds.train.contains(u, j)) {
        ++ds.dropped_overlaps;
        continue;
      }
      test_pairs.emplace_back(u, j);
    }
  }
  ds.test = InteractionMatrix(ds.users, ds.items, std::move(test_pairs));
  return ds;
}

inline Dataset load_dataset(const std::string& train_path, const std::string& test_path) {
  return make_dataset(read_adjacency_file(train_path), read_adjacency_file(test_path));
}

/// Moves round(fraction * d) of each user's training items (at most d - 1)
/// into a validation set, sampled uniformly with the given seed. The returned
/// dataset trains on the remainder and evaluates on the validation items.
inline Dataset carve_validation(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidArgument("validation fraction must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<std::pair<Index, Index>> keep, held;
  std::vector<Index> items;
  for (Index u = 0; u < ds.users; ++u) {
    auto row = ds.train.row(u);
    items.assign(row.begin(), row.end());
    const Index d = static_cast<Index>(items.size());
    Index take = static_cast<Index>(std::floor(fraction * static_cast<double>(d) + 0.5));
    take = std::min(take, std::max<Index>(d - 1, 0));
    // Partial Fisher-Yates: the first `take` slots become the held-out items.
    for (Index t = 0; t < take; ++t) {
      std::uniform_int_distribution<Index> pick(t, d - 1);
      std::swap(items[t], items[pick(rng)]);
    }
    for (Index t = 0; t < d; ++t) (t < take ? held : keep).emplace_back(u, items[t]);
  }
  Dataset out;
  out.users = ds.users;
  out.items = ds.items;
  out.user_ids = ds.user_ids;
  out.item_ids = ds.item_ids;
  out.train = InteractionMatrix(ds.users, ds.items, std::move(keep));
  out.test = InteractionMatrix(ds.users, ds.items, std::move(held));
  out.validation_seed = seed;
  return out;
}

struct UserMetrics {
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Recall@K and NDCG@K (binary relevance, ideal DCG over min(K, |T|)
/// positions) for one user; `relevant` must be sorted and non-empty.
inline UserMetrics user_metrics(std::span<const ScoredItem> ranked, std::span<const Index> relevant, Index k) {
  const Index depth = std::min<Index>(k, static_cast<Index>(ranked.size()));
  double dcg = 0.0;
  Index hits = 0;
  for (Index p = 0; p < depth; ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranked[p].item)) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  double idcg = 0.0;
  const Index ideal = std::min<Index>(k, static_cast<Index>(relevant.size()));
  for (Index p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return {static_cast<double>(hits) / static_cast<double>(relevant.size()), dcg / idcg};
}

struct MetricsReport {
  double recall = 0.0;
  double ndcg = 0.0;
  Index k = 0;
  Index users_evaluated = 0;
  /// Per-user values in user order, only for users with a non-empty test set.
  std::vector<UserMetrics> per_user;
  std::map<std::string, double> timings_ms;
};

namespace detail {
// Sums in user order, then divides once.
inline void finish_report(MetricsReport& rep, const std::vector<UserMetrics>& values,
                          const std::vector<char>& evaluated, bool keep_per_user) {
  double rs = 0.0, ns = 0.0;
  for (std::size_t u = 0; u < values.size(); ++u) {
    if (!evaluated[u]) continue;
    rs += values[u].recall;
    ns += values[u].ndcg;
    ++rep.users_evaluated;
    if (keep_per_user) rep.per_user.push_back(values[u]);
  }
  if (rep.users_evaluated > 0) {
    rep.recall = rs / static_cast<double>(rep.users_evaluated);
    rep.ndcg = ns / static_cast<double>(rep.users_evaluated);
  }
}
}  // namespace detail

/// Averages Recall@K / NDCG@K over users with a non-empty test set.
inline MetricsReport compute_metrics(const RankedRecommendations& recs, const InteractionMatrix& test, Index k,
                                     bool keep_per_user = false) {
  if (k < 1 || k > recs.top_n) throw InvalidArgument("metric depth K must be in [1, top_n]");
  if (static_cast<Index>(recs.lists.size()) != test.rows())
    throw DimensionError("recommendations and test set cover different users");
  MetricsReport rep;
  rep.k = k;
  std::vector<UserMetrics> values(recs.lists.size());
  std::vector<char> evaluated(recs.lists.size(), 0);
  for (Index u = 0; u < test.rows(); ++u) {
    if (test.row_degree(u) == 0) continue;
    values[u] = user_metrics(recs.lists[u], test.row(u), k);
    evaluated[u] = 1;
  }
  detail::finish_report(rep, values, evaluated, keep_per_user);
  return rep;
}

inline MetricsReport compute_metrics(const RankedRecommendations& recs, const Dataset& ds, Index k,
                                     bool keep_per_user = false) {
  return compute_metrics(recs, ds.test, k, keep_per_user);
}

struct SweepRow {
  double phi = 0.0;
  MetricsReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// Filtering time shared by every phi (both filter components, once).
  double convolution_ms = 0.0;
};

/// Evaluates every phi against one model: both filter components are
/// computed once per user batch and recombined per phi, so the basis and the
/// convolution are shared across the grid.
inline SweepResult sweep_phi(const PgspModel& model, const InteractionMatrix& target, std::span<const double> phis,
                             Index k, unsigned threads = 1, Index batch_rows = 1024) {
  if (target.rows() != model.users() || target.cols() != model.items())
    throw DimensionError("evaluation target does not match the model");
  if (k < 1) throw InvalidArgument("K must be >= 1");
  for (double phi : phis)
    if (!(phi >= 0.0 && phi <= 1.0)) throw InvalidArgument("phi must be in [0, 1]");
  const Index users = model.users();
  const std::size_t grid = phis.size();
  std::vector<std::vector<UserMetrics>> values(grid, std::vector<UserMetrics>(static_cast<std::size_t>(users)));
  std::vector<char> evaluated(static_cast<std::size_t>(users), 0);
  const Index batch = std::max<Index>(1, batch_rows);
  const Index tasks = (users + batch - 1) / batch;
  std::vector<double> task_conv(static_cast<std::size_t>(tasks), 0.0);
  std::vector<std::vector<double>> task_rank(static_cast<std::size_t>(tasks), std::vector<double>(grid, 0.0));

  parallel_for(tasks, threads, [&](Index t) {
    const Index b = t * batch;
    const Index e = std::min(users, b + batch);
    bool any = false;
    for (Index u = b; u < e; ++u) {
      evaluated[u] = target.row_degree(u) > 0;
      any = any || evaluated[u];
    }
    if (!any) return;
    auto t0 = std::chrono::steady_clock::now();
    DenseMatrix ideal, linear;
    model.component_scores(b, e, ideal, linear);
    task_conv[t] = detail::ms_since(t0);
    std::vector<ScoredItem> list, scratch;
    std::vector<double> row(static_cast<std::size_t>(model.items()));
    for (std::size_t g = 0; g < grid; ++g) {
      t0 = std::chrono::steady_clock::now();
      const double phi = phis[g];
      for (Index u = b; u < e; ++u) {
        if (!evaluated[u]) continue;
        for (Index j = 0; j < model.items(); ++j)
          row[j] = (1.0 - phi) * ideal(u - b, j) + phi * linear(u - b, j);
        rank_row(row, model.train().row(u), k, list, scratch);
        values[g][u] = user_metrics(list, target.row(u), k);
      }
      task_rank[t][g] = detail::ms_since(t0);
    }
  });

  SweepResult res;
  for (double v : task_conv) res.convolution_ms += v;
  for (std::size_t g = 0; g < grid; ++g) {
    SweepRow row;
    row.phi = phis[g];
    row.report.k = k;
    detail::finish_report(row.report, values[g], evaluated, false);
    double ms = 0.0;
    for (const auto& tr : task_rank) ms += tr[g];
    row.report.timings_ms["rank"] = ms;
    res.rows.push_back(std::move(row));
  }
  return res;
}

/// Single-phi evaluation through the batched recommend path.
inline MetricsReport evaluate(const PgspModel& model, const InteractionMatrix& target, double phi, Index k) {
  auto t0 = std::chrono::steady_clock::now();
  RankedRecommendations recs = model.recommend(phi, k);
  const double rec_ms = detail::ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  MetricsReport rep = compute_metrics(recs, target, k);
  rep.timings_ms["convolution_and_rank"] = rec_ms;
  rep.timings_ms["metrics"] = detail::ms_since(t0);
  return rep;
}

/// Parses "start:stop:step" into an inclusive grid.
inline std::vector<double> parse_grid(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw InvalidArgument("bad grid value");
    } catch (const std::exception&) {
      throw InvalidArgument("grid must be start:stop:step, got '" + spec + "'");
    }
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
    throw InvalidArgument("grid must be start:stop:step with step > 0, got '" + spec + "'");
  const auto count = static_cast<Index>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1;
  std::vector<double> grid;
  for (Index i = 0; i < count; ++i) {
    double v = parts[0] + static_cast<double>(i) * parts[2];
    // Snap to a short decimal so 0.1 * 3 prints as 0.3.
    v = std::round(v * 1e12) / 1e12;
    grid.push_back(std::min(v, parts[1]));
  }
  return grid;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
  os << "phi,recall,ndcg\n";
  char buf[128];
  for (const auto& row : res.rows) {
    std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", row.phi, row.report.recall, row.report.ndcg);
    os << buf;
  }
}

}  // namespace pgsp
