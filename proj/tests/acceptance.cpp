// Acceptance run: one PASS/FAIL/SKIP line per criterion, nonzero exit if any
// criterion fails.
//
// Criterion 7 needs the released benchmark splits. Point PGSP_DATA_DIR at a
// directory holding gowalla/, yelp2018/ and amazon-book/ (each with train.txt
// and test.txt) to run it; PGSP_FULL_K overrides the cut-off rank (default 256).

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "pgsp/oracle.hpp"
#include "pgsp/pgsp.hpp"
#include "support.hpp"

using namespace pgsp;
using pgsp::testing::k_at_gap;
using pgsp::testing::max_abs_diff;
using pgsp::testing::random_dense01;
using pgsp::testing::to_eigen;
using pgsp::testing::to_interactions;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double symmetric_operator_norm(const DenseMatrix& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(a), Eigen::EigenvaluesOnly};
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

AugmentedGraph graph_of(const InteractionMatrix& r) {
  return build_augmented_graph(std::make_shared<const NormalizedSimilarity>(build_normalized_interaction(r)));
}

FilterConfig config(Index k, double phi, double beta, Index top_n = 20) {
  FilterConfig c;
  c.k = k;
  c.phi = phi;
  c.beta = beta;
  c.top_n = top_n;
  return c;
}

// Random instance drawn as the oracle-equivalence property prescribes.
struct Instance {
  pgsp::testing::Dense01 r;
  Index m, n;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(2, 60);
  std::uniform_real_distribution<double> density(0.05, 0.5);
  Instance in;
  in.m = dim(rng);
  in.n = dim(rng);
  in.r = random_dense01(in.m, in.n, density(rng), rng);
  return in;
}

constexpr double kGap = 1e-4;

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int instances = 60;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    auto in = random_instance(rng);
    const auto spectrum = oracle::oracle_run(in.r, {1, 0.0, 0.0}).eigenvalues_a;
    std::uniform_int_distribution<std::size_t> want(1, spectrum.size());
    const std::size_t k = k_at_gap(spectrum, want(rng), kGap);
    const double phi = unit(rng), beta = -unit(rng);
    const auto dm = oracle::oracle_run(in.r, {k, phi, beta});
    ModelOptions opts;
    opts.batch_rows = 1 + i % 16;
    const auto p = run_pgsp(to_interactions(in.r), config(static_cast<Index>(k), phi, beta), 1000 + i, opts);
    worst = std::max(worst, max_abs_diff(p.scores, to_eigen(dm.r_hat)));
  }
  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-7 && secs < 60.0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("%d instances, max |fast - oracle| = %.2e (tol 1e-7), %.1f s (limit 60 s)", instances, worst, secs)};
}

Outcome frequency_response() {
  std::mt19937_64 rng(777);
  double worst_residual = 0.0, worst_projector = 0.0;
  std::size_t pairs = 0;
  auto check_pairs = [&](const AugmentedGraph& graph, const SpectralBasis& basis) {
    const auto lambda_l = basis.laplacian_eigenvalues();
    std::vector<double> u(static_cast<std::size_t>(graph.dim()));
    for (Index c = 0; c < basis.k; ++c) {
      for (Index r = 0; r < graph.dim(); ++r) u[r] = basis.vectors(r, c);
      const auto au = graph.apply(u);
      double s = 0.0;
      for (std::size_t r = 0; r < u.size(); ++r) s += std::pow(au[r] - (1.0 - lambda_l[c]) * u[r], 2);
      worst_residual = std::max(worst_residual, std::sqrt(s));
      ++pairs;
    }
  };

  for (int i = 0; i < 30; ++i) {
    auto in = random_instance(rng);
    const auto spectrum = oracle::oracle_run(in.r, {1, 0.0, 0.0}).eigenvalues_a;
    std::uniform_int_distribution<std::size_t> want(1, spectrum.size());
    const std::size_t k = k_at_gap(spectrum, want(rng), kGap);
    const auto graph = graph_of(to_interactions(in.r));
    const auto basis = truncated_eigenbasis(graph, static_cast<Index>(k), 50 + i);
    check_pairs(graph, basis);
    const auto dm = oracle::oracle_run(in.r, {k, 0.0, 0.0});
    const DenseMatrix proj = basis.vectors * basis.vectors.transpose();
    worst_projector = std::max(worst_projector, symmetric_operator_norm(proj - to_eigen(dm.projector)));
  }
  // A larger sparse instance exercising restarts.
  const auto big = to_interactions(random_dense01(400, 600, 0.01, rng));
  const auto graph = graph_of(big);
  check_pairs(graph, truncated_eigenbasis(graph, 64, 9));

  const bool ok = worst_residual <= 1e-6 && worst_projector <= 1e-7;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("%zu eigenpairs, max ||A u - (1 - lambda) u|| = %.2e (tol 1e-6); projector gap %.2e (tol 1e-7)", pairs,
              worst_residual, worst_projector)};
}

Outcome affinity() {
  std::mt19937_64 rng(31337);
  double worst_affine = 0.0, worst_beta = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto in = random_instance(rng);
    const auto r = to_interactions(in.r);
    PgspModel model(r, config(std::max<Index>(1, (in.m + in.n) / 4), 0.3, -0.5), 5);
    const DenseMatrix p0 = model.predict(0.0).scores;
    const DenseMatrix p1 = model.predict(1.0).scores;
    for (double phi : {0.25, 0.5, 0.75})
      worst_affine = std::max(worst_affine, max_abs_diff(model.predict(phi).scores, (1.0 - phi) * p0 + phi * p1));

    const Index full = in.m + in.n;
    const DenseMatrix ref = run_pgsp(r, config(full, 0.0, 0.0), 5).scores;
    for (double beta : {-0.3, -0.5, -1.0})
      worst_beta = std::max(worst_beta, max_abs_diff(run_pgsp(r, config(full, 0.0, beta), 5).scores, ref));
  }
  const bool ok = worst_affine <= 1e-10 && worst_beta <= 1e-8;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("affine gap %.2e (tol 1e-10); beta round-trip gap %.2e (tol 1e-8)", worst_affine, worst_beta)};
}

Outcome toy_example() {
  // Users a, b, c; items 1, 2, 3 (indices 0..2): a-1, b-1, b-2, c-3.
  const InteractionMatrix r(3, 3, {{0, 0}, {1, 0}, {1, 1}, {2, 2}});
  std::string detail;
  bool ok = true;
  for (double phi : {0.0, 0.3, 1.0}) {
    PgspModel model(r, config(6, phi, 0.0, 2), 1);
    const auto recs = model.recommend(phi, 2);
    const auto& list = recs.lists[0];
    const Index top = list.empty() ? -1 : list[0].item;
    ok = ok && top == 1;
    detail += fmt("%sphi=%.1f -> item %lld", detail.empty() ? "" : ", ", phi, static_cast<long long>(top + 1));
  }
  return {ok ? Verdict::Pass : Verdict::Fail, "user a's top unseen item: " + detail + " (expected item 2)"};
}

Outcome metric_fixtures() {
  auto d = [](int pos) { return 1.0 / std::log2(pos + 1.0); };
  struct Fixture {
    std::vector<Index> ranked, relevant;
    Index k;
    double recall, ndcg;
  };
  const std::vector<Fixture> fixtures{
      {{2, 3}, {2}, 2, 1.0, 1.0},
      {{3, 2}, {2}, 2, 1.0, 1.0 / std::log2(3.0)},
      {{5, 6}, {1, 2}, 2, 0.0, 0.0},
      {{1, 2}, {1, 2}, 2, 1.0, 1.0},
      {{2, 1}, {1, 2}, 2, 1.0, 1.0},
      {{1, 9, 2}, {1, 2}, 3, 1.0, (d(1) + d(3)) / (d(1) + d(2))},
      {{9, 1, 2}, {1, 2, 3}, 3, 2.0 / 3.0, (d(2) + d(3)) / (d(1) + d(2) + d(3))},
      {{7, 8, 4}, {4}, 3, 1.0, 0.5},
      {{1, 2, 3, 4}, {4, 5, 6, 7, 8}, 4, 0.2, d(4) / (d(1) + d(2) + d(3) + d(4))},
      {{3, 1, 2}, {1, 2}, 1, 0.0, 0.0},
      {{1, 3, 2}, {1, 2}, 1, 0.5, 1.0},
      {{5, 4, 3, 2, 1}, {1}, 5, 1.0, 1.0 / std::log2(6.0)},
  };
  double worst = 0.0;
  for (const auto& f : fixtures) {
    std::vector<ScoredItem> list;
    for (std::size_t p = 0; p < f.ranked.size(); ++p) list.push_back({f.ranked[p], -static_cast<double>(p)});
    const auto m = user_metrics(list, f.relevant, f.k);
    worst = std::max({worst, std::abs(m.recall - f.recall), std::abs(m.ndcg - f.ndcg)});
  }
  // The averaged report over the first two fixtures plus a user without test items.
  RankedRecommendations recs;
  recs.top_n = 2;
  recs.lists = {{{2, 1.0}, {3, 0.5}}, {{3, 1.0}, {2, 0.5}}, {{0, 1.0}, {1, 0.5}}};
  const auto rep = compute_metrics(recs, InteractionMatrix(3, 4, {{0, 2}, {1, 2}}), 2);
  worst = std::max(worst, std::abs(rep.ndcg - (1.0 + 1.0 / std::log2(3.0)) / 2.0));
  const bool ok = worst <= 1e-12 && rep.users_evaluated == 2;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("%zu fixtures + averaged report, max error %.2e (tol 1e-12)", fixtures.size(), worst)};
}

Outcome sweep_shape() {
  const auto t0 = Clock::now();
  const auto data = pgsp::testing::clustered_dataset(500, 800, 20, 0.15, 0.005, 0.2, 2024);
  const auto train = pgsp::testing::from_lists(data.train, 800);
  const auto test = pgsp::testing::from_lists(data.test, 800);
  PgspModel model(train, config(10, 0.3, -0.5), 1);
  const auto grid = parse_grid("0:1:0.1");
  const auto res = sweep_phi(model, test, grid, 20);
  double best = -1.0, best_phi = 0.0;
  for (const auto& row : res.rows)
    if (row.report.recall > best) {
      best = row.report.recall;
      best_phi = row.phi;
    }
  const double at0 = res.rows.front().report.recall;
  const double at1 = res.rows.back().report.recall;
  const double secs = seconds_since(t0);
  const bool ok = best > at0 && secs < 300.0;
  return {ok ? Verdict::Pass : Verdict::Fail,
          fmt("500x800, 20 planted blocks, k=10: recall@20 %.4f at phi=0, max %.4f at phi=%.1f, %.4f at phi=1; "
              "%.1f s (limit 300 s)",
              at0, best, best_phi, at1, secs)};
}

struct Target {
  const char* name;
  double recall, ndcg;
};

Outcome full_scale() {
  const char* root = std::getenv("PGSP_DATA_DIR");
  if (!root) return {Verdict::Skip, "set PGSP_DATA_DIR to the released gowalla/yelp2018/amazon-book splits"};
  const Index k = std::getenv("PGSP_FULL_K") ? std::atoll(std::getenv("PGSP_FULL_K")) : 256;
  const std::vector<Target> targets{
      {"gowalla", 0.1916, 0.1605}, {"yelp2018", 0.0710, 0.0583}, {"amazon-book", 0.0712, 0.0587}};
  const std::vector<double> betas{0.0, -0.25, -0.5, -0.75, -1.0};
  const auto grid = parse_grid("0:1:0.1");
  const unsigned threads = resolve_threads();
  bool ok = true;
  int found = 0;
  std::string detail;
  for (const auto& t : targets) {
    const auto dir = std::filesystem::path(root) / t.name;
    if (!std::filesystem::exists(dir / "train.txt") || !std::filesystem::exists(dir / "test.txt")) continue;
    ++found;
    const auto ds = load_dataset((dir / "train.txt").string(), (dir / "test.txt").string());
    if (std::string(t.name) == "gowalla") {
      const Index total = ds.train.nnz() + ds.test.nnz() + ds.dropped_overlaps;
      const bool counts = ds.users == 29858 && ds.items == 40981 && total == 1027370;
      ok = ok && counts;
      detail += fmt("gowalla counts %lld/%lld/%lld%s; ", static_cast<long long>(ds.users),
                    static_cast<long long>(ds.items), static_cast<long long>(total), counts ? "" : " (expected 29858/40981/1027370)");
    }
    // Tune phi and beta on a validation split carved from train, reusing one basis.
    const auto val = carve_validation(ds, 0.1, 42);
    ModelOptions opts;
    opts.threads = threads;
    PgspModel tuned(val.train, config(k, 0.3, 0.0), 42, opts);
    double best = -1.0, best_phi = 0.3, best_beta = 0.0;
    for (double beta : betas) {
      PgspModel m(val.train, config(k, 0.3, beta), 42, opts, tuned.basis());
      for (const auto& row : sweep_phi(m, val.test, grid, 20, threads).rows)
        if (row.report.recall > best) {
          best = row.report.recall;
          best_phi = row.phi;
          best_beta = beta;
        }
    }
    PgspModel final_model(ds.train, config(k, best_phi, best_beta), 42, opts);
    const auto rep = evaluate(final_model, ds.test, best_phi, 20);
    const auto& tm = final_model.timings();
    const bool hit = std::abs(rep.recall - t.recall) <= 0.004 && std::abs(rep.ndcg - t.ndcg) <= 0.004 &&
                     tm.eigensolves == 1;
    ok = ok && hit;
    detail += fmt("%s recall %.4f/%.4f ndcg %.4f/%.4f (phi %.1f beta %.2f; graph %.0f ms, eigensolve %.0f ms x%d, "
                  "projection %.0f ms, scoring %.0f ms); ",
                  t.name, rep.recall, t.recall, rep.ndcg, t.ndcg, best_phi, best_beta, tm.graph_ms, tm.eigensolve_ms,
                  tm.eigensolves, tm.projection_ms, rep.timings_ms.at("convolution_and_rank"));
  }
  if (found == 0) return {Verdict::Skip, std::string("no dataset directories under ") + root};
  return {ok ? Verdict::Pass : Verdict::Fail, detail + fmt("k=%lld, tol 0.004", static_cast<long long>(k))};
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PGSP_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "pgsp_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto data = pgsp::testing::clustered_dataset(200, 300, 8, 0.12, 0.01, 0.2, 99);
  {
    std::ofstream train(dir / "train.txt"), test(dir / "test.txt");
    for (std::size_t u = 0; u < data.train.size(); ++u) {
      train << u;
      for (auto j : data.train[u]) train << ' ' << j;
      train << '\n';
      test << u;
      for (auto j : data.test[u]) test << ' ' << j;
      test << '\n';
    }
  }
  const std::string flags = " --train " + (dir / "train.txt").string() + " --test " + (dir / "test.txt").string() +
                            " --k 24 --phi 0.3 --beta -0.5 --seed 42 --threads 2 --batch 37";
  const std::vector<std::pair<std::string, std::string>> runs{
      {"eval", "metrics.json"}, {"sweep", "sweep.csv"}, {"recommend", "recs.tsv"}};
  bool ok = true;
  std::string detail;
  for (const auto& [cmd, file] : runs) {
    std::uint64_t hashes[2] = {0, 0};
    for (int rep = 0; rep < 2; ++rep) {
      const auto out = dir / (std::to_string(rep) + file);
      if (run_cli(cmd + flags + " --out " + out.string()) != 0) {
        ok = false;
        detail += cmd + " failed; ";
        break;
      }
      const auto bytes = slurp(out);
      ok = ok && !bytes.empty();
      hashes[rep] = fnv1a(bytes);
    }
    ok = ok && hashes[0] == hashes[1];
    detail += fmt("%s %016llx/%016llx; ", file.c_str(), static_cast<unsigned long long>(hashes[0]),
                  static_cast<unsigned long long>(hashes[1]));
  }
  fs::remove_all(dir);
  return {ok ? Verdict::Pass : Verdict::Fail, detail + "two runs each"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 oracle equivalence", oracle_equivalence},
      {"2 frequency response", frequency_response},
      {"3 phi affinity and beta round-trip", affinity},
      {"4 toy graph recommendation", toy_example},
      {"5 metric fixtures", metric_fixtures},
      {"6 phi sweep shape", sweep_shape},
      {"7 full-scale reproduction", full_scale},
      {"8 determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    if (o.verdict == Verdict::Fail) ++failures;
    std::printf("%s  %s: %s\n", tag, name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
