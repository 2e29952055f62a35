// pgsp: build, evaluate and export the graph-signal recommender from the
// command line.
//
//   pgsp eval      --train train.txt --test test.txt [--k 256 --phi 0.3 ...]
//   pgsp sweep     --train train.txt --test test.txt --phi-grid 0:1:0.1
//   pgsp recommend --train train.txt --top-n 20 --out recs.tsv
//   pgsp decompose --train train.txt --basis-cache basis.bin
//
// Exit codes: 0 success, 1 runtime failure, 2 bad usage.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pgsp/pgsp.hpp"

namespace {

using pgsp::Index;
using Json = nlohmann::ordered_json;

struct RunConfig {
  std::string command;
  std::string train;
  std::string test;
  Index k = 256;
  double phi = 0.3;
  double beta = -0.5;
  Index top_n = 20;
  std::uint64_t seed = 42;
  Index batch = 1024;
  unsigned threads = 0;
  double tolerance = 1e-8;
  double validate = 0.0;
  std::string basis_cache;
  std::string out;
  std::string phi_grid = "0:1:0.1";
  bool timings = false;
};

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!std::filesystem::is_regular_file(path)) throw pgsp::Error(std::string(flag) + ": no such file: " + path);
}

void require_output_dir(const std::string& path, const char* flag) {
  if (path.empty()) return;
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw pgsp::Error(std::string(flag) + ": directory does not exist: " + parent.string());
}

void validate_config(const RunConfig& rc) {
  pgsp::FilterConfig fc{rc.k, rc.phi, rc.beta, rc.top_n};
  try {
    fc.validate();
  } catch (const pgsp::InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (rc.batch < 1) throw UsageError("--batch must be >= 1");
  if (!(rc.tolerance > 0.0)) throw UsageError("--tolerance must be > 0");
  if (rc.validate != 0.0 && !(rc.validate > 0.0 && rc.validate < 1.0))
    throw UsageError("--validate must be a fraction in (0, 1)");
  if (rc.command == "sweep") {
    try {
      pgsp::parse_grid(rc.phi_grid);
    } catch (const pgsp::InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }

  require_file(rc.train, "--train");
  const bool needs_test = (rc.command == "eval" || rc.command == "sweep") && rc.validate == 0.0;
  if (needs_test) require_file(rc.test, "--test");
  else if (!rc.test.empty()) require_file(rc.test, "--test");
  if (rc.command == "decompose" && rc.basis_cache.empty()) throw UsageError("decompose needs --basis-cache");
  require_output_dir(rc.out, "--out");
  require_output_dir(rc.basis_cache, "--basis-cache");
}

pgsp::Dataset load(const RunConfig& rc) {
  auto train = pgsp::read_adjacency_file(rc.train);
  std::vector<pgsp::AdjacencyLine> test;
  if (!rc.test.empty()) test = pgsp::read_adjacency_file(rc.test);
  pgsp::Dataset ds = pgsp::make_dataset(train, test);
  if (ds.train_duplicates > 0)
    std::cerr << "warning: collapsed " << ds.train_duplicates << " duplicate training interactions\n";
  if (ds.dropped_overlaps > 0)
    std::cerr << "warning: dropped " << ds.dropped_overlaps << " test interactions already present in train\n";
  if (rc.validate > 0.0) ds = pgsp::carve_validation(ds, rc.validate, rc.seed);
  return ds;
}

pgsp::ModelOptions model_options(const RunConfig& rc) {
  pgsp::ModelOptions opts;
  opts.solver.tolerance = rc.tolerance;
  opts.batch_rows = rc.batch;
  opts.threads = pgsp::resolve_threads(rc.threads);
  return opts;
}

pgsp::FilterConfig filter_config(const RunConfig& rc) { return {rc.k, rc.phi, rc.beta, rc.top_n}; }

// Builds the model, reusing or refreshing the basis cache when one is named.
pgsp::PgspModel build_model(const RunConfig& rc, const pgsp::Dataset& ds) {
  const auto cfg = filter_config(rc);
  const auto opts = model_options(rc);
  if (rc.basis_cache.empty()) return pgsp::PgspModel(ds.train, cfg, rc.seed, opts);

  const Index k = std::min(rc.k, ds.users + ds.items);
  const pgsp::BasisKey key{ds.users, ds.items, k, rc.seed, pgsp::interaction_fingerprint(ds.train), rc.tolerance};
  if (auto cached = pgsp::load_basis(rc.basis_cache, key)) {
    std::cerr << "basis cache hit: " << rc.basis_cache << "\n";
    return pgsp::PgspModel(ds.train, cfg, rc.seed, opts, std::move(*cached));
  }
  std::cerr << "basis cache miss: " << rc.basis_cache << "\n";
  pgsp::PgspModel model(ds.train, cfg, rc.seed, opts);
  pgsp::save_basis(model.basis(), key.fingerprint, rc.basis_cache);
  return model;
}

void report_basis(const pgsp::PgspModel& model) {
  if (model.basis().tie_at_cutoff)
    std::cerr << "warning: eigenvalue tie at the cut-off k = " << model.basis().k
              << "; the basis keeps exactly k vectors\n";
}

Json timings_json(const pgsp::ModelTimings& t) {
  Json j;
  j["graph"] = t.graph_ms;
  j["signal"] = t.signal_ms;
  j["eigensolve"] = t.eigensolve_ms;
  j["projection"] = t.projection_ms;
  j["eigensolves"] = t.eigensolves;
  return j;
}

void emit(const RunConfig& rc, const std::string& text) {
  if (rc.out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream os(rc.out, std::ios::binary | std::ios::trunc);
  if (!os) throw pgsp::Error("cannot open for writing: " + rc.out);
  os << text;
  if (!os) throw pgsp::Error("failed writing: " + rc.out);
}

Json common_fields(const RunConfig& rc, const pgsp::Dataset& ds, const pgsp::PgspModel& model) {
  Json j;
  j["phi"] = rc.phi;
  j["k"] = model.config().k;
  j["beta"] = rc.beta;
  j["seed"] = rc.seed;
  j["top_n"] = rc.top_n;
  j["users"] = ds.users;
  j["items"] = ds.items;
  j["train_interactions"] = ds.train.nnz();
  j["test_interactions"] = ds.test.nnz();
  if (ds.validation_seed) {
    j["validation_fraction"] = rc.validate;
    j["validation_seed"] = *ds.validation_seed;
  }
  return j;
}

int run_eval(const RunConfig& rc) {
  auto t0 = std::chrono::steady_clock::now();
  const auto ds = load(rc);
  const double load_ms = pgsp::detail::ms_since(t0);
  auto model = build_model(rc, ds);
  report_basis(model);
  auto rep = pgsp::evaluate(model, ds.test, rc.phi, rc.top_n);

  const std::string K = std::to_string(rc.top_n);
  Json j;
  j["recall@" + K] = rep.recall;
  j["ndcg@" + K] = rep.ndcg;
  j.update(common_fields(rc, ds, model));
  j["users_evaluated"] = rep.users_evaluated;
  if (rc.timings) {
    Json t = timings_json(model.timings());
    t["load"] = load_ms;
    for (const auto& [name, ms] : rep.timings_ms) t[name] = ms;
    j["timings_ms"] = t;
  }
  emit(rc, j.dump(2) + "\n");
  return 0;
}

int run_sweep(const RunConfig& rc) {
  const auto grid = pgsp::parse_grid(rc.phi_grid);
  const auto ds = load(rc);
  auto model = build_model(rc, ds);
  report_basis(model);
  auto res = pgsp::sweep_phi(model, ds.test, grid, rc.top_n, pgsp::resolve_threads(rc.threads), rc.batch);
  std::ostringstream os;
  pgsp::write_sweep_csv(os, res);
  emit(rc, os.str());
  if (rc.timings) {
    Json t = timings_json(model.timings());
    t["convolution"] = res.convolution_ms;
    Json per_phi = Json::array();
    for (const auto& row : res.rows) per_phi.push_back({{"phi", row.phi}, {"rank", row.report.timings_ms.at("rank")}});
    t["per_phi"] = per_phi;
    std::cerr << Json{{"timings_ms", t}}.dump() << "\n";
  }
  return 0;
}

int run_recommend(const RunConfig& rc) {
  const auto ds = load(rc);
  auto model = build_model(rc, ds);
  report_basis(model);
  auto recs = model.recommend(rc.phi, rc.top_n);
  std::ostringstream os;
  pgsp::write_recommendations_tsv(os, recs, ds.user_ids, ds.item_ids);
  emit(rc, os.str());
  if (rc.timings) std::cerr << Json{{"timings_ms", timings_json(model.timings())}}.dump() << "\n";
  return 0;
}

int run_decompose(const RunConfig& rc) {
  const auto ds = load(rc);
  auto model = build_model(rc, ds);
  report_basis(model);
  const auto& b = model.basis();
  Json j;
  j["users"] = b.users;
  j["items"] = b.items;
  j["k"] = b.k;
  j["seed"] = b.seed;
  j["tolerance"] = b.tolerance;
  j["tie_at_cutoff"] = b.tie_at_cutoff;
  j["eigenvalues"] = b.eigenvalues_a;
  j["cache"] = rc.basis_cache;
  if (rc.timings) j["timings_ms"] = timings_json(model.timings());
  emit(rc, j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig rc;
  CLI::App app{"Graph-signal collaborative filtering: evaluate, sweep, recommend, decompose"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "Flat key=value file; flags given on the command line take precedence");

  app.add_option("--train", rc.train, "Training adjacency file (uid iid iid ...)");
  app.add_option("--test", rc.test, "Test adjacency file");
  app.add_option("--k", rc.k, "Cut-off rank of the ideal low-pass filter")->capture_default_str();
  app.add_option("--phi", rc.phi, "Weight of the linear filter, in [0, 1]")->capture_default_str();
  app.add_option("--beta", rc.beta, "Column normalization exponent, <= 0")->capture_default_str();
  app.add_option("--top-n", rc.top_n, "Recommendation list length and metric depth K")->capture_default_str();
  app.add_option("--seed", rc.seed, "Seed for the eigensolver start block and validation split")
      ->capture_default_str();
  app.add_option("--batch", rc.batch, "Users per scoring batch")->capture_default_str();
  app.add_option("--threads", rc.threads, "Worker threads (0: PGSP_THREADS or all cores)")->capture_default_str();
  app.add_option("--tolerance", rc.tolerance, "Relative eigensolver residual tolerance")->capture_default_str();
  app.add_option("--validate", rc.validate,
                 "Hold out this fraction of each user's training items and evaluate on it instead of --test");
  app.add_option("--basis-cache", rc.basis_cache, "Spectral basis cache file (read if valid, written otherwise)");
  app.add_option("--out", rc.out, "Output file (default: stdout)");
  app.add_option("--phi-grid", rc.phi_grid, "Sweep grid start:stop:step")->capture_default_str();
  app.add_flag("--timings", rc.timings, "Report per-stage wall-clock timings");

  for (const char* name : {"eval", "sweep", "recommend", "decompose"}) {
    app.add_subcommand(name, "")->fallthrough();
  }
  app.get_subcommand("eval")->description("Recall@K and NDCG@K as JSON");
  app.get_subcommand("sweep")->description("Metrics over a phi grid as CSV (phi,recall,ndcg)");
  app.get_subcommand("recommend")->description("Top-n lists as TSV (user, item, rank, score)");
  app.get_subcommand("decompose")->description("Compute and cache the spectral basis only");

  auto usage = [&app] { return app.get_formatter()->make_help(&app, "pgsp", CLI::AppFormatMode::Normal); };
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << usage();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << usage();
    return 2;
  }
  rc.command = app.get_subcommands().front()->get_name();

  try {
    validate_config(rc);
    if (rc.command == "eval") return run_eval(rc);
    if (rc.command == "sweep") return run_sweep(rc);
    if (rc.command == "recommend") return run_recommend(rc);
    return run_decompose(rc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << usage();
    return 2;
  } catch (const pgsp::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << " (max residual";
    double worst = 0.0;
    for (double r : e.residuals()) worst = std::max(worst, r);
    std::cerr << " " << worst << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
