// Command-line front end: simulate datasets, fit models, evaluate fits,
// run repeated benchmarks, and sweep the step size.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dst2r/cp_model.hpp"
#include "dst2r/errors.hpp"
#include "dst2r/evaluation.hpp"
#include "dst2r/io.hpp"
#include "dst2r/simulation.hpp"
#include "dst2r/solver.hpp"

namespace fs = std::filesystem;
using namespace dst2r;

namespace {

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write " + path);
  os << text;
  if (!os) throw io_error("write failed for " + path);
}

// Worker cap: DST2R_THREADS wins over hardware concurrency.
std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("DST2R_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw std::invalid_argument("DST2R_THREADS must be a positive integer");
    n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs fn(0..jobs-1) with indexed result slots; fn must only write its own
// slot. Exceptions propagate after all workers join, lowest index first.
void parallel_for(std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = worker_count(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

DenseTensor predict_centered(const FitResult& fr, const DenseTensor& x) {
  DenseTensor xc(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) xc[i] = x[i] - fr.x_mean[i];
  DenseTensor y = predict(xc, fr.model);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += fr.y_mean[i];
  return y;
}

struct CvGrid {
  std::vector<double> alphas;
  std::vector<double> epsilons;
};

// 5-fold split by sample index; picks the (alpha, epsilon) cell with the
// lowest pooled validation squared error. Single-cell grids skip the folds.
SolverConfig tune_by_cv(const std::vector<DenseTensor>& xs,
                        const std::vector<DenseTensor>& ys, SolverConfig base,
                        const CvGrid& grid) {
  const std::vector<double> alphas =
      grid.alphas.empty() ? std::vector<double>{base.alpha} : grid.alphas;
  const std::vector<double> epsilons =
      grid.epsilons.empty() ? std::vector<double>{base.epsilon}
                            : grid.epsilons;
  if (alphas.size() * epsilons.size() <= 1) {
    base.alpha = alphas[0];
    base.epsilon = epsilons[0];
    return base;
  }
  const std::size_t folds = 5;
  if (xs.size() < folds)
    throw std::invalid_argument("cross-validation needs at least 5 samples");

  double best_score = std::numeric_limits<double>::infinity();
  double best_alpha = alphas[0], best_epsilon = epsilons[0];
  for (double a : alphas)
    for (double e : epsilons) {
      SolverConfig cfg = base;
      cfg.alpha = a;
      cfg.epsilon = e;
      double score = 0.0;
      for (std::size_t f = 0; f < folds; ++f) {
        std::vector<DenseTensor> txs, tys, vxs, vys;
        for (std::size_t m = 0; m < xs.size(); ++m) {
          if (m % folds == f) {
            vxs.push_back(xs[m]);
            vys.push_back(ys[m]);
          } else {
            txs.push_back(xs[m]);
            tys.push_back(ys[m]);
          }
        }
        const FitResult fr = fit(txs, tys, cfg);
        for (std::size_t m = 0; m < vxs.size(); ++m) {
          const DenseTensor pred = predict_centered(fr, vxs[m]);
          for (std::size_t c = 0; c < pred.size(); ++c) {
            const double d = vys[m][c] - pred[c];
            score += d * d;
          }
        }
      }
      if (score < best_score) {
        best_score = score;
        best_alpha = a;
        best_epsilon = e;
      }
    }
  base.alpha = best_alpha;
  base.epsilon = best_epsilon;
  return base;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / double(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / double(v.size() - 1));
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scenario;
  std::string spec_file;
  double scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t rank = 0;
  double sparsity = 0.0;
  std::size_t samples = 0;
  double noise_sd = 0.0;
  std::string out;
  CLI::Option *seed_opt = nullptr, *rank_opt = nullptr, *sparsity_opt = nullptr,
              *samples_opt = nullptr, *noise_opt = nullptr;
};

int run_simulate(const SimulateArgs& a) {
  SimSpec spec = a.spec_file.empty()
                     ? make_scenario(a.scenario, a.scale)
                     : sim_spec_from_json(read_text_file(a.spec_file));
  if (a.spec_file.empty() && a.scenario.empty())
    throw std::invalid_argument("simulate: need --scenario or --spec-file");
  if (a.seed_opt->count()) spec.seed = a.seed;
  if (a.rank_opt->count()) spec.rank = a.rank;
  if (a.sparsity_opt->count()) spec.sparsity = a.sparsity;
  if (a.samples_opt->count()) spec.n_samples = a.samples;
  if (a.noise_opt->count()) spec.noise_sd = a.noise_sd;
  spec.validate();
  const SimDataset ds = make_dataset(spec);
  save_dataset(ds, a.out);
  std::cout << "wrote dataset (" << spec.n_samples << " samples) to " << a.out
            << "\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string out;
  std::string config_file;
  double epsilon = 0.0, gamma = 0.0, alpha = 0.0, lambda_floor = 0.0,
         lambda_floor_rel = 0.0, prune_quanta = 0.0;
  std::size_t rank = 0, max_iters = 0, refine = 0;
  std::uint64_t seed = 0;
  bool incremental = false;
  std::vector<double> cv_alpha, cv_epsilon;
  CLI::Option *eps_opt = nullptr, *gamma_opt = nullptr, *alpha_opt = nullptr,
              *floor_opt = nullptr, *floor_rel_opt = nullptr,
              *rank_opt = nullptr, *iters_opt = nullptr, *refine_opt = nullptr,
              *prune_opt = nullptr, *seed_opt = nullptr, *incr_opt = nullptr;
};

SolverConfig resolve_solver_config(const FitArgs& a, std::size_t default_rank) {
  SolverConfig cfg;
  if (!a.config_file.empty())
    cfg = solver_config_from_json(read_text_file(a.config_file));
  else
    cfg.max_rank = default_rank;
  if (a.eps_opt->count()) cfg.epsilon = a.epsilon;
  if (a.gamma_opt->count()) cfg.gamma = a.gamma;
  if (a.alpha_opt->count()) cfg.alpha = a.alpha;
  if (a.floor_opt->count()) cfg.lambda_floor = a.lambda_floor;
  if (a.floor_rel_opt->count()) cfg.lambda_floor_rel = a.lambda_floor_rel;
  if (a.rank_opt->count()) cfg.max_rank = a.rank;
  if (a.iters_opt->count()) cfg.max_iters_per_rank = a.max_iters;
  if (a.refine_opt->count()) cfg.refine_passes = a.refine;
  if (a.prune_opt->count()) cfg.prune_quanta = a.prune_quanta;
  if (a.seed_opt->count()) cfg.seed = a.seed;
  if (a.incr_opt->count()) cfg.incremental_z = a.incremental;
  cfg.validate();
  return cfg;
}

int run_fit(const FitArgs& a) {
  const SimDataset ds = load_dataset(a.data);
  SolverConfig cfg = resolve_solver_config(a, ds.spec.rank);
  cfg = tune_by_cv(ds.xs, ds.ys, cfg, CvGrid{a.cv_alpha, a.cv_epsilon});

  const FitResult fr = fit(ds.xs, ds.ys, cfg);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw io_error("fit: cannot create output directory " + a.out);
  save_model(a.out + "/model.json", fr.model);
  std::ofstream trace_os(a.out + "/trace.csv", std::ios::binary);
  if (!trace_os) throw io_error("fit: cannot write trace.csv in " + a.out);
  fr.trace.write_csv(trace_os);
  write_text_file(a.out + "/config.json", solver_config_to_json(cfg));
  std::cout << "fitted " << fr.model.rank() << " component(s) in "
            << fr.trace.records.size() << " steps; wrote " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string data;
  std::string model_file;
  std::string out;
  double zero_threshold = 1e-8;
};

std::string evaluation_csv(const Dst2rModel& truth, const Dst2rModel& fitted,
                           double zero_threshold) {
  const double err = estimation_error(truth, fitted);
  const SupportReport rep = tpr_fpr(truth, fitted, zero_threshold);
  const double coverage = sparsity_coverage(truth, fitted, zero_threshold);
  std::ostringstream os;
  os << "estimation_error,tpr_mean,fpr_mean,tpr_sum,fpr_sum,sparsity_coverage";
  for (std::size_t j = 0; j < rep.tpr_per_mode.size(); ++j)
    os << ",tpr_mode_" << j;
  for (std::size_t j = 0; j < rep.fpr_per_mode.size(); ++j)
    os << ",fpr_mode_" << j;
  os << "\n";
  os << fmt_g17(err) << ',' << fmt_g17(rep.tpr_mean) << ','
     << fmt_g17(rep.fpr_mean) << ',' << fmt_g17(rep.tpr_sum) << ','
     << fmt_g17(rep.fpr_sum) << ',' << fmt_g17(coverage);
  for (double v : rep.tpr_per_mode) os << ',' << fmt_g17(v);
  for (double v : rep.fpr_per_mode) os << ',' << fmt_g17(v);
  os << "\n";
  return os.str();
}

int run_evaluate(const EvaluateArgs& a) {
  const SimDataset ds = load_dataset(a.data);
  const Dst2rModel fitted = load_model(a.model_file);
  const std::string csv =
      evaluation_csv(ds.true_model, fitted, a.zero_threshold);
  if (a.out.empty())
    std::cout << csv;
  else
    write_text_file(a.out, csv);
  return 0;
}

// ------------------------------------------------------------------- bench

struct BenchSetup {
  SimSpec spec;
  SolverConfig solver;
  CvGrid grid;
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  std::string out;
  bool solver_rank_given = false;
};

BenchSetup bench_setup_from_manifest(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("manifest: expected a JSON object");
  std::string scenario;
  double scale = 1.0;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "scenario" || key == "scale" || key == "repetitions" ||
          key == "seed" || key == "out" || key == "solver" ||
          key == "alpha_grid" || key == "epsilon_grid" || key == "rank" ||
          key == "sparsity" || key == "n_samples" || key == "noise_sd")
        continue;
      (void)value;
      throw std::invalid_argument("manifest: unknown field '" + key + "'");
    }
    scenario = j.at("scenario").get<std::string>();
    if (j.contains("scale")) scale = j.at("scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
  BenchSetup s{make_scenario(scenario, scale), SolverConfig{}, CvGrid{}, 1, 0,
               "", false};
  try {
    if (j.contains("repetitions")) s.reps = j.at("repetitions").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("out")) s.out = j.at("out").get<std::string>();
    if (j.contains("rank")) s.spec.rank = j.at("rank").get<std::size_t>();
    if (j.contains("sparsity")) s.spec.sparsity = j.at("sparsity").get<double>();
    if (j.contains("n_samples"))
      s.spec.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("noise_sd")) s.spec.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("solver")) {
      s.solver = solver_config_from_json(j.at("solver").dump());
      s.solver_rank_given = j.at("solver").contains("max_rank");
    }
    if (j.contains("alpha_grid"))
      s.grid.alphas = j.at("alpha_grid").get<std::vector<double>>();
    if (j.contains("epsilon_grid"))
      s.grid.epsilons = j.at("epsilon_grid").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
  if (s.reps == 0)
    throw std::invalid_argument("manifest: repetitions must be >= 1");
  return s;
}

struct MethodRep {
  bool ok = false;
  double error = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double tpr_sum = 0.0;
  double fpr_sum = 0.0;
  double coverage = 0.0;
};

struct BenchRep {
  MethodRep dst2r;
  MethodRep ols;
};

BenchRep run_bench_rep(const BenchSetup& setup, std::size_t rep) {
  SimSpec spec = setup.spec;
  spec.seed = setup.seed + rep;
  const SimDataset ds = make_dataset(spec);
  BenchRep out;

  try {
    SolverConfig cfg = setup.solver;
    if (!setup.solver_rank_given) cfg.max_rank = spec.rank;
    cfg = tune_by_cv(ds.xs, ds.ys, cfg, setup.grid);
    const FitResult fr = fit(ds.xs, ds.ys, cfg);
    out.dst2r.error = estimation_error(ds.true_model, fr.model);
    const SupportReport rep_s = tpr_fpr(ds.true_model, fr.model);
    out.dst2r.tpr = rep_s.tpr_mean;
    out.dst2r.fpr = rep_s.fpr_mean;
    out.dst2r.tpr_sum = rep_s.tpr_sum;
    out.dst2r.fpr_sum = rep_s.fpr_sum;
    out.dst2r.coverage = sparsity_coverage(ds.true_model, fr.model);
    out.dst2r.ok = true;
  } catch (const std::exception&) {
    out.dst2r.ok = false;
  }

  try {
    const std::vector<double> grid = default_lambda_grid(ds.xs, ds.ys);
    const SparseOlsResult ols = sparse_ols_fit(ds.xs, ds.ys, grid);
    out.ols.error = ols_estimation_error(ols, ds.true_model);
    const EntrySupport es = ols_entry_support(ols, ds.true_model);
    out.ols.tpr = es.tpr;
    out.ols.fpr = es.fpr;
    out.ols.coverage = 1.0 - es.fpr;
    out.ols.ok = true;
  } catch (const std::exception&) {
    out.ols.ok = false;
  }
  return out;
}

void append_bench_row(std::ostringstream& os, const BenchSetup& setup,
                      const char* method, const std::vector<MethodRep>& reps,
                      bool has_mode_sums) {
  std::vector<double> err, tpr, fpr, tpr_sum, fpr_sum, cov;
  std::size_t failed = 0;
  for (const MethodRep& r : reps) {
    if (!r.ok) {
      ++failed;
      continue;
    }
    err.push_back(r.error);
    tpr.push_back(r.tpr);
    fpr.push_back(r.fpr);
    tpr_sum.push_back(r.tpr_sum);
    fpr_sum.push_back(r.fpr_sum);
    cov.push_back(r.coverage);
  }
  os << setup.spec.rank << ',' << fmt_g17(setup.spec.sparsity) << ',' << method
     << ',' << fmt_g17(mean_of(err)) << ',' << fmt_g17(sd_of(err)) << ','
     << fmt_g17(mean_of(tpr)) << ',' << fmt_g17(mean_of(fpr)) << ',';
  if (has_mode_sums)
    os << fmt_g17(mean_of(tpr_sum)) << ',' << fmt_g17(mean_of(fpr_sum));
  else
    os << ',';
  os << ',' << fmt_g17(mean_of(cov)) << ',' << reps.size() << ',' << failed
     << "\n";
}

struct BenchArgs {
  std::string manifest_file;
  std::string scenario;
  double scale = 1.0;
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t rank = 0;
  double sparsity = 0.0;
  std::size_t samples = 0;
  double noise_sd = 0.0;
  double epsilon = 0.0, gamma = 0.0, alpha = 0.0, lambda_floor = 0.0,
         lambda_floor_rel = 0.0, prune_quanta = 0.0;
  std::size_t refine = 0;
  std::vector<double> cv_alpha, cv_epsilon;
  CLI::Option *scenario_opt = nullptr, *scale_opt = nullptr, *reps_opt = nullptr,
              *seed_opt = nullptr, *out_opt = nullptr, *rank_opt = nullptr,
              *sparsity_opt = nullptr, *samples_opt = nullptr,
              *noise_opt = nullptr, *eps_opt = nullptr, *gamma_opt = nullptr,
              *alpha_opt = nullptr, *floor_opt = nullptr,
              *floor_rel_opt = nullptr, *refine_opt = nullptr,
              *prune_opt = nullptr;
};

int run_bench(const BenchArgs& a) {
  BenchSetup setup{SimSpec{}, SolverConfig{}, CvGrid{}, 1, 0, "", false};
  if (!a.manifest_file.empty()) {
    setup = bench_setup_from_manifest(read_text_file(a.manifest_file));
  } else {
    if (!a.scenario_opt->count())
      throw std::invalid_argument("bench: need --manifest or --scenario");
    setup.spec = make_scenario(a.scenario, a.scale);
  }
  if (a.scenario_opt->count() && !a.manifest_file.empty())
    setup.spec = make_scenario(a.scenario, a.scale);
  if (a.reps_opt->count()) setup.reps = a.reps;
  if (a.seed_opt->count()) setup.seed = a.seed;
  if (a.out_opt->count()) setup.out = a.out;
  if (a.rank_opt->count()) setup.spec.rank = a.rank;
  if (a.sparsity_opt->count()) setup.spec.sparsity = a.sparsity;
  if (a.samples_opt->count()) setup.spec.n_samples = a.samples;
  if (a.noise_opt->count()) setup.spec.noise_sd = a.noise_sd;
  if (a.eps_opt->count()) setup.solver.epsilon = a.epsilon;
  if (a.gamma_opt->count()) setup.solver.gamma = a.gamma;
  if (a.alpha_opt->count()) setup.solver.alpha = a.alpha;
  if (a.floor_opt->count()) setup.solver.lambda_floor = a.lambda_floor;
  if (a.floor_rel_opt->count())
    setup.solver.lambda_floor_rel = a.lambda_floor_rel;
  if (a.refine_opt->count()) setup.solver.refine_passes = a.refine;
  if (a.prune_opt->count()) setup.solver.prune_quanta = a.prune_quanta;
  if (!a.cv_alpha.empty()) setup.grid.alphas = a.cv_alpha;
  if (!a.cv_epsilon.empty()) setup.grid.epsilons = a.cv_epsilon;
  if (setup.out.empty())
    throw std::invalid_argument("bench: need --out (or \"out\" in manifest)");
  setup.spec.validate();
  setup.solver.validate();

  const auto start = std::chrono::steady_clock::now();
  std::vector<BenchRep> slots(setup.reps);
  parallel_for(setup.reps,
               [&](std::size_t i) { slots[i] = run_bench_rep(setup, i); });
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  std::vector<MethodRep> dst2r_reps, ols_reps;
  for (const BenchRep& r : slots) {
    dst2r_reps.push_back(r.dst2r);
    ols_reps.push_back(r.ols);
  }
  std::ostringstream os;
  os << "rank,sparsity,method,error_mean,error_sd,tpr,fpr,tpr_sum,fpr_sum,"
        "coverage,reps,failed\n";
  append_bench_row(os, setup, "dst2r", dst2r_reps, true);
  append_bench_row(os, setup, "sparse-ols", ols_reps, false);
  write_text_file(setup.out, os.str());
  std::cerr << "bench finished in " << secs << " s\n";
  std::cout << "wrote " << setup.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string scenario = "2d2d-sweep";
  double scale = 1.0;
  std::uint64_t seed = 0;
  std::size_t reps = 1;
  std::vector<double> epsilons{0.01, 0.05, 0.1, 0.15, 0.5, 1.0};
  std::string out;
  std::string plot;
  std::size_t rank = 0;
  double sparsity = 0.0;
  std::size_t samples = 0;
  double noise_sd = 0.0;
  double gamma = 0.0, alpha = 0.0;
  // Sweep protocol knobs. Stopping at a fixed fraction of lambda_0 keeps the
  // halting point comparable across step sizes; the coverage threshold hides
  // dust smaller than a tenth of a factor's unit mass so that only
  // coarse-step overshoot registers.
  double lambda_floor_rel = 0.02;
  std::size_t refine = 1;
  double zero_threshold = 0.1;
  CLI::Option *rank_opt = nullptr, *sparsity_opt = nullptr,
              *samples_opt = nullptr, *noise_opt = nullptr,
              *gamma_opt = nullptr, *alpha_opt = nullptr;
};

void write_sweep_svg(const std::string& path,
                     const std::vector<double>& epsilons,
                     const std::vector<double>& err,
                     const std::vector<double>& cov) {
  const double w = 640, h = 400, l = 70, r = 70, top = 30, bot = 50;
  const double pw = w - l - r, ph = h - top - bot;
  const std::size_t n = epsilons.size();
  double err_max = 1e-12;
  for (double v : err) err_max = std::max(err_max, v);
  err_max *= 1.05;

  auto xpos = [&](std::size_t i) {
    return n > 1 ? l + pw * double(i) / double(n - 1) : l + pw / 2;
  };
  auto y_err = [&](double v) { return top + ph * (1.0 - v / err_max); };
  auto y_cov = [&](double v) { return top + ph * (1.0 - v); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << l << "\" y1=\"" << top + ph << "\" x2=\"" << l + pw
     << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << l << "\" y1=\"" << top << "\" x2=\"" << l
     << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << l + pw << "\" y1=\"" << top << "\" x2=\"" << l + pw
     << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";

  for (std::size_t i = 0; i < n; ++i) {
    os << "<text x=\"" << xpos(i) << "\" y=\"" << h - bot + 20
       << "\" font-size=\"12\" text-anchor=\"middle\">" << epsilons[i]
       << "</text>\n";
  }
  os << "<text x=\"" << l + pw / 2 << "\" y=\"" << h - 8
     << "\" font-size=\"13\" text-anchor=\"middle\">step size</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fy = top + ph * (1.0 - t / 4.0);
    os << "<text x=\"" << l - 8 << "\" y=\"" << fy + 4
       << "\" font-size=\"11\" text-anchor=\"end\">" << (err_max * t / 4.0)
       << "</text>\n";
    os << "<text x=\"" << l + pw + 8 << "\" y=\"" << fy + 4
       << "\" font-size=\"11\" text-anchor=\"start\">" << (t / 4.0)
       << "</text>\n";
  }

  auto polyline = [&](const std::vector<double>& vals, bool is_err,
                      const char* color) {
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < n; ++i)
      os << xpos(i) << ',' << (is_err ? y_err(vals[i]) : y_cov(vals[i])) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i)
      os << "<circle cx=\"" << xpos(i) << "\" cy=\""
         << (is_err ? y_err(vals[i]) : y_cov(vals[i]))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  };
  polyline(err, true, "#1f6fb2");
  polyline(cov, false, "#c23b22");

  os << "<text x=\"" << l << "\" y=\"" << top - 10
     << "\" font-size=\"13\" fill=\"#1f6fb2\">mean error (left axis)</text>\n";
  os << "<text x=\"" << l + 250 << "\" y=\"" << top - 10
     << "\" font-size=\"13\" fill=\"#c23b22\">sparsity coverage (right axis)"
        "</text>\n";
  os << "</svg>\n";
  write_text_file(path, os.str());
}

int run_sweep(const SweepArgs& a) {
  if (a.epsilons.empty())
    throw std::invalid_argument("sweep-epsilon: empty epsilon list");
  SimSpec spec = make_scenario(a.scenario, a.scale);
  if (a.rank_opt->count()) spec.rank = a.rank;
  if (a.sparsity_opt->count()) spec.sparsity = a.sparsity;
  if (a.samples_opt->count()) spec.n_samples = a.samples;
  if (a.noise_opt->count()) spec.noise_sd = a.noise_sd;
  spec.validate();

  SolverConfig base;
  base.max_rank = spec.rank;
  base.lambda_floor_rel = a.lambda_floor_rel;
  base.refine_passes = a.refine;
  if (a.gamma_opt->count()) base.gamma = a.gamma;
  if (a.alpha_opt->count()) base.alpha = a.alpha;

  struct Cell {
    bool ok = false;
    double error = 0.0;
    double coverage = 0.0;
  };
  const std::size_t n_eps = a.epsilons.size();
  std::vector<Cell> cells(n_eps * a.reps);
  parallel_for(cells.size(), [&](std::size_t idx) {
    const std::size_t ei = idx / a.reps;
    const std::size_t rep = idx % a.reps;
    SimSpec s = spec;
    s.seed = a.seed + rep;
    const SimDataset ds = make_dataset(s);
    SolverConfig cfg = base;
    cfg.epsilon = a.epsilons[ei];
    try {
      const FitResult fr = fit(ds.xs, ds.ys, cfg);
      cells[idx].error = estimation_error(ds.true_model, fr.model);
      cells[idx].coverage =
          sparsity_coverage(ds.true_model, fr.model, a.zero_threshold);
      cells[idx].ok = true;
    } catch (const std::exception&) {
      cells[idx].ok = false;
    }
  });

  std::ostringstream os;
  os << "epsilon,error_mean,error_sd,coverage_mean,coverage_sd,reps,failed\n";
  std::vector<double> err_means, cov_means;
  for (std::size_t ei = 0; ei < n_eps; ++ei) {
    std::vector<double> err, cov;
    std::size_t failed = 0;
    for (std::size_t rep = 0; rep < a.reps; ++rep) {
      const Cell& c = cells[ei * a.reps + rep];
      if (!c.ok) {
        ++failed;
        continue;
      }
      err.push_back(c.error);
      cov.push_back(c.coverage);
    }
    err_means.push_back(mean_of(err));
    cov_means.push_back(mean_of(cov));
    os << fmt_g17(a.epsilons[ei]) << ',' << fmt_g17(mean_of(err)) << ','
       << fmt_g17(sd_of(err)) << ',' << fmt_g17(mean_of(cov)) << ','
       << fmt_g17(sd_of(cov)) << ',' << a.reps << ',' << failed << "\n";
  }
  write_text_file(a.out, os.str());
  if (!a.plot.empty())
    write_sweep_svg(a.plot, a.epsilons, err_means, cov_means);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dst2r: sparse low-rank tensor-on-tensor regression toolkit.\n"
      "CSV schemas: fit trace (iteration,lambda,J,stage,k,i_k,s); evaluate "
      "(estimation_error,tpr_mean,fpr_mean,tpr_sum,fpr_sum,sparsity_coverage,"
      "per-mode rates); bench (rank,sparsity,method,error_mean,error_sd,tpr,"
      "fpr,tpr_sum,fpr_sum,coverage,reps,failed); sweep-epsilon (epsilon,"
      "error_mean,error_sd,coverage_mean,coverage_sd,reps,failed).\n"
      "DST2R_THREADS caps worker threads for bench and sweep repetitions."};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "Generate a synthetic dataset directory");
  c_sim->add_option("--scenario", sim.scenario,
                    "Preset: 3d3d, 3d2d, 2d2d-sweep");
  c_sim->add_option("--spec-file", sim.spec_file,
                    "JSON spec file instead of a scenario preset")
      ->check(CLI::ExistingFile);
  c_sim->add_option("--scale", sim.scale, "Scenario scale factor");
  sim.seed_opt = c_sim->add_option("--seed", sim.seed, "Base RNG seed");
  sim.rank_opt = c_sim->add_option("--rank", sim.rank, "Planted rank");
  sim.sparsity_opt =
      c_sim->add_option("--sparsity", sim.sparsity, "Zero fraction per factor");
  sim.samples_opt =
      c_sim->add_option("--samples", sim.samples, "Number of samples");
  sim.noise_opt =
      c_sim->add_option("--noise-sd", sim.noise_sd, "Response noise sd");
  c_sim->add_option("--out", sim.out, "Output dataset directory")->required();

  FitArgs fa;
  CLI::App* c_fit = app.add_subcommand("fit", "Fit a model to a dataset");
  c_fit->add_option("--data", fa.data, "Dataset directory")->required();
  c_fit->add_option("--out", fa.out, "Output directory")->required();
  c_fit->add_option("--config", fa.config_file, "Solver config JSON file");
  fa.eps_opt = c_fit->add_option("--epsilon", fa.epsilon, "Step size");
  fa.gamma_opt = c_fit->add_option("--gamma", fa.gamma, "Improvement margin");
  fa.alpha_opt = c_fit->add_option("--alpha", fa.alpha, "Ridge weight");
  fa.floor_opt = c_fit->add_option("--lambda-floor", fa.lambda_floor,
                                   "Stop a rank once lambda reaches this");
  fa.floor_rel_opt =
      c_fit->add_option("--lambda-floor-rel", fa.lambda_floor_rel,
                        "Per-rank floor as a fraction of that rank's lambda0");
  fa.rank_opt = c_fit->add_option("--rank", fa.rank, "Maximum rank to fit");
  fa.iters_opt =
      c_fit->add_option("--max-iters", fa.max_iters, "Iteration cap per rank");
  fa.refine_opt =
      c_fit->add_option("--refine", fa.refine, "Backfit cycles over ranks");
  fa.prune_opt = c_fit->add_option(
      "--prune-quanta", fa.prune_quanta,
      "Drop coordinates under this many step quanta at extraction");
  fa.seed_opt = c_fit->add_option("--seed", fa.seed, "Solver seed");
  fa.incr_opt = c_fit->add_flag("--incremental", fa.incremental,
                                "Use incremental cache updates");
  c_fit->add_option("--cv-alpha", fa.cv_alpha,
                    "Alpha grid for 5-fold cross-validation")
      ->delimiter(',');
  c_fit->add_option("--cv-epsilon", fa.cv_epsilon,
                    "Epsilon grid for 5-fold cross-validation")
      ->delimiter(',');

  EvaluateArgs ea;
  CLI::App* c_eval = app.add_subcommand(
      "evaluate", "Compare a fitted model to a dataset's planted model");
  c_eval->add_option("--data", ea.data, "Dataset directory")->required();
  c_eval->add_option("--model", ea.model_file, "Fitted model JSON")->required();
  c_eval->add_option("--out", ea.out, "Report CSV path (default: stdout)");
  c_eval->add_option("--zero-threshold", ea.zero_threshold,
                     "Factor entries at or below this count as zero");

  BenchArgs ba;
  CLI::App* c_bench = app.add_subcommand(
      "bench", "Repeated fits with baseline comparison, aggregated CSV");
  c_bench->add_option("--manifest", ba.manifest_file, "Run manifest JSON")
      ->check(CLI::ExistingFile);
  ba.scenario_opt =
      c_bench->add_option("--scenario", ba.scenario, "Scenario preset");
  ba.scale_opt = c_bench->add_option("--scale", ba.scale, "Scale factor");
  ba.reps_opt = c_bench->add_option("--reps", ba.reps, "Repetitions");
  ba.seed_opt = c_bench->add_option("--seed", ba.seed, "Base seed");
  ba.out_opt = c_bench->add_option("--out", ba.out, "Output CSV path");
  ba.rank_opt = c_bench->add_option("--rank", ba.rank, "Planted rank");
  ba.sparsity_opt =
      c_bench->add_option("--sparsity", ba.sparsity, "Zero fraction");
  ba.samples_opt = c_bench->add_option("--samples", ba.samples, "Sample count");
  ba.noise_opt = c_bench->add_option("--noise-sd", ba.noise_sd, "Noise sd");
  ba.eps_opt = c_bench->add_option("--epsilon", ba.epsilon, "Step size");
  ba.gamma_opt = c_bench->add_option("--gamma", ba.gamma, "Improvement margin");
  ba.alpha_opt = c_bench->add_option("--alpha", ba.alpha, "Ridge weight");
  ba.floor_opt = c_bench->add_option("--lambda-floor", ba.lambda_floor,
                                     "Stop a rank once lambda reaches this");
  ba.floor_rel_opt =
      c_bench->add_option("--lambda-floor-rel", ba.lambda_floor_rel,
                          "Per-rank floor as a fraction of that rank's lambda0");
  ba.refine_opt =
      c_bench->add_option("--refine", ba.refine, "Backfit cycles over ranks");
  ba.prune_opt = c_bench->add_option(
      "--prune-quanta", ba.prune_quanta,
      "Drop coordinates under this many step quanta at extraction");
  c_bench->add_option("--cv-alpha", ba.cv_alpha, "Alpha CV grid")
      ->delimiter(',');
  c_bench->add_option("--cv-epsilon", ba.cv_epsilon, "Epsilon CV grid")
      ->delimiter(',');

  SweepArgs sa;
  CLI::App* c_sweep = app.add_subcommand(
      "sweep-epsilon", "Error and sparsity coverage across step sizes");
  c_sweep->add_option("--scenario", sa.scenario, "Scenario preset");
  c_sweep->add_option("--scale", sa.scale, "Scale factor");
  c_sweep->add_option("--seed", sa.seed, "Base seed");
  c_sweep->add_option("--reps", sa.reps, "Repetitions per step size");
  c_sweep->add_option("--epsilon", sa.epsilons, "Step sizes to sweep")
      ->delimiter(',');
  c_sweep->add_option("--out", sa.out, "Output CSV path")->required();
  c_sweep->add_option("--plot", sa.plot, "Optional SVG chart path");
  sa.rank_opt = c_sweep->add_option("--rank", sa.rank, "Planted rank");
  sa.sparsity_opt =
      c_sweep->add_option("--sparsity", sa.sparsity, "Zero fraction");
  sa.samples_opt = c_sweep->add_option("--samples", sa.samples, "Sample count");
  sa.noise_opt = c_sweep->add_option("--noise-sd", sa.noise_sd, "Noise sd");
  sa.gamma_opt = c_sweep->add_option("--gamma", sa.gamma, "Improvement margin");
  sa.alpha_opt = c_sweep->add_option("--alpha", sa.alpha, "Ridge weight");
  c_sweep->add_option("--lambda-floor-rel", sa.lambda_floor_rel,
                      "Per-rank floor as a fraction of that rank's lambda0");
  c_sweep->add_option("--refine", sa.refine, "Backfit cycles over ranks");
  c_sweep->add_option("--zero-threshold", sa.zero_threshold,
                      "Factor entries at or below this count as zero");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_fit->parsed()) return run_fit(fa);
    if (c_eval->parsed()) return run_evaluate(ea);
    if (c_bench->parsed()) return run_bench(ba);
    if (c_sweep->parsed()) return run_sweep(sa);
  } catch (const io_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const shape_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
